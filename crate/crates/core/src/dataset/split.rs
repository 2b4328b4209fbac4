use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    /// Ids in input order.
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn is_train(&self, id: &str) -> bool {
        self.train.iter().any(|t| t == id)
    }
}

/// Shuffled partition of independent samples with
/// `|train| = round(train_fraction * n)`.
pub fn split_dataset(ids: &[String], train_fraction: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let samples: Vec<(String, String)> = ids.iter().map(|i| (i.clone(), i.clone())).collect();
    split_grouped(&samples, train_fraction, seed)
}

/// Partition of `(id, group)` samples that never separates a group, so crops
/// and augmentations of one image stay on one side.
///
/// Groups are shuffled with `seed` and assigned to train while they fit under
/// `round(train_fraction * n)`; with singleton groups the train size is
/// exact, otherwise it is the closest reachable from below in that order.
pub fn split_grouped(samples: &[(String, String)], train_fraction: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    if samples.len() < 2 {
        return Err(DatasetError::InvalidSplit(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidSplit(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut seen = HashSet::new();
    if let Some((id, _)) = samples.iter().find(|(id, _)| !seen.insert(id.as_str())) {
        return Err(DatasetError::InvalidSplit(format!("duplicate sample id `{id}`")));
    }
    let mut groups: Vec<&str> = Vec::new();
    let mut sizes: HashMap<&str, usize> = HashMap::new();
    for (_, g) in samples {
        let n = sizes.entry(g.as_str()).or_insert(0);
        if *n == 0 {
            groups.push(g);
        }
        *n += 1;
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (train_fraction * samples.len() as f64).round() as usize;
    let mut in_train = HashSet::new();
    let mut count = 0;
    for g in groups {
        if count + sizes[g] <= target {
            count += sizes[g];
            in_train.insert(g);
        }
    }
    let (train, val): (Vec<_>, Vec<_>) = samples.iter().partition(|(_, g)| in_train.contains(g.as_str()));
    Ok(DatasetSplit {
        train: train.into_iter().map(|(id, _)| id.clone()).collect(),
        val: val.into_iter().map(|(id, _)| id.clone()).collect(),
        train_fraction,
        seed,
    })
}
