//! One directory per job under `<data_root>/jobs/<id>/`:
//!
//! * `input.<ext>` the uploaded image,
//! * `job.json` state and parameter snapshot,
//! * `results.json` merged detections and measurements (done jobs),
//! * `results.csv`, `masks.zip` exports, written on first request.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::analysis::AnalysisOutput;
use crate::job::{is_valid_id, now_ms, JobRecord, JobState};

pub const JOB_FILE: &str = "job.json";
pub const RESULTS_FILE: &str = "results.json";
pub const RESTART_ERROR: &str = "interrupted by service restart";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("job {0} not found")]
    NotFound(String),
    #[error("job {id} is {state}")]
    WrongState { id: String, state: JobState },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` next to `path` and renames over it, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub struct JobStore {
    jobs_dir: PathBuf,
    staging_dir: PathBuf,
    jobs: RwLock<BTreeMap<String, JobRecord>>,
    results: Mutex<HashMap<String, Arc<AnalysisOutput>>>,
}

impl JobStore {
    /// Opens (creating if needed) the store and recovers persisted jobs.
    /// Jobs left running by a previous process are marked failed; the ids
    /// of queued jobs are returned, oldest first, for resubmission.
    pub fn open(data_root: &Path) -> Result<(Self, Vec<String>), StoreError> {
        let jobs_dir = data_root.join("jobs");
        let staging_dir = data_root.join("staging");
        fs::create_dir_all(&jobs_dir).map_err(io_err(&jobs_dir))?;
        if staging_dir.exists() {
            fs::remove_dir_all(&staging_dir).map_err(io_err(&staging_dir))?;
        }
        fs::create_dir_all(&staging_dir).map_err(io_err(&staging_dir))?;

        let mut jobs = BTreeMap::new();
        for entry in fs::read_dir(&jobs_dir).map_err(io_err(&jobs_dir))? {
            let entry = entry.map_err(io_err(&jobs_dir))?;
            let path = entry.path().join(JOB_FILE);
            if !path.is_file() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let record: JobRecord = match serde_json::from_str(&text) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    continue;
                }
            };
            jobs.insert(record.id.clone(), record);
        }

        let store = Self {
            jobs_dir,
            staging_dir,
            jobs: RwLock::new(jobs),
            results: Mutex::new(HashMap::new()),
        };
        let mut queued = Vec::new();
        let snapshot = store.list();
        for r in snapshot {
            match r.state {
                JobState::Running => {
                    log::warn!("job {} was running at shutdown; marking failed", r.id);
                    store.update(&r.id, |rec| {
                        rec.state = JobState::Failed;
                        rec.finished_ms = Some(now_ms());
                        rec.error = Some(RESTART_ERROR.into());
                    })?;
                }
                JobState::Queued => queued.push(r.id),
                _ => {}
            }
        }
        Ok((store, queued))
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.jobs_dir.join(id)
    }

    pub fn staging_dir(&self) -> &Path {
        &self.staging_dir
    }

    pub fn input_path(&self, record: &JobRecord) -> PathBuf {
        self.job_dir(&record.id).join(&record.input)
    }

    /// Moves a prepared directory (holding the input) into place and
    /// persists the queued record.
    pub fn insert(&self, record: JobRecord, prepared: &Path) -> Result<(), StoreError> {
        let dir = self.job_dir(&record.id);
        fs::rename(prepared, &dir).map_err(io_err(&dir))?;
        self.persist(&record)?;
        self.jobs.write().expect("job map poisoned").insert(record.id.clone(), record);
        Ok(())
    }

    fn persist(&self, record: &JobRecord) -> Result<(), StoreError> {
        let path = self.job_dir(&record.id).join(JOB_FILE);
        let bytes = serde_json::to_vec_pretty(record).expect("job record serializes");
        write_atomic(&path, &bytes)
    }

    pub fn get(&self, id: &str) -> Result<JobRecord, StoreError> {
        self.jobs
            .read()
            .expect("job map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// All jobs, oldest first.
    pub fn list(&self) -> Vec<JobRecord> {
        let mut all: Vec<JobRecord> = self.jobs.read().expect("job map poisoned").values().cloned().collect();
        all.sort_by(|a, b| a.created_ms.cmp(&b.created_ms).then_with(|| a.id.cmp(&b.id)));
        all
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> Result<JobRecord, StoreError> {
        let mut jobs = self.jobs.write().expect("job map poisoned");
        let rec = jobs.get_mut(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let mut next = rec.clone();
        f(&mut next);
        self.persist(&next)?;
        *rec = next.clone();
        Ok(next)
    }

    /// Applies a state transition; anything other than
    /// queued -> running -> done/failed is refused.
    pub fn transition(&self, id: &str, next: JobState, error: Option<String>) -> Result<JobRecord, StoreError> {
        let current = self.get(id)?.state;
        if !current.can_become(next) {
            return Err(StoreError::WrongState {
                id: id.to_string(),
                state: current,
            });
        }
        self.update(id, |r| {
            r.state = next;
            match next {
                JobState::Running => r.started_ms = Some(now_ms()),
                JobState::Done | JobState::Failed => r.finished_ms = Some(now_ms()),
                JobState::Queued => {}
            }
            r.error = error;
        })
    }

    pub fn save_results(&self, id: &str, output: AnalysisOutput) -> Result<(), StoreError> {
        let path = self.job_dir(id).join(RESULTS_FILE);
        let bytes = serde_json::to_vec(&output).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        write_atomic(&path, &bytes)?;
        self.results
            .lock()
            .expect("results cache poisoned")
            .insert(id.to_string(), Arc::new(output));
        Ok(())
    }

    /// Results of a done job.
    pub fn results(&self, id: &str) -> Result<Arc<AnalysisOutput>, StoreError> {
        let record = self.get(id)?;
        if record.state != JobState::Done {
            return Err(StoreError::WrongState {
                id: id.to_string(),
                state: record.state,
            });
        }
        if let Some(r) = self.results.lock().expect("results cache poisoned").get(id) {
            return Ok(r.clone());
        }
        let path = self.job_dir(id).join(RESULTS_FILE);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let output: AnalysisOutput = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let output = Arc::new(output);
        self.results
            .lock()
            .expect("results cache poisoned")
            .insert(id.to_string(), output.clone());
        Ok(output)
    }

    /// Path of an export file, producing it with `make` on first use.
    pub fn export_file(
        &self,
        id: &str,
        name: &str,
        make: impl FnOnce(&AnalysisOutput, &Path) -> Result<(), String>,
    ) -> Result<PathBuf, StoreError> {
        let output = self.results(id)?;
        let path = self.job_dir(id).join(name);
        if !path.is_file() {
            let tmp = self
                .job_dir(id)
                .join(format!("{name}.{}.tmp", uuid::Uuid::new_v4().simple()));
            make(&output, &tmp).map_err(|message| StoreError::Corrupt {
                path: tmp.clone(),
                message,
            })?;
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
        }
        Ok(path)
    }

    pub fn contains(&self, id: &str) -> bool {
        is_valid_id(id) && self.jobs.read().expect("job map poisoned").contains_key(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::job::{new_job_id, JobParams};

    fn prepared(store: &JobStore) -> (JobRecord, PathBuf) {
        let rec = JobRecord::new(new_job_id(), "input.png".into(), None, JobParams::default());
        let dir = store.staging_dir().join(&rec.id);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("input.png"), b"x").unwrap();
        (rec, dir)
    }

    #[test]
    fn lifecycle_and_illegal_transitions() {
        let root = tempfile::tempdir().unwrap();
        let (store, requeue) = JobStore::open(root.path()).unwrap();
        assert!(requeue.is_empty());
        let (rec, dir) = prepared(&store);
        store.insert(rec.clone(), &dir).unwrap();
        assert!(store.job_dir(&rec.id).join(JOB_FILE).is_file());
        assert!(matches!(
            store.transition(&rec.id, JobState::Done, None),
            Err(StoreError::WrongState { .. })
        ));
        store.transition(&rec.id, JobState::Running, None).unwrap();
        assert!(matches!(store.results(&rec.id), Err(StoreError::WrongState { .. })));
        let failed = store.transition(&rec.id, JobState::Failed, Some("boom".into())).unwrap();
        assert_eq!(failed.error.as_deref(), Some("boom"));
        assert!(failed.finished_ms.is_some());
        assert!(store.transition(&rec.id, JobState::Running, None).is_err());
        assert!(matches!(store.get("nope"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn reopen_recovers_states() {
        let root = tempfile::tempdir().unwrap();
        let (queued, running) = {
            let (store, _) = JobStore::open(root.path()).unwrap();
            let (a, da) = prepared(&store);
            store.insert(a.clone(), &da).unwrap();
            let (b, db) = prepared(&store);
            store.insert(b.clone(), &db).unwrap();
            store.transition(&b.id, JobState::Running, None).unwrap();
            (a.id, b.id)
        };
        let (store, requeue) = JobStore::open(root.path()).unwrap();
        assert_eq!(requeue, vec![queued.clone()]);
        assert_eq!(store.get(&queued).unwrap().state, JobState::Queued);
        let r = store.get(&running).unwrap();
        assert_eq!(r.state, JobState::Failed);
        assert_eq!(r.error.as_deref(), Some(RESTART_ERROR));
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"1").unwrap();
        write_atomic(&p, b"2").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"2");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
