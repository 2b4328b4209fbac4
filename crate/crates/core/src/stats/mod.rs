//! Two-sample t-tests and per-group summaries of measurements.

mod special;

use serde::{Deserialize, Serialize};

pub use special::{ln_gamma, regularized_incomplete_beta, student_t_two_sided};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("group `{label}` has {n} values; at least 2 are needed")]
    TooFewValues { label: String, n: usize },
    #[error("group `{label}` contains a non-finite value")]
    NonFinite { label: String },
    #[error("both groups have zero variance and equal means; t is undefined")]
    Undefined,
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
}

/// Measurements of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        let label = label.into();
        if values.len() < 2 {
            return Err(StatsError::TooFewValues { label, n: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { label });
        }
        Ok(Self { label, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (self.n() - 1) as f64
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestVariant {
    /// Student's test with pooled variance.
    #[default]
    Pooled,
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    Welch,
}

impl std::str::FromStr for TTestVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pooled" | "student" => Ok(Self::Pooled),
            "welch" => Ok(Self::Welch),
            _ => Err(format!("unknown t-test variant `{s}` (pooled or welch)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub degrees_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Standard error of the difference of means.
    pub sed: f64,
    pub variant: TTestVariant,
}

/// Independent two-sample, two-sided t-test of `mean(a) - mean(b)`.
pub fn t_test(a: &SampleGroup, b: &SampleGroup, variant: TTestVariant) -> Result<TTestResult, StatsError> {
    for g in [a, b] {
        if g.n() < 2 {
            return Err(StatsError::TooFewValues {
                label: g.label.clone(),
                n: g.n(),
            });
        }
    }
    let (n1, n2) = (a.n() as f64, b.n() as f64);
    let (v1, v2) = (a.variance(), b.variance());
    let diff = a.mean() - b.mean();
    let pooled_df = n1 + n2 - 2.0;
    let (sed, df) = match variant {
        TTestVariant::Pooled => {
            let sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / pooled_df;
            ((sp2 * (1.0 / n1 + 1.0 / n2)).sqrt(), pooled_df)
        }
        TTestVariant::Welch => {
            let (s1, s2) = (v1 / n1, v2 / n2);
            let se2 = s1 + s2;
            let df = if se2 > 0.0 {
                se2 * se2 / (s1 * s1 / (n1 - 1.0) + s2 * s2 / (n2 - 1.0))
            } else {
                pooled_df
            };
            (se2.sqrt(), df)
        }
    };
    if sed == 0.0 {
        if diff == 0.0 {
            return Err(StatsError::Undefined);
        }
        return Ok(TTestResult {
            t: diff.signum() * f64::INFINITY,
            degrees_freedom: df,
            p_value: 0.0,
            sed,
            variant,
        });
    }
    let t = diff / sed;
    Ok(TTestResult {
        t,
        degrees_freedom: df,
        p_value: student_t_two_sided(t, df),
        sed,
        variant,
    })
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) q`), the inclusive convention. `values` must be sorted.
pub fn quantile_sorted(values: &[f64], q: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

pub const QUARTILE_METHOD: &str = "linear interpolation between order statistics (inclusive)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl GroupSummary {
    pub fn of(g: &SampleGroup) -> Self {
        let mut v = g.values.clone();
        v.sort_by(f64::total_cmp);
        Self {
            label: g.label.clone(),
            n: g.n(),
            mean: g.mean(),
            sd: g.sd(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// `100 (mean_b - mean_a) / mean_a`; `None` when `mean_a` is zero.
    pub relative_difference_pct: Option<f64>,
    /// `None` when t is undefined (both groups constant and equal).
    pub test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub quartile_method: String,
    pub variant: TTestVariant,
    pub groups: Vec<GroupSummary>,
    /// Every pair `(i, j)` with `i < j`, in input order.
    pub comparisons: Vec<PairComparison>,
}

pub fn group_report(groups: &[SampleGroup], metric: &str, variant: TTestVariant) -> Result<ComparisonReport, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    let mut comparisons = Vec::new();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            let ma = a.mean();
            let test = match t_test(a, b, variant) {
                Ok(t) => Some(t),
                Err(StatsError::Undefined) => None,
                Err(e) => return Err(e),
            };
            comparisons.push(PairComparison {
                a: a.label.clone(),
                b: b.label.clone(),
                relative_difference_pct: (ma != 0.0).then(|| 100.0 * (b.mean() - ma) / ma),
                test,
            });
        }
    }
    Ok(ComparisonReport {
        metric: metric.to_string(),
        quartile_method: QUARTILE_METHOD.to_string(),
        variant,
        groups: groups.iter().map(GroupSummary::of).collect(),
        comparisons,
    })
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("metric: {}\nquartiles: {}\n\n", self.metric, self.quartile_method);
        s.push_str(&format!(
            "{:<16} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
            "group", "n", "mean", "sd", "min", "q1", "median", "q3", "max"
        ));
        for g in &self.groups {
            s.push_str(&format!(
                "{:<16} {:>7} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4}\n",
                g.label, g.n, g.mean, g.sd, g.min, g.q1, g.median, g.q3, g.max
            ));
        }
        s.push('\n');
        for c in &self.comparisons {
            let diff = c
                .relative_difference_pct
                .map_or("n/a".to_string(), |d| format!("{d:+.2}%"));
            match &c.test {
                Some(t) => s.push_str(&format!(
                    "{} vs {}: difference {diff}, t = {:.4}, df = {:.2}, p = {:.3e} ({:?})\n",
                    c.a, c.b, t.t, t.degrees_freedom, t.p_value, t.variant
                )),
                None => s.push_str(&format!("{} vs {}: difference {diff}, t undefined\n", c.a, c.b)),
            }
        }
        s
    }
}
