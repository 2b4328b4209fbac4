use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fiberscope_core::stats::{group_report, ComparisonReport, SampleGroup, TTestVariant};

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// `LABEL=results.csv`; repeat for each group. Several files may share a
    /// label and are pooled.
    #[arg(long = "group", required = true, value_parser = parse_group)]
    pub groups: Vec<(String, PathBuf)>,
    /// CSV column to compare.
    #[arg(long, default_value = "length_um")]
    pub metric: String,
    /// Only rows of this class (`fiber` or `vessel`).
    #[arg(long)]
    pub class: Option<String>,
    /// `pooled` (equal variances) or `welch`.
    #[arg(long, default_value = "pooled")]
    pub variant: TTestVariant,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn parse_group(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected LABEL=PATH, got `{s}`")),
    }
}

/// Values of `metric` from one results CSV.
pub fn read_column(path: &Path, metric: &str, class: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let Some(col) = headers.iter().position(|h| h == metric) else {
        bail!("{}: no column `{metric}`", path.display());
    };
    let class_col = headers.iter().position(|h| h == "class");
    if class.is_some() && class_col.is_none() {
        bail!("{}: no `class` column to filter on", path.display());
    }
    let mut values = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        if let (Some(want), Some(c)) = (class, class_col) {
            if !row.get(c).is_some_and(|v| v.eq_ignore_ascii_case(want)) {
                continue;
            }
        }
        let raw = row.get(col).unwrap_or_default();
        let v: f64 = raw
            .trim()
            .parse()
            .with_context(|| format!("{}: row {}: `{raw}` is not a number", path.display(), line + 2))?;
        values.push(v);
    }
    Ok(values)
}

pub fn run(args: &CompareArgs) -> Result<ComparisonReport> {
    let mut labels: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (label, path) in &args.groups {
        let v = read_column(path, &args.metric, args.class.as_deref())?;
        match labels.iter().position(|l| l == label) {
            Some(i) => values[i].extend(v),
            None => {
                labels.push(label.clone());
                values.push(v);
            }
        }
    }
    let groups = labels
        .into_iter()
        .zip(values)
        .map(|(l, v)| SampleGroup::new(l, v))
        .collect::<Result<Vec<_>, _>>()?;
    let report = group_report(&groups, &args.metric, args.variant)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}
