//! Run artefacts: atomic file writes, summaries and manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Write `bytes` to `path` through a temporary sibling and a rename, so a
/// reader never sees a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Scalar results of one run. `metrics` holds the numbers that `summarize`
/// aggregates across seeds; `details` is free-form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: String,
    pub seed: u64,
    /// Set when the run completed but did not converge or certify.
    pub flagged: bool,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// The config file exactly as read.
    pub config: String,
    pub kind: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub flagged: bool,
    pub metrics: BTreeMap<String, f64>,
}

/// Collects the files a run writes into one output directory.
pub struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(name), bytes)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// Write the summary and then the manifest, which lists every file
    /// written so far including itself.
    pub fn finish(mut self, config_text: &str, summary: &RunSummary, wall_clock_seconds: f64) -> Result<RunManifest> {
        self.write_json(SUMMARY_FILE, summary)?;
        let mut outputs = self.written.clone();
        outputs.push(MANIFEST_FILE.to_string());
        let manifest = RunManifest {
            config: config_text.to_string(),
            kind: summary.kind.clone(),
            seed: summary.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds,
            outputs,
            flagged: summary.flagged,
            metrics: summary.metrics.clone(),
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        Ok(manifest)
    }
}

/// Mean, median and range of one metric across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub runs: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub kind: String,
    pub seeds: Vec<u64>,
    pub flagged_runs: usize,
    pub metrics: BTreeMap<String, MetricAggregate>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregate the metrics of several runs of the same kind. Metrics missing
/// from some runs are aggregated over the runs that have them.
pub fn aggregate(summaries: &[RunSummary]) -> Result<Aggregate> {
    let first = summaries.first().ok_or_else(|| crate::Error::Config("nothing to summarise".into()))?;
    if let Some(other) = summaries.iter().find(|s| s.kind != first.kind) {
        return Err(crate::Error::Config(format!("mixed run kinds: {} and {}", first.kind, other.kind)));
    }
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in summaries {
        for (k, &v) in &s.metrics {
            columns.entry(k.clone()).or_default().push(v);
        }
    }
    let metrics = columns
        .into_iter()
        .map(|(k, mut v)| {
            let runs = v.len();
            let mean = v.iter().sum::<f64>() / runs as f64;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (k, MetricAggregate { runs, mean, median: median(&mut v), min, max })
        })
        .collect();
    Ok(Aggregate {
        kind: first.kind.clone(),
        seeds: summaries.iter().map(|s| s.seed).collect(),
        flagged_runs: summaries.iter().filter(|s| s.flagged).count(),
        metrics,
    })
}
