//! Experiment descriptions and results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, HarnessResult};

/// What to run: an experiment name, the seed, free-form parameters, and
/// where artifacts go. Identical specs produce byte-identical outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            name: name.into(),
            seed,
            params: BTreeMap::new(),
            output_dir: output_dir.into(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: Value) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let spec: ExperimentSpec =
            serde_json::from_str(&text).map_err(|e| HarnessError::BadSpec {
                path: path.to_path_buf(),
                problem: e.to_string(),
            })?;
        Ok(spec)
    }

    /// Reject parameters the experiment does not understand; typos should
    /// fail loudly, not silently fall back to defaults.
    pub fn check_allowed(&self, allowed: &[&str]) -> HarnessResult<()> {
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(HarnessError::param(
                    key.clone(),
                    format!(
                        "not a parameter of '{}'; accepted: {}",
                        self.name,
                        allowed.join(", ")
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn f64_param(&self, name: &str, default: f64) -> HarnessResult<f64> {
        match self.params.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| HarnessError::param(name, format!("expected a finite number, got {v}"))),
        }
    }

    pub fn usize_param(&self, name: &str, default: usize) -> HarnessResult<usize> {
        match self.params.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| HarnessError::param(name, format!("expected a non-negative integer, got {v}"))),
        }
    }

    pub fn str_param(&self, name: &str, default: &str) -> HarnessResult<String> {
        match self.params.get(name) {
            None => Ok(default.to_string()),
            Some(v) => v
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| HarnessError::param(name, format!("expected a string, got {v}"))),
        }
    }
}

/// A named pass/fail tied to a registered criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: &str, passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            criterion: criterion.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What a run produced: named scalars, the CSV files written, and the
/// verdicts. Serialized as the run's `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub seed: u64,
    pub summary_stats: BTreeMap<String, f64>,
    pub series_files: Vec<PathBuf>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentResult {
    pub fn new(spec: &ExperimentSpec) -> Self {
        ExperimentResult {
            experiment: spec.name.clone(),
            seed: spec.seed,
            summary_stats: BTreeMap::new(),
            series_files: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn stat(&mut self, name: impl Into<String>, value: f64) {
        self.summary_stats.insert(name.into(), value);
    }

    pub fn verdict(&mut self, criterion: &str, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict::new(criterion, passed, detail));
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn find(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }
}
