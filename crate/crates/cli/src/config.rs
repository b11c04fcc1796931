//! Flat `key = value` run configuration shared by the subcommands.
//!
//! Lines are `key = value`; `#` starts a comment. List values are comma
//! separated. Keys use snake_case and match the long flag names with `-`
//! replaced by `_`. Relative paths are taken relative to the working
//! directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use flexconn::inference::{DEFAULT_INTENSITY_CLAMP, DEFAULT_PERCENTILE, DEFAULT_THRESHOLD};
use flexconn::network::{DEFAULT_DEPTH, LAST_BANK_FILTERS};
use flexconn::targets::{DEFAULT_PATCH, DEFAULT_SIGMA, DEFAULT_VALIDATION_FRACTION};
use flexconn::training::{
    TrainingConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_EVAL_BATCH_SIZE, DEFAULT_LEARNING_RATE,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // network
    pub depth: usize,
    pub last_filters: usize,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub patch: usize,
    pub sigma: f64,
    pub seed: u64,
    // inference and preprocessing
    pub threshold: f64,
    pub percentile: f64,
    pub intensity_clamp: f64,
    pub slice_axis: usize,
    // paths
    pub t1: Vec<PathBuf>,
    pub flair: Vec<PathBuf>,
    pub mask: Vec<PathBuf>,
    pub out_model: Option<PathBuf>,
    pub out_log: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub model2: Option<PathBuf>,
    pub wm_mask: Option<PathBuf>,
    pub out_membership: Option<PathBuf>,
    pub out_seg: Option<PathBuf>,
    pub overlay_dir: Option<PathBuf>,
    pub auto: Vec<PathBuf>,
    pub manual: Vec<PathBuf>,
    pub compare: Vec<PathBuf>,
    pub membership: Vec<PathBuf>,
    pub truth: Vec<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub out_summary: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            last_filters: LAST_BANK_FILTERS,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            eval_batch_size: DEFAULT_EVAL_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            patch: DEFAULT_PATCH,
            sigma: DEFAULT_SIGMA,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            percentile: DEFAULT_PERCENTILE,
            intensity_clamp: DEFAULT_INTENSITY_CLAMP,
            slice_axis: 2,
            t1: Vec::new(),
            flair: Vec::new(),
            mask: Vec::new(),
            out_model: None,
            out_log: None,
            model: None,
            model2: None,
            wm_mask: None,
            out_membership: None,
            out_seg: None,
            overlay_dir: None,
            auto: Vec::new(),
            manual: Vec::new(),
            compare: Vec::new(),
            membership: Vec::new(),
            truth: Vec::new(),
            out_csv: None,
            out_summary: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "depth",
    "last_filters",
    "epochs",
    "batch_size",
    "eval_batch_size",
    "learning_rate",
    "validation_fraction",
    "patch",
    "sigma",
    "seed",
    "threshold",
    "percentile",
    "intensity_clamp",
    "slice_axis",
    "t1",
    "flair",
    "mask",
    "out_model",
    "out_log",
    "model",
    "model2",
    "wm_mask",
    "out_membership",
    "out_seg",
    "overlay_dir",
    "auto",
    "manual",
    "compare",
    "membership",
    "truth",
    "out_csv",
    "out_summary",
];

fn parse<T: FromStr>(key: &str, values: &[String]) -> Result<T, CliError> {
    let [v] = values else {
        return Err(CliError::Usage(format!("{key} takes exactly one value, got {}", values.len())));
    };
    v.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}")))
}

fn one_path(key: &str, values: &[String]) -> Result<Option<PathBuf>, CliError> {
    let s: String = parse(key, values)?;
    Ok(Some(PathBuf::from(s)))
}

fn paths(values: &[String]) -> Vec<PathBuf> {
    values
        .iter()
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

pub fn is_key(key: &str) -> bool {
    KEYS.contains(&normalize_key(key).as_str())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, values: &[String]) -> Result<(), CliError> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "depth" => self.depth = parse(k, values)?,
            "last_filters" => self.last_filters = parse(k, values)?,
            "epochs" => self.epochs = parse(k, values)?,
            "batch_size" => self.batch_size = parse(k, values)?,
            "eval_batch_size" => self.eval_batch_size = parse(k, values)?,
            "learning_rate" => self.learning_rate = parse(k, values)?,
            "validation_fraction" => self.validation_fraction = parse(k, values)?,
            "patch" => self.patch = parse(k, values)?,
            "sigma" => self.sigma = parse(k, values)?,
            "seed" => self.seed = parse(k, values)?,
            "threshold" => self.threshold = parse(k, values)?,
            "percentile" => self.percentile = parse(k, values)?,
            "intensity_clamp" => self.intensity_clamp = parse(k, values)?,
            "slice_axis" => self.slice_axis = parse(k, values)?,
            "t1" => self.t1 = paths(values),
            "flair" => self.flair = paths(values),
            "mask" => self.mask = paths(values),
            "auto" => self.auto = paths(values),
            "manual" => self.manual = paths(values),
            "compare" => self.compare = paths(values),
            "membership" => self.membership = paths(values),
            "truth" => self.truth = paths(values),
            "out_model" => self.out_model = one_path(k, values)?,
            "out_log" => self.out_log = one_path(k, values)?,
            "model" => self.model = one_path(k, values)?,
            "model2" => self.model2 = one_path(k, values)?,
            "wm_mask" => self.wm_mask = one_path(k, values)?,
            "out_membership" => self.out_membership = one_path(k, values)?,
            "out_seg" => self.out_seg = one_path(k, values)?,
            "overlay_dir" => self.overlay_dir = one_path(k, values)?,
            "out_csv" => self.out_csv = one_path(k, values)?,
            "out_summary" => self.out_summary = one_path(k, values)?,
            _ => return Err(CliError::Usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = normalize_key(key);
            if seen.contains(&key) {
                return Err(CliError::Usage(format!("{origin}:{}: duplicate key {key:?}", lineno + 1)));
            }
            self.set(&key, &[value.trim().to_string()])
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", lineno + 1)))?;
            seen.push(key);
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Core(flexconn::Error::io(path, e)))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            eval_batch_size: self.eval_batch_size,
            learning_rate: self.learning_rate,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
            patch: self.patch,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.depth, c.last_filters, c.patch), (5, 8, 35));
        assert_eq!((c.epochs, c.batch_size), (20, 128));
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.threshold, 0.30);
        assert_eq!(c.sigma, 1.5);
    }

    #[test]
    fn every_key_is_settable() {
        for key in KEYS {
            let mut c = RunConfig::default();
            c.set(key, &["1".to_string()]).unwrap();
        }
    }

    #[test]
    fn parses_text() {
        let mut c = RunConfig::default();
        c.apply_text("# run\ndepth = 3\nt1 = a.nii, b.nii\nlearning-rate=0.001  # faster\n\n", "x")
            .unwrap();
        assert_eq!(c.depth, 3);
        assert_eq!(c.t1, vec![PathBuf::from("a.nii"), PathBuf::from("b.nii")]);
        assert_eq!(c.learning_rate, 0.001);
    }

    #[test]
    fn rejects_bad_lines() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("depht = 3", "x").is_err());
        assert!(c.apply_text("depth 3", "x").is_err());
        assert!(c.apply_text("depth = three", "x").is_err());
        assert!(c.apply_text("depth = 3\ndepth = 4", "x").is_err());
    }
}
