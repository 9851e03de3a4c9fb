//! Run configuration: flat INI-style `[section]` blocks of `key = value` lines.
//!
//! Every key has a default; unknown sections and keys are rejected so that a
//! typo cannot silently fall back to a default. Relative paths are resolved
//! against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use bspinn::market::{DEFAULT_BASIS, DEFAULT_RATE};
use bspinn::metrics::ArvDenominator;
use bspinn::pinn::{Sampling, DEFAULT_COLLOCATION, DEFAULT_EPOCHS, DEFAULT_X_MARGIN};
use chrono::NaiveDate;
use sha2::{Digest, Sha256};

/// Environment variable naming the output directory when the config does not.
pub const OUTPUT_DIR_ENV: &str = "BSPINN_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "bspinn-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalWindow {
    #[default]
    All,
    /// Only the rows held out of training.
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialCondition {
    #[default]
    Payoff,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSection {
    pub rate: f64,
    pub basis: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSection {
    pub series: Option<PathBuf>,
    pub contract: Option<PathBuf>,
    /// Trailing rows excluded from training.
    pub holdout_rows: usize,
    pub eval_window: EvalWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub seed: u64,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda_data: f64,
    pub collocation_count: usize,
    pub x_margin: f64,
    pub sampling: Sampling,
    pub sampling_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub record_every: usize,
    pub arv_denominator: ArvDenominator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSection {
    pub spot0: f64,
    pub strike: f64,
    pub sigma: f64,
    /// Drift of the spot path.
    pub mu: f64,
    /// Number of trading days, the last of which is expiry.
    pub days: usize,
    pub start: NaiveDate,
    /// Half-width of the uniform noise added to option prices.
    pub noise: f64,
    pub seed: u64,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub nodes: usize,
    pub steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub strike: f64,
    /// Falls back to `[market] rate`.
    pub rate: Option<f64>,
    pub sigma: f64,
    pub expiry: f64,
    pub initial: InitialCondition,
    /// Also solve on a 2x finer grid and report the error ratio.
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: MarketSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub output: OutputSection,
    pub synth: SynthSection,
    pub oracle: OracleSection,
    /// SHA-256 of the config text, hex encoded.
    pub hash: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            market: MarketSection {
                rate: DEFAULT_RATE,
                basis: DEFAULT_BASIS,
            },
            data: DataSection::default(),
            model: ModelSection {
                seed: 42,
                hidden: 32,
            },
            training: TrainingSection {
                epochs: DEFAULT_EPOCHS,
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                lambda_data: 1.0,
                collocation_count: DEFAULT_COLLOCATION,
                x_margin: DEFAULT_X_MARGIN,
                sampling: Sampling::Random,
                sampling_seed: 7,
            },
            output: OutputSection {
                directory: None,
                record_every: 100,
                arv_denominator: ArvDenominator::Predicted,
            },
            synth: SynthSection {
                spot0: 30.0,
                strike: 25.0,
                sigma: 0.3,
                mu: 0.1,
                days: 60,
                start: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
                noise: 0.0,
                seed: 1,
                code: "PETRC250".into(),
            },
            oracle: OracleSection {
                nodes: 201,
                steps: 200,
                x_min: -1.5,
                x_max: 1.5,
                strike: 100.0,
                rate: None,
                sigma: 0.2,
                expiry: 1.0,
                initial: InitialCondition::Payoff,
                refine: false,
            },
            hash: hex(&Sha256::digest(b"")),
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| anyhow!("`{key}`: cannot parse `{raw}`: {e}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses `text`, resolving relative paths against `base`. Data paths must
    /// exist.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig {
            hash: hex(&Sha256::digest(text.as_bytes())),
            ..Default::default()
        };
        let mut seen = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !SECTIONS.contains(&section.as_str()) {
                    bail!("line {lineno}: unknown section [{section}]");
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`, got `{line}`"))?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                bail!("line {lineno}: `{key}` appears before any [section]");
            }
            if seen
                .insert((section.clone(), key.to_string()), lineno)
                .is_some()
            {
                bail!("line {lineno}: [{section}] {key} given twice");
            }
            cfg.set(&section, key, value, base)
                .with_context(|| format!("line {lineno}: [{section}]"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str, base: &Path) -> Result<()> {
        let path = |v: &str| base.join(v);
        match (section, key) {
            ("market", "rate") => self.market.rate = parse_value(key, v)?,
            ("market", "basis") => self.market.basis = parse_value(key, v)?,

            ("data", "series") => self.data.series = Some(path(v)),
            ("data", "contract") => self.data.contract = Some(path(v)),
            ("data", "holdout_rows") => self.data.holdout_rows = parse_value(key, v)?,
            ("data", "eval_window") => {
                self.data.eval_window = match v {
                    "all" => EvalWindow::All,
                    "holdout" => EvalWindow::Holdout,
                    _ => bail!("`eval_window` must be all or holdout, got `{v}`"),
                }
            }

            ("model", "seed") => self.model.seed = parse_value(key, v)?,
            ("model", "hidden") => self.model.hidden = parse_value(key, v)?,

            ("training", "epochs") => self.training.epochs = parse_value(key, v)?,
            ("training", "lr") => self.training.lr = parse_value(key, v)?,
            ("training", "beta1") => self.training.beta1 = parse_value(key, v)?,
            ("training", "beta2") => self.training.beta2 = parse_value(key, v)?,
            ("training", "epsilon") => self.training.epsilon = parse_value(key, v)?,
            ("training", "lambda_data") => self.training.lambda_data = parse_value(key, v)?,
            ("training", "collocation_count") => {
                self.training.collocation_count = parse_value(key, v)?
            }
            ("training", "x_margin") => self.training.x_margin = parse_value(key, v)?,
            ("training", "sampling") => self.training.sampling = parse_value(key, v)?,
            ("training", "sampling_seed") => self.training.sampling_seed = parse_value(key, v)?,

            ("output", "directory") => self.output.directory = Some(path(v)),
            ("output", "record_every") => self.output.record_every = parse_value(key, v)?,
            ("output", "arv_denominator") => {
                self.output.arv_denominator = match v {
                    "predicted" => ArvDenominator::Predicted,
                    "actual" => ArvDenominator::Actual,
                    _ => bail!("`arv_denominator` must be predicted or actual, got `{v}`"),
                }
            }

            ("synth", "spot0") => self.synth.spot0 = parse_value(key, v)?,
            ("synth", "strike") => self.synth.strike = parse_value(key, v)?,
            ("synth", "sigma") => self.synth.sigma = parse_value(key, v)?,
            ("synth", "mu") => self.synth.mu = parse_value(key, v)?,
            ("synth", "days") => self.synth.days = parse_value(key, v)?,
            ("synth", "start") => self.synth.start = parse_value(key, v)?,
            ("synth", "noise") => self.synth.noise = parse_value(key, v)?,
            ("synth", "seed") => self.synth.seed = parse_value(key, v)?,
            ("synth", "code") => self.synth.code = v.to_string(),

            ("oracle", "nodes") => self.oracle.nodes = parse_value(key, v)?,
            ("oracle", "steps") => self.oracle.steps = parse_value(key, v)?,
            ("oracle", "x_min") => self.oracle.x_min = parse_value(key, v)?,
            ("oracle", "x_max") => self.oracle.x_max = parse_value(key, v)?,
            ("oracle", "strike") => self.oracle.strike = parse_value(key, v)?,
            ("oracle", "rate") => self.oracle.rate = Some(parse_value(key, v)?),
            ("oracle", "sigma") => self.oracle.sigma = parse_value(key, v)?,
            ("oracle", "expiry") => self.oracle.expiry = parse_value(key, v)?,
            ("oracle", "initial") => {
                self.oracle.initial = match v {
                    "payoff" => InitialCondition::Payoff,
                    "zero" => InitialCondition::Zero,
                    _ => bail!("`initial` must be payoff or zero, got `{v}`"),
                }
            }
            ("oracle", "refine") => self.oracle.refine = parse_value(key, v)?,

            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        for p in [&self.data.series, &self.data.contract]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        if !(self.market.basis > 0.0) {
            bail!("[market] basis must be positive");
        }
        if self.synth.days < 2 {
            bail!("[synth] days must be at least 2");
        }
        if !(self.synth.noise >= 0.0) {
            bail!("[synth] noise must be non-negative");
        }
        Ok(())
    }

    /// Config directory, else the environment variable, else
    /// [`DEFAULT_OUTPUT_DIR`] under the working directory.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn oracle_rate(&self) -> f64 {
        self.oracle.rate.unwrap_or(self.market.rate)
    }
}

const SECTIONS: &[&str] = &[
    "market", "data", "model", "training", "output", "synth", "oracle",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("."))
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let c = parse("").unwrap();
        assert_eq!(
            RunConfig {
                hash: c.hash.clone(),
                ..Default::default()
            },
            c
        );
        assert_eq!(c.training.epochs, 30_000);
        assert_eq!(c.market.rate, 0.1375);
    }

    #[test]
    fn values_and_comments() {
        let c = parse(
            "# run\n[market]\nrate = 0.05\n\n[training]\nepochs = 10 \nsampling = grid\n; note\n[output]\narv_denominator = actual\n",
        )
        .unwrap();
        assert_eq!(c.market.rate, 0.05);
        assert_eq!(c.training.epochs, 10);
        assert_eq!(c.training.sampling, Sampling::Grid);
        assert_eq!(c.output.arv_denominator, ArvDenominator::Actual);
    }

    #[test]
    fn rejects_unknowns_and_garbage() {
        for (text, needle) in [
            ("[market]\nrat = 1\n", "unknown key"),
            ("[mystery]\n", "unknown section"),
            ("rate = 1\n", "before any"),
            ("[market]\nrate\n", "expected"),
            ("[market]\nrate = x\n", "cannot parse"),
            ("[market]\nrate = 1\nrate = 2\n", "twice"),
            ("[data]\nseries = /no/such/file.csv\n", "does not exist"),
        ] {
            let err = format!("{:#}", parse(text).unwrap_err());
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn hash_tracks_text() {
        let a = parse("[model]\nseed = 1\n").unwrap();
        let b = parse("[model]\nseed = 2\n").unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, parse("[model]\nseed = 1\n").unwrap().hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let c = RunConfig::parse("[output]\ndirectory = out\n", Path::new("/tmp/cfg")).unwrap();
        assert_eq!(c.output.directory, Some(PathBuf::from("/tmp/cfg/out")));
        assert_eq!(c.output_dir(), PathBuf::from("/tmp/cfg/out"));
    }
}
