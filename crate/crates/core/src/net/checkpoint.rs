//! Plain-text checkpoint layout, one item per line, LF endings:
//!
//! ```text
//! bspinn-checkpoint 1
//! architecture 2-32-32-1-tanh
//! seed <u64>
//! steps <u64>
//! meta <key> <value>          (zero or more, order preserved)
//! params <count>
//! <value>                     (count lines, W1 b1 W2 b2 W3 b3, row-major)
//! ```
//!
//! Values use Rust's shortest round-trip exponent notation, so a parse of a
//! written checkpoint reproduces every parameter bit for bit.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::MlpParams;

pub const CHECKPOINT_MAGIC: &str = "bspinn-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub steps: u64,
    pub params: MlpParams,
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "architecture {}", self.params.architecture());
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "steps {}", self.steps);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        let values = self.params.as_slice();
        let _ = writeln!(out, "params {}", values.len());
        for v in values {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("checkpoint truncated before {what}")))
        };
        let bad = |line: usize, msg: String| Error::Row { line, message: msg };

        let (n, magic) = next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(n, format!("not a checkpoint header: `{magic}`")));
        }
        let (n, arch) = next("architecture")?;
        let hidden = arch
            .strip_prefix("architecture 2-")
            .and_then(|rest| rest.strip_suffix("-1-tanh"))
            .and_then(|mid| {
                let (a, b) = mid.split_once('-')?;
                (a == b).then(|| a.parse::<usize>().ok()).flatten()
            })
            .filter(|&h| h > 0)
            .ok_or_else(|| bad(n, format!("unsupported architecture line `{arch}`")))?;

        let mut field = |key: &str| -> Result<u64> {
            let (n, line) = next(key)?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(n, format!("expected `{key} <integer>`, got `{line}`")))
        };
        let seed = field("seed")?;
        let steps = field("steps")?;

        let mut meta = Vec::new();
        let count = loop {
            let (n, line) = next("params")?;
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.push((k.to_string(), v.to_string()));
            } else if let Some(c) = line.strip_prefix("params ") {
                break c
                    .parse::<usize>()
                    .map_err(|_| bad(n, format!("bad parameter count `{c}`")))?;
            } else {
                return Err(bad(n, format!("unexpected line `{line}`")));
            }
        };
        if count != MlpParams::param_count(hidden) {
            return Err(Error::Shape(format!(
                "{count} parameters recorded for hidden width {hidden}"
            )));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next("parameter values")?;
            data.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(n, format!("bad parameter `{line}`")))?,
            );
        }
        Ok(Checkpoint {
            seed,
            steps,
            params: MlpParams::from_vec(hidden, data)?,
            meta,
        })
    }
}
