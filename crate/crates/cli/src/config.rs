//! TOML run configuration. Every field is optional; command-line flags win.

use std::path::{Path, PathBuf};

use blwave_core::localized::AxisSpec;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand this file is meant for; checked against the one invoked.
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<AxisSpec>,
    pub space: Option<SpaceConfig>,
    /// Weight spec string, e.g. `power:alpha=0.5`.
    pub weight: Option<String>,
    pub tol: Option<f64>,
    pub depth: Option<u32>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: Option<String>,
    pub s: Option<f64>,
    pub p: Option<f64>,
    /// TOML `inf` gives `q = ∞`.
    pub q: Option<f64>,
    pub dim: Option<usize>,
    pub r0: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        for a in &self.axes {
            if a.n == 0 || a.kk > 1 || (a.kk == 1 && a.m == 0) {
                return Err(format!("invalid axis {a:?}"));
            }
        }
        if self.axes.len() > blwave_core::localized::MAX_DIM {
            return Err(format!("at most {} axes", blwave_core::localized::MAX_DIM));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(format!("tol must lie in (0, 1), got {t}"));
            }
        }
        if let Some(sp) = &self.space {
            if let Some(k) = &sp.kind {
                if k != "b" && k != "f" {
                    return Err(format!("space kind must be b or f, got {k}"));
                }
            }
            if sp.dim.is_some_and(|d| d == 0 || d > blwave_core::localized::MAX_DIM) {
                return Err("space dim must be 1..=3".into());
            }
        }
        if self.threads == Some(0) {
            return Err("threads must be positive".into());
        }
        Ok(())
    }

    pub fn space(&self) -> SpaceConfig {
        self.space.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = r#"
command = "equiv"
weight = "power:alpha=0.5"
depth = 6
seed = 7

[[axes]]
n = 3
m = 0
kk = 0
k = 0
s = 0

[space]
kind = "b"
s = 1.0
p = 2.0
q = inf
dim = 1
r0 = 1.5
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.space().q, Some(f64::INFINITY));
        let again = RunConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("tol = 2.0").is_err());
        assert!(RunConfig::parse("unknown = 1").is_err());
        assert!(RunConfig::parse("[space]\nkind = \"c\"").is_err());
        assert!(RunConfig::parse("[[axes]]\nn = 0\nm = 0\nkk = 0\nk = 0\ns = 0").is_err());
    }
}
