//! JSON run configuration for `kglab experiment`.

use std::path::Path;

use kglab_core::approx_fn::ApproxFunction;
use kglab_core::counting::{CongruenceClass, ProblemInstance, ThetaMatrix};
use kglab_core::experiments::{GridSpec, RunConfig, ThetaSource};
use kglab_core::norms::NormSpec;
use kglab_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub m: usize,
    pub n: usize,
    pub norm1: String,
    pub norm2: String,
    pub psi: String,
    #[serde(rename = "mod")]
    pub modulus: u64,
    pub res: Vec<i64>,
    pub theta: ThetaSpec,
    pub grid: GridFile,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub kind: String,
    pub count: Option<usize>,
    pub values: Option<Vec<ThetaValue>>,
}

/// A `ϑ` either as `"r11,r12;r21,r22"` or as nested rows.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ThetaValue {
    Text(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub tmin: f64,
    pub tmax: f64,
    pub points: usize,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "config",
            input: e.to_string(),
            reason: "does not match the config schema".into(),
        })
    }

    pub fn into_run_config(self, seed_override: Option<u64>) -> Result<RunConfig> {
        let instance = ProblemInstance::new(
            NormSpec::parse(&self.norm1, self.m)?,
            NormSpec::parse(&self.norm2, self.n)?,
            ApproxFunction::parse(&self.psi)?,
            CongruenceClass::new(self.res, self.modulus)?,
        )?;
        let thetas = match self.theta.kind.as_str() {
            "uniform" => {
                if self.theta.values.is_some() {
                    return Err(Error::InvalidParameter("theta.values is only allowed with kind \"list\"".into()));
                }
                let count = self
                    .theta
                    .count
                    .ok_or_else(|| Error::InvalidParameter("theta.count is required for kind \"uniform\"".into()))?;
                ThetaSource::Uniform { count }
            }
            "list" => {
                let values = self
                    .theta
                    .values
                    .ok_or_else(|| Error::InvalidParameter("theta.values is required for kind \"list\"".into()))?;
                let list = values
                    .into_iter()
                    .map(|v| match v {
                        ThetaValue::Text(s) => ThetaMatrix::parse(&s, self.m, self.n),
                        ThetaValue::Rows(rows) => {
                            if rows.len() != self.m || rows.iter().any(|r| r.len() != self.n) {
                                return Err(Error::InvalidParameter(format!("theta must be {}×{}", self.m, self.n)));
                            }
                            ThetaMatrix::new(self.m, self.n, rows.concat())
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some(c) = self.theta.count {
                    if c != list.len() {
                        return Err(Error::InvalidParameter("theta.count disagrees with theta.values".into()));
                    }
                }
                ThetaSource::Explicit(list)
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "theta.kind must be \"uniform\" or \"list\", got {other:?}"
                )))
            }
        };
        Ok(RunConfig {
            instance,
            thetas,
            grid: GridSpec::new(self.grid.tmin, self.grid.tmax, self.grid.points)?,
            seed: seed_override.unwrap_or(self.seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "m": 2, "n": 1, "norm1": "sup", "norm2": "sup", "psi": "pow:1:0.5",
        "mod": 2, "res": [1, 1, 1],
        "theta": {"kind": "uniform", "count": 1},
        "grid": {"tmin": 10, "tmax": 1000, "points": 3},
        "seed": 5
    }"#;

    #[test]
    fn minimal_config() {
        let cfg = ConfigFile::parse(MINIMAL).unwrap().into_run_config(None).unwrap();
        assert_eq!(cfg.num_thetas(), 1);
        assert_eq!(cfg.grid.values().len(), 3);
        assert_eq!(cfg.seed, 5);
        let cfg = ConfigFile::parse(MINIMAL).unwrap().into_run_config(Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn theta_lists() {
        let text = MINIMAL.replace(
            r#"{"kind": "uniform", "count": 1}"#,
            r#"{"kind": "list", "values": ["0.1;0.2", [[0.3], [0.4]]]}"#,
        );
        let cfg = ConfigFile::parse(&text).unwrap().into_run_config(None).unwrap();
        assert_eq!(cfg.theta(1).entries(), &[0.3, 0.4]);
    }

    #[test]
    fn schema_violations() {
        assert!(ConfigFile::parse(&MINIMAL.replace("\"seed\": 5", "\"seed\": 5, \"extra\": 1")).is_err());
        assert!(ConfigFile::parse(&MINIMAL.replace("\"psi\": \"pow:1:0.5\",", "")).is_err());
        let bad_kind = MINIMAL.replace("\"uniform\"", "\"sobol\"");
        assert!(ConfigFile::parse(&bad_kind).unwrap().into_run_config(None).is_err());
        let bad_res = MINIMAL.replace("[1, 1, 1]", "[1, 1]");
        assert!(ConfigFile::parse(&bad_res).unwrap().into_run_config(None).is_err());
    }
}
