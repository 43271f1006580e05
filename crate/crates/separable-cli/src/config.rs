//! Run configuration, read from TOML.
//!
//! ```toml
//! dgp = "toy1.toml"        # or: data = "trial.csv" with horizon and [[covariates]]
//! n = 5000
//! seed = 1
//! ay_block = []
//! regimes = ["ay=1;ad=0", "ay=0;ad=1"]
//! estimators = ["nu2", "aalen_johansen"]
//!
//! [bootstrap]
//! resamples = 500
//! seed = 7
//!
//! [[sensitivity]]
//! kind = "piecewise"
//! values = [0.0, 0.01]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use separable::estimators::EstimatorTag;
use separable::event_history::{Covariate, CovariateKind, CovariateSchema, Timing};
use separable::weights::{LinearOffset, NuisanceFormulas, PiecewiseOffset, SensitivityFunction};
use separable::Regime;

use crate::error::{usage, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub dgp: Option<PathBuf>,
    pub horizon: Option<usize>,
    /// Subjects to simulate when the source is a DGP.
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub locf: bool,
    #[serde(default)]
    pub covariates: Vec<CovariateEntry>,
    pub models: Option<ModelEntry>,
    #[serde(default)]
    pub ay_block: Vec<String>,
    pub regimes: Option<Vec<String>>,
    pub estimators: Option<Vec<String>>,
    #[serde(default)]
    pub bootstrap: BootstrapEntry,
    #[serde(default)]
    pub sensitivity: Vec<OffsetEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateEntry {
    pub name: String,
    /// `binary`, `categorical` or `continuous`.
    pub kind: String,
    pub levels: Option<u32>,
    /// `baseline` or `time_varying`.
    #[serde(default = "time_varying")]
    pub timing: String,
}

fn time_varying() -> String {
    "time_varying".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub y: String,
    pub d: String,
    pub c: String,
    pub a_lad: String,
    pub a_full: String,
    pub a_past: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapEntry {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_resamples() -> usize {
    500
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapEntry {
    fn default() -> Self {
        BootstrapEntry { resamples: default_resamples(), seed: 0, level: default_level() }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffsetEntry {
    Piecewise { values: Vec<f64> },
    Linear { covariate: String, intercept: f64, slope: f64 },
}

impl OffsetEntry {
    pub fn label(&self) -> String {
        match self {
            OffsetEntry::Piecewise { values } => {
                let v: Vec<String> = values.iter().map(f64::to_string).collect();
                format!("piecewise:{}", v.join("|"))
            }
            OffsetEntry::Linear { covariate, intercept, slope } => format!("linear:{covariate}:{intercept}:{slope}"),
        }
    }

    pub fn build(&self, schema: &CovariateSchema) -> CliResult<Box<dyn SensitivityFunction>> {
        Ok(match self {
            OffsetEntry::Piecewise { values } => {
                if values.is_empty() {
                    return Err(usage("a piecewise offset needs at least one value"));
                }
                Box::new(PiecewiseOffset(values.clone()))
            }
            OffsetEntry::Linear { covariate, intercept, slope } => {
                let index = schema
                    .index_of(covariate)
                    .ok_or_else(|| usage(format!("sensitivity covariate {covariate} is not in the schema")))?;
                Box::new(LinearOffset { covariate: index, intercept: *intercept, slope: *slope })
            }
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        match (&cfg.data, &cfg.dgp) {
            (Some(_), Some(_)) => return Err(usage("config: give either data or dgp, not both")),
            (None, None) => return Err(usage("config: missing key data (or dgp)")),
            (Some(_), None) if cfg.horizon.is_none() => return Err(usage("config: missing key horizon")),
            (None, Some(_)) if cfg.n.is_none() => return Err(usage("config: missing key n (subjects to simulate)")),
            _ => {}
        }
        let b = &cfg.bootstrap;
        if !(b.level > 0.0 && b.level < 1.0) {
            return Err(usage(format!("config: bootstrap level {} outside (0, 1)", b.level)));
        }
        Ok(cfg)
    }

    /// Resolves relative paths against the directory holding the config.
    pub fn resolve(&mut self, base: &Path) {
        for p in [&mut self.data, &mut self.dgp].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// The schema declared under `[[covariates]]`.
    pub fn declared_schema(&self) -> CliResult<CovariateSchema> {
        let mut entries = Vec::new();
        for c in &self.covariates {
            let kind = match (c.kind.as_str(), c.levels) {
                ("binary", None | Some(2)) => CovariateKind::Binary,
                ("categorical", Some(n)) => CovariateKind::Categorical(n),
                ("categorical", None) => return Err(usage(format!("covariate {} needs levels", c.name))),
                ("continuous", None) => CovariateKind::Continuous,
                (k, _) => return Err(usage(format!("covariate {}: unsupported kind {k:?} with these levels", c.name))),
            };
            let timing = match c.timing.as_str() {
                "baseline" => Timing::Baseline,
                "time_varying" => Timing::TimeVarying,
                t => return Err(usage(format!("covariate {}: unknown timing {t:?}", c.name))),
            };
            entries.push(Covariate::new(c.name.clone(), kind, timing));
        }
        Ok(CovariateSchema::new(entries)?)
    }

    pub fn regimes(&self) -> CliResult<Vec<Regime>> {
        match &self.regimes {
            None => Ok(Regime::all().to_vec()),
            Some(list) => {
                let mut out = Vec::new();
                for s in list {
                    let r = Regime::parse(s)?;
                    if !out.contains(&r) {
                        out.push(r);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Defaults to the outcome-weighted estimator and the weighted
    /// Aalen-Johansen total effect.
    pub fn estimators(&self) -> CliResult<Vec<EstimatorTag>> {
        let names = self.estimators.clone().unwrap_or_else(|| vec!["nu2".into(), "aalen_johansen".into()]);
        let mut out = Vec::new();
        for n in names {
            let tag = EstimatorTag::parse(&n).map_err(|_| usage(format!("unknown estimator {n:?}")))?;
            if tag == EstimatorTag::Nu2Dagger {
                return Err(usage("nu2_dagger is run by the sensitivity command"));
            }
            if !out.contains(&tag) {
                out.push(tag);
            }
        }
        Ok(out)
    }

    /// Saturated models unless `[models]` is given; continuous covariates
    /// need explicit formulas.
    pub fn formulas(&self, schema: &CovariateSchema) -> CliResult<NuisanceFormulas> {
        match &self.models {
            Some(m) => Ok(NuisanceFormulas::parse(&m.y, &m.d, &m.c, &m.a_lad, &m.a_full, &m.a_past)?),
            None if schema.all_discrete() => Ok(NuisanceFormulas::saturated()),
            None => Err(usage("config: missing key models (required with continuous covariates)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_dgp_config() {
        let c = RunConfig::parse("dgp = \"x.toml\"\nn = 10").unwrap();
        assert_eq!(c.regimes().unwrap().len(), 4);
        assert_eq!(c.estimators().unwrap(), vec![EstimatorTag::Nu2, EstimatorTag::AalenJohansen]);
        assert_eq!(c.bootstrap.resamples, 500);
    }

    #[test]
    fn missing_and_unknown_keys_are_usage_errors() {
        for text in ["n = 10", "data = \"d.csv\"", "dgp = \"x.toml\"", "dgp = \"x.toml\"\nn = 1\nbogus = 2"] {
            assert_eq!(RunConfig::parse(text).unwrap_err().exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn offsets() {
        let c = RunConfig::parse(
            "dgp = \"x.toml\"\nn = 1\n[[sensitivity]]\nkind = \"piecewise\"\nvalues = [0.0, 0.5]\n\
             [[sensitivity]]\nkind = \"linear\"\ncovariate = \"L\"\nintercept = 0.0\nslope = 0.1\n",
        )
        .unwrap();
        assert_eq!(c.sensitivity[0].label(), "piecewise:0|0.5");
        assert_eq!(c.sensitivity[1].label(), "linear:L:0:0.1");
    }
}
