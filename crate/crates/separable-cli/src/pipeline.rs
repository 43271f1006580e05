//! Data loading, estimation runs and their outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use separable::estimators::{
    bootstrap_series, effect_contrasts, estimate_nu1, estimate_nu2, estimate_nu2_dagger, gformula_plugin,
    ipcw_aalen_johansen, ipcw_empirical_cif, BootstrapIntervals, BootstrapOptions, Cause, EffectEstimate, EffectKind,
    EstimatorTag, RiskCurve,
};
use separable::event_history::{read_long_csv, validate, EventHistoryDataset, ReadOptions};
use separable::glm::{CovariatePartition, FitOptions, FittedModel};
use separable::oracle::{simulate, DgpSpec};
use separable::par::Execution;
use separable::weights::{fit_nuisance, weight_trace, NuisanceFormulas, NuisanceSet, Representation};
use separable::{Regime, Result as LibResult};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{usage, CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// The dataset named by the config, simulated from a DGP or read from CSV,
/// with a manifest entry describing where it came from. CSV input must pass
/// validation.
pub fn load_dataset(cfg: &RunConfig, seed: Option<u64>) -> CliResult<(EventHistoryDataset, Value)> {
    if let Some(path) = &cfg.dgp {
        let spec = DgpSpec::from_path(path)?;
        let seed = seed.unwrap_or(cfg.seed);
        let n = cfg.n.unwrap_or_default();
        let ds = simulate(&spec, n, seed, Execution::Parallel)?;
        let source = json!({"dgp": path.display().to_string(), "dgp_sha256": file_digest(path)?, "n": n, "seed": seed});
        return Ok((ds, source));
    }
    let path = cfg.data.as_ref().ok_or_else(|| usage("config: missing key data"))?;
    let schema = cfg.declared_schema()?;
    let horizon = cfg.horizon.ok_or_else(|| usage("config: missing key horizon"))?;
    let ds = read_long_csv(path, &schema, horizon, ReadOptions { locf: cfg.locf })?;
    let report = validate(&ds);
    if !report.is_clean() {
        eprintln!("{report}");
        return Err(CliError::Findings(report.findings.len()));
    }
    Ok((ds, json!({"data": path.display().to_string(), "data_sha256": file_digest(path)?})))
}

/// What to estimate, resolved against the dataset's schema.
pub struct Plan {
    pub partition: CovariatePartition,
    pub formulas: NuisanceFormulas,
    pub regimes: Vec<Regime>,
    pub tags: Vec<EstimatorTag>,
}

impl Plan {
    pub fn new(cfg: &RunConfig, ds: &EventHistoryDataset) -> CliResult<Self> {
        let names: Vec<&str> = cfg.ay_block.iter().map(String::as_str).collect();
        Ok(Plan {
            partition: CovariatePartition::with_ay(ds.schema(), &names)?,
            formulas: cfg.formulas(ds.schema())?,
            regimes: cfg.regimes()?,
            tags: cfg.estimators()?,
        })
    }

    fn needs_models(&self) -> bool {
        self.tags.iter().any(|t| *t != EstimatorTag::GFormula)
    }

    pub fn fit(&self, ds: &EventHistoryDataset) -> LibResult<NuisanceSet> {
        fit_nuisance(ds, &self.formulas, &self.partition, &FitOptions::default())
    }
}

pub struct Estimates {
    pub curves: Vec<RiskCurve>,
    pub effects: Vec<(EstimatorTag, EffectEstimate)>,
    pub models: Option<NuisanceSet>,
}

impl Estimates {
    /// Reported curve values followed by the effect points, in output order.
    pub fn flatten(&self) -> Vec<f64> {
        let curves = self.curves.iter().flat_map(|c| c.reported());
        curves.chain(self.effects.iter().flat_map(|(_, e)| e.point.iter().copied())).collect()
    }
}

pub fn estimate(ds: &EventHistoryDataset, plan: &Plan) -> LibResult<Estimates> {
    let models = if plan.needs_models() { Some(plan.fit(ds)?) } else { None };
    let mut curves = Vec::new();
    let mut effects = Vec::new();
    for &tag in &plan.tags {
        let start = curves.len();
        match tag {
            EstimatorTag::AalenJohansen | EstimatorTag::IpcwCif => {
                let ns = models.as_ref().expect("models are fitted for weighted estimators");
                let arm = |a| match tag {
                    EstimatorTag::AalenJohansen => ipcw_aalen_johansen(ds, ns, Cause::Outcome, a),
                    _ => ipcw_empirical_cif(ds, ns, a),
                };
                let (c0, c1) = (arm(0)?, arm(1)?);
                let point: Vec<f64> = c1.values.iter().zip(&c0.values).map(|(a, b)| a - b).collect();
                let total =
                    EffectEstimate { kind: EffectKind::Total, ci_low: point.clone(), ci_high: point.clone(), point, resamples: 0 };
                curves.extend([c0, c1]);
                effects.push((tag, total));
                continue;
            }
            EstimatorTag::Nu1 | EstimatorTag::Nu2 | EstimatorTag::GFormula => {
                for &r in &plan.regimes {
                    curves.push(match tag {
                        EstimatorTag::Nu1 => estimate_nu1(ds, models.as_ref().expect("fitted"), r)?,
                        EstimatorTag::Nu2 => estimate_nu2(ds, models.as_ref().expect("fitted"), r)?,
                        _ => gformula_plugin(ds, r, &plan.partition)?,
                    });
                }
            }
            EstimatorTag::Nu2Dagger => unreachable!("rejected when the config is read"),
        }
        if plan.regimes.len() == 4 {
            effects.extend(effect_contrasts(&curves[start..])?.into_iter().map(|e| (tag, e)));
        }
    }
    Ok(Estimates { curves, effects, models })
}

pub fn bootstrap(ds: &EventHistoryDataset, plan: &Plan, opts: &BootstrapOptions) -> LibResult<BootstrapIntervals> {
    bootstrap_series(ds, opts, |d| estimate(d, plan).map(|e| e.flatten()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `k,regime,estimate,ci_low,ci_high,estimator_tag`, then the effects file
/// with `effect` in place of `regime`.
pub fn render(est: &Estimates, ci: Option<&BootstrapIntervals>) -> (String, String) {
    let bound = |i: usize| ci.map(|b| (Some(b.low[i]), Some(b.high[i]))).unwrap_or((None, None));
    let mut i = 0;
    let mut curves = String::from("k,regime,estimate,ci_low,ci_high,estimator_tag\n");
    for c in &est.curves {
        for (k, v) in c.reported().into_iter().enumerate() {
            let (lo, hi) = bound(i);
            let _ = writeln!(curves, "{k},{},{v},{},{},{}", c.regime, cell(lo), cell(hi), c.tag.name());
            i += 1;
        }
    }
    let mut effects = String::from("k,effect,estimate,ci_low,ci_high,estimator_tag\n");
    for (tag, e) in &est.effects {
        for (k, v) in e.point.iter().enumerate() {
            let (lo, hi) = bound(i);
            let _ = writeln!(effects, "{k},{},{v},{},{},{}", e.kind, cell(lo), cell(hi), tag.name());
            i += 1;
        }
    }
    (curves, effects)
}

fn model_entry(role: &str, m: &FittedModel) -> Value {
    json!({
        "role": role,
        "formula": m.formula.to_string(),
        "saturated": m.is_saturated(),
        "cells": m.cell_count(),
        "converged": m.converged,
        "iterations": m.iterations,
        "rows": m.rows,
        "events": m.events,
        "max_abs_score": m.max_abs_score,
        "ridge": m.ridge,
    })
}

pub fn model_diagnostics(ns: &NuisanceSet) -> Value {
    let mut out = vec![
        model_entry("y_hazard", &ns.y_hazard),
        model_entry("d_hazard", &ns.d_hazard),
        model_entry("c_hazard", &ns.c_hazard),
    ];
    for (role, m) in [
        ("a_given_lad_past", &ns.a_given_lad_past),
        ("a_given_full_l", &ns.a_given_full_l),
        ("a_given_past", &ns.a_given_past),
    ] {
        if let Some(m) = m {
            out.push(model_entry(role, m));
        }
    }
    json!({"models": out, "warnings": ns.warnings})
}

/// Range and mean of the cumulative weights behind each weighted curve.
pub fn weight_summaries(ds: &EventHistoryDataset, est: &Estimates) -> LibResult<Value> {
    let Some(ns) = &est.models else { return Ok(json!([])) };
    let mut out = Vec::new();
    for c in &est.curves {
        let rep = match c.tag {
            EstimatorTag::Nu1 => Representation::Nu1,
            EstimatorTag::Nu2 => Representation::Nu2,
            _ => continue,
        };
        let r = Regime::new(c.regime.a_y, c.regime.a_d)?;
        let rows = weight_trace(ds, ns, r, rep)?;
        let n = rows.len().max(1) as f64;
        let (lo, hi, sum) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), w| (lo.min(w.product), hi.max(w.product), s + w.product));
        out.push(json!({
            "estimator": c.tag.name(),
            "regime": c.regime.to_string(),
            "records": rows.len(),
            "min": if rows.is_empty() { None } else { Some(lo) },
            "max": if rows.is_empty() { None } else { Some(hi) },
            "mean": sum / n,
        }));
    }
    Ok(Value::Array(out))
}

/// Entries that were clipped into `[0, 1]` or raised to keep the curve
/// non-decreasing.
pub fn clipped(est: &Estimates) -> Value {
    let mut out = Vec::new();
    for c in &est.curves {
        for (k, flag) in c.clip_flags().into_iter().enumerate() {
            if flag {
                out.push(json!({"estimator": c.tag.name(), "regime": c.regime.to_string(), "k": k, "raw": c.values[k]}));
            }
        }
    }
    Value::Array(out)
}

/// One `nu2_dagger` curve per offset and regime, with an `offset` column.
pub fn sensitivity_grid(ds: &EventHistoryDataset, cfg: &RunConfig, plan: &Plan) -> CliResult<(String, NuisanceSet)> {
    if cfg.sensitivity.is_empty() {
        return Err(usage("config: missing key sensitivity"));
    }
    let ns = plan.fit(ds)?;
    let mut out = String::from("offset,k,regime,estimate,ci_low,ci_high,estimator_tag\n");
    for entry in &cfg.sensitivity {
        let t = entry.build(ds.schema())?;
        let label = entry.label();
        for &r in &plan.regimes {
            let c = estimate_nu2_dagger(ds, &ns, r, t.as_ref())?;
            for (k, v) in c.reported().into_iter().enumerate() {
                let _ = writeln!(out, "{label},{k},{},{v},,,{}", c.regime, c.tag.name());
            }
        }
    }
    Ok((out, ns))
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|source| CliError::Output { path: path.display().to_string(), source })?;
    Ok(path)
}

pub fn manifest_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}
