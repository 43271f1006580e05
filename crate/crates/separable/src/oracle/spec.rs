//! Data-generating process specifications.
//!
//! ```toml
//! horizon = 1
//! design = "two_arm"
//!
//! [[covariates]]
//! name = "U"
//! measured = false
//! timing = "baseline"
//!
//! [[covariates]]
//! name = "L"
//! block = "ad"
//!
//! [[rules]]
//! target = "L"
//! a_d = 1
//! when = { "U" = 1, "L@prev" = 0 }
//! probs = [0.25, 0.75]
//!
//! [[rules]]
//! target = "Y"
//! p = 0.125
//! ```
//!
//! Within interval `k` the covariates are drawn in declaration order, then
//! `C_{k+1}`, `D_{k+1}` and `Y_{k+1}`. The first rule whose filters match
//! gives the distribution; a reachable history matched by no rule is an error.
//! Without any `C` rule there is no censoring. In `when`, `X` is the value of
//! `X` at the current interval, `X@prev` its value one interval back (the rule
//! does not match at interval 0) and `X@j` its value at interval `j`.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::event_history::{Covariate, CovariateKind, CovariateSchema, Design, Timing};
use crate::glm::CovariatePartition;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDgp {
    horizon: usize,
    #[serde(default)]
    design: Option<String>,
    #[serde(default)]
    covariates: Vec<RawCovariate>,
    rules: Vec<RawRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovariate {
    name: String,
    #[serde(default)]
    levels: Option<u32>,
    #[serde(default)]
    measured: Option<bool>,
    #[serde(default)]
    timing: Option<String>,
    #[serde(default)]
    block: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    target: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    a_y: Option<u8>,
    #[serde(default)]
    a_d: Option<u8>,
    #[serde(default)]
    a_z: Option<u8>,
    #[serde(default)]
    when: BTreeMap<String, u32>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    carry: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpCovariate {
    pub name: String,
    pub levels: u32,
    pub measured: bool,
    pub baseline: bool,
    /// Block used by the default partition; `true` for `A_D`.
    pub ad_block: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Covariate(usize),
    C,
    D,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum When {
    Current,
    Previous,
    At(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Bernoulli(f64),
    Categorical(Vec<f64>),
    Carry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub target: Target,
    pub k: Option<usize>,
    pub a_y: Option<u8>,
    pub a_d: Option<u8>,
    pub a_z: Option<u8>,
    pub conditions: Vec<(usize, When, u32)>,
    pub draw: Draw,
}

/// The arms a law is generated under; `a_z` is set only for processes with
/// a third treatment component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arms {
    pub a_y: u8,
    pub a_d: u8,
    pub a_z: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub horizon: usize,
    pub design: Design,
    pub covariates: Vec<DgpCovariate>,
    pub rules: Vec<Rule>,
    has_censoring: bool,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDgp(msg.into())
}

impl DgpSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawDgp = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let design = match raw.design.as_deref() {
            None | Some("two_arm") => Design::TwoArm,
            Some("four_arm") => Design::FourArm,
            Some(other) => return Err(invalid(format!("unknown design '{other}'"))),
        };
        let mut covariates = Vec::new();
        for c in raw.covariates {
            if covariates.iter().any(|d: &DgpCovariate| d.name == c.name) || ["C", "D", "Y"].contains(&c.name.as_str()) {
                return Err(invalid(format!("covariate name '{}' reused or reserved", c.name)));
            }
            let levels = c.levels.unwrap_or(2);
            if levels < 2 {
                return Err(invalid(format!("covariate '{}' needs at least two levels", c.name)));
            }
            let baseline = match c.timing.as_deref() {
                None | Some("time_varying") => false,
                Some("baseline") => true,
                Some(other) => return Err(invalid(format!("unknown timing '{other}'"))),
            };
            let ad_block = match c.block.as_deref() {
                None | Some("ad") => true,
                Some("ay") => false,
                Some(other) => return Err(invalid(format!("unknown block '{other}'"))),
            };
            covariates.push(DgpCovariate { name: c.name, levels, measured: c.measured.unwrap_or(true), baseline, ad_block });
        }
        let index = |n: &str| covariates.iter().position(|c| c.name == n);
        let mut rules = Vec::new();
        for (ri, r) in raw.rules.into_iter().enumerate() {
            let ctx = |m: &str| invalid(format!("rule {}: {m}", ri + 1));
            let target = match r.target.as_str() {
                "C" => Target::C,
                "D" => Target::D,
                "Y" => Target::Y,
                n => Target::Covariate(index(n).ok_or_else(|| ctx(&format!("unknown target '{n}'")))?),
            };
            for a in [r.a_y, r.a_d, r.a_z].into_iter().flatten() {
                if a > 1 {
                    return Err(ctx("arm filters must be 0 or 1"));
                }
            }
            if r.k.is_some_and(|k| k > raw.horizon) {
                return Err(ctx("interval beyond the horizon"));
            }
            let mut conditions = Vec::new();
            for (key, value) in &r.when {
                let (name, when) = match key.split_once('@') {
                    None => (key.as_str(), When::Current),
                    Some((n, "prev")) => (n, When::Previous),
                    Some((n, j)) => (n, When::At(j.parse().map_err(|_| ctx(&format!("bad time in '{key}'")))?)),
                };
                let cov = index(name).ok_or_else(|| ctx(&format!("unknown covariate '{name}'")))?;
                if *value >= covariates[cov].levels {
                    return Err(ctx(&format!("level {value} out of range for '{name}'")));
                }
                conditions.push((cov, when, *value));
            }
            let draw = match (r.p, r.probs, r.carry) {
                (Some(p), None, false) => {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(ctx("probability outside [0, 1]"));
                    }
                    match target {
                        Target::Covariate(c) if covariates[c].levels != 2 => {
                            return Err(ctx("'p' is only for events and binary covariates"));
                        }
                        Target::Covariate(_) => Draw::Categorical(vec![1.0 - p, p]),
                        _ => Draw::Bernoulli(p),
                    }
                }
                (None, Some(probs), false) => {
                    let Target::Covariate(c) = target else {
                        return Err(ctx("'probs' is only for covariates"));
                    };
                    if probs.len() != covariates[c].levels as usize {
                        return Err(ctx("'probs' length differs from the number of levels"));
                    }
                    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                        return Err(ctx("'probs' must be probabilities summing to 1"));
                    }
                    Draw::Categorical(probs)
                }
                (None, None, true) => {
                    if !matches!(target, Target::Covariate(_)) {
                        return Err(ctx("'carry' is only for covariates"));
                    }
                    Draw::Carry
                }
                _ => return Err(ctx("give exactly one of 'p', 'probs' or 'carry = true'")),
            };
            rules.push(Rule { target, k: r.k, a_y: r.a_y, a_d: r.a_d, a_z: r.a_z, conditions, draw });
        }
        let has_censoring = rules.iter().any(|r| r.target == Target::C);
        Ok(DgpSpec { horizon: raw.horizon, design, covariates, rules, has_censoring })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::from_toml(&text)
    }

    pub fn has_censoring(&self) -> bool {
        self.has_censoring
    }

    /// Whether any rule distinguishes a third treatment component.
    pub fn uses_a_z(&self) -> bool {
        self.rules.iter().any(|r| r.a_z.is_some())
    }

    /// Indices of the measured covariates, in declaration order.
    pub fn measured(&self) -> Vec<usize> {
        (0..self.covariates.len()).filter(|&i| self.covariates[i].measured).collect()
    }

    /// Schema of the emitted data: measured covariates only.
    pub fn schema(&self) -> CovariateSchema {
        let entries = self
            .measured()
            .into_iter()
            .map(|i| {
                let c = &self.covariates[i];
                let kind = if c.levels == 2 { CovariateKind::Binary } else { CovariateKind::Categorical(c.levels) };
                let timing = if c.baseline { Timing::Baseline } else { Timing::TimeVarying };
                Covariate::new(c.name.clone(), kind, timing)
            })
            .collect();
        CovariateSchema::new(entries).expect("covariate names checked at load")
    }

    /// Partition of the measured covariates taken from their `block` fields.
    pub fn default_partition(&self) -> CovariatePartition {
        let schema = self.schema();
        let ay: Vec<&str> = self
            .measured()
            .into_iter()
            .filter(|&i| !self.covariates[i].ad_block)
            .map(|i| self.covariates[i].name.as_str())
            .collect();
        CovariatePartition::with_ay(&schema, &ay).expect("names come from the schema")
    }

    /// Arms of the observed trial arm `a`.
    pub fn arm(&self, a: u8) -> Arms {
        Arms { a_y: a, a_d: a, a_z: self.uses_a_z().then_some(a) }
    }

    /// Arms for a two-component regime.
    pub fn two_way(&self, a_y: u8, a_d: u8) -> Result<Arms> {
        if self.uses_a_z() {
            return Err(invalid("process distinguishes a third component; give a_z"));
        }
        Ok(Arms { a_y, a_d, a_z: None })
    }

    /// Distribution of `target` at interval `k` given the values drawn so far
    /// (`values[j]` for intervals before `k`, `current` for interval `k`).
    pub(crate) fn draw_for(
        &self,
        target: Target,
        k: usize,
        arms: Arms,
        values: &[Vec<u32>],
        current: &[u32],
    ) -> Result<&Draw> {
        'rules: for r in &self.rules {
            if r.target != target || r.k.is_some_and(|rk| rk != k) {
                continue;
            }
            if r.a_y.is_some_and(|a| a != arms.a_y) || r.a_d.is_some_and(|a| a != arms.a_d) {
                continue;
            }
            if let Some(az) = r.a_z {
                match arms.a_z {
                    None => return Err(invalid("a rule filters on a_z but the regime has none")),
                    Some(v) if v != az => continue,
                    _ => {}
                }
            }
            for &(cov, when, level) in &r.conditions {
                let j = match when {
                    When::Current => k,
                    When::Previous => match k.checked_sub(1) {
                        Some(j) => j,
                        None => continue 'rules,
                    },
                    When::At(j) => j,
                };
                let v = if j < k {
                    values[j][cov]
                } else if j == k && cov < current.len() {
                    current[cov]
                } else {
                    return Err(invalid(format!(
                        "a rule for {} at interval {k} reads {} at interval {j}, which is not drawn yet",
                        self.target_name(target),
                        self.covariates[cov].name
                    )));
                };
                if v != level {
                    continue 'rules;
                }
            }
            return Ok(&r.draw);
        }
        Err(invalid(format!(
            "no rule covers {} at interval {k} for arms ({}, {}) after history {:?} {:?}",
            self.target_name(target),
            arms.a_y,
            arms.a_d,
            values,
            current
        )))
    }

    fn target_name(&self, t: Target) -> String {
        match t {
            Target::Covariate(c) => self.covariates[c].name.clone(),
            Target::C => "C".into(),
            Target::D => "D".into(),
            Target::Y => "Y".into(),
        }
    }
}
