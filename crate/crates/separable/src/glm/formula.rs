//! The model formula mini-language.
//!
//! ```text
//! Y ~ polyk(3) + L0(*) + Lk(*) + Lk(*)^2 + Lk(*):k + A + A:k + strata(A)
//! A ~ cells
//! ```
//!
//! `L0(x)` is the value of `x` at interval 0, `Lk(x)` its value at the current
//! interval and `Lprev(x)` its value one interval back; `*` expands to every
//! covariate in scope. `cells` is a saturated model over the whole visible
//! history and may only be combined with `strata(A)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::event_history::{CovariateSchema, RiskSetKind};

/// Which conditional probability a model estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    YHazard,
    DHazard,
    CHazard,
    /// `Pr(A = 1 | L_{A_D,k}, history through k-1)`.
    AModelGivenLAD,
    /// `Pr(A = 1 | history through k)`.
    AModelGivenFullL,
    /// `Pr(A = 1 | history through k-1)`.
    AModelGivenPast,
}

impl Role {
    pub fn outcome_symbol(self) -> &'static str {
        match self {
            Role::YHazard => "Y",
            Role::DHazard => "D",
            Role::CHazard => "C",
            _ => "A",
        }
    }

    pub fn is_treatment_model(self) -> bool {
        matches!(self, Role::AModelGivenLAD | Role::AModelGivenFullL | Role::AModelGivenPast)
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::YHazard => "y_hazard",
            Role::DHazard => "d_hazard",
            Role::CHazard => "c_hazard",
            Role::AModelGivenLAD => "a_given_lad_past",
            Role::AModelGivenFullL => "a_given_full_l",
            Role::AModelGivenPast => "a_given_past",
        }
    }

    /// The risk set the model is fitted on; treatment models use every
    /// person-interval present at the start of the interval.
    pub fn risk_set(self) -> Option<RiskSetKind> {
        match self {
            Role::YHazard => Some(RiskSetKind::YHazard),
            Role::DHazard => Some(RiskSetKind::DHazard),
            Role::CHazard => Some(RiskSetKind::CHazard),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lag {
    Current,
    Baseline,
    Previous,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CovRef {
    All,
    Named(String),
}

/// One multiplicand of a term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Factor {
    /// `k^power`.
    Time(u32),
    /// The treatment arm indicator.
    Arm,
    Covariate { name: CovRef, lag: Lag, power: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// Columns `k^0, ..., k^degree`.
    InterceptPoly(u32),
    /// A main effect (one factor) or an interaction.
    Product(Vec<Factor>),
    Cells,
}

/// Assignment of each schema covariate to the `A_D` block (`true`) or the
/// `A_Y` block (`false`). Covariates default to the `A_D` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariatePartition {
    ad: Vec<bool>,
}

impl CovariatePartition {
    pub fn all_ad(schema: &CovariateSchema) -> Self {
        CovariatePartition { ad: vec![true; schema.len()] }
    }

    /// Every covariate named in `ay` goes to the `A_Y` block, the rest to `A_D`.
    pub fn with_ay(schema: &CovariateSchema, ay: &[&str]) -> Result<Self> {
        let mut p = Self::all_ad(schema);
        for name in ay {
            let i = schema.index_of(name).ok_or_else(|| Error::UnknownCovariate(name.to_string()))?;
            p.ad[i] = false;
        }
        Ok(p)
    }

    pub fn is_ad(&self, i: usize) -> bool {
        self.ad[i]
    }

    pub fn len(&self) -> usize {
        self.ad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ad.is_empty()
    }

    pub fn has_ay(&self) -> bool {
        self.ad.iter().any(|a| !a)
    }

    pub fn has_ad(&self) -> bool {
        self.ad.iter().any(|a| *a)
    }

    pub fn ay_names<'s>(&self, schema: &'s CovariateSchema) -> Vec<&'s str> {
        schema.entries().iter().zip(&self.ad).filter(|(_, ad)| !**ad).map(|(c, _)| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFormula {
    pub role: Role,
    pub terms: Vec<Term>,
    /// Fit every column separately within each arm.
    pub strata: bool,
}

fn formula_err(msg: impl Into<String>) -> Error {
    Error::Formula(msg.into())
}

fn parse_u32(s: &str, what: &str) -> Result<u32> {
    s.trim().parse().map_err(|_| formula_err(format!("bad {what} '{s}'")))
}

fn parse_factor(s: &str) -> Result<Factor> {
    let s = s.trim();
    let (base, power) = match s.rsplit_once('^') {
        Some((b, _)) if !b.ends_with(')') && b.trim() != "k" => {
            return Err(formula_err(format!("power applied to '{b}'")));
        }
        Some((b, p)) => (b.trim(), parse_u32(p, "exponent")?),
        None => (s, 1),
    };
    if !(1..=3).contains(&power) {
        return Err(formula_err(format!("exponent {power} outside 1..=3")));
    }
    if base == "k" {
        return Ok(Factor::Time(power));
    }
    if base == "A" {
        return if power == 1 { Ok(Factor::Arm) } else { Err(formula_err("power of the arm indicator")) };
    }
    for (prefix, lag) in [("L0(", Lag::Baseline), ("Lk(", Lag::Current), ("Lprev(", Lag::Previous)] {
        if let Some(rest) = base.strip_prefix(prefix) {
            let inner = rest.strip_suffix(')').ok_or_else(|| formula_err(format!("unclosed '{base}'")))?.trim();
            if inner.is_empty() {
                return Err(formula_err(format!("empty covariate in '{base}'")));
            }
            let name = if inner == "*" { CovRef::All } else { CovRef::Named(inner.to_string()) };
            return Ok(Factor::Covariate { name, lag, power });
        }
    }
    Err(formula_err(format!("unknown term '{s}'")))
}

impl ModelFormula {
    pub fn parse(text: &str, role: Role) -> Result<Self> {
        let (lhs, rhs) = text.split_once('~').ok_or_else(|| formula_err("missing '~'"))?;
        if lhs.trim() != role.outcome_symbol() {
            return Err(formula_err(format!(
                "outcome '{}' does not match role {} (expected '{}')",
                lhs.trim(),
                role.name(),
                role.outcome_symbol()
            )));
        }
        let mut terms = Vec::new();
        let mut strata = false;
        for raw in rhs.split('+') {
            let t = raw.trim();
            if t.is_empty() {
                return Err(formula_err("empty term"));
            }
            let term = if t == "strata(A)" {
                if strata {
                    return Err(formula_err("strata(A) given twice"));
                }
                strata = true;
                continue;
            } else if t == "cells" {
                Term::Cells
            } else if let Some(d) = t.strip_prefix("polyk(").and_then(|r| r.strip_suffix(')')) {
                Term::InterceptPoly(parse_u32(d, "degree")?)
            } else {
                Term::Product(t.split(':').map(parse_factor).collect::<Result<_>>()?)
            };
            if terms.contains(&term) {
                return Err(formula_err(format!("duplicate term '{t}'")));
            }
            terms.push(term);
        }
        let f = ModelFormula { role, terms, strata };
        f.check_shape()?;
        Ok(f)
    }

    fn check_shape(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(formula_err("no terms"));
        }
        let polys = self.terms.iter().filter(|t| matches!(t, Term::InterceptPoly(_))).count();
        if polys > 1 {
            return Err(formula_err("more than one polyk term"));
        }
        if self.is_saturated() && self.terms.len() > 1 {
            return Err(formula_err("cells can only be combined with strata(A)"));
        }
        let uses_arm = self
            .terms
            .iter()
            .any(|t| matches!(t, Term::Product(fs) if fs.contains(&Factor::Arm)));
        if self.role.is_treatment_model() && (uses_arm || self.strata) {
            return Err(formula_err("treatment models cannot use the arm as a predictor"));
        }
        if self.strata && uses_arm {
            return Err(formula_err("arm terms are redundant under strata(A)"));
        }
        for t in &self.terms {
            if let Term::Product(fs) = t {
                for f in fs {
                    if let Factor::Covariate { lag: Lag::Current, .. } = f {
                        if self.role == Role::AModelGivenPast {
                            return Err(formula_err("a model given the past cannot use current covariates"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_saturated(&self) -> bool {
        self.terms.contains(&Term::Cells)
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Time(1) => f.write_str("k"),
            Factor::Time(p) => write!(f, "k^{p}"),
            Factor::Arm => f.write_str("A"),
            Factor::Covariate { name, lag, power } => {
                let prefix = match lag {
                    Lag::Current => "Lk",
                    Lag::Baseline => "L0",
                    Lag::Previous => "Lprev",
                };
                let n = match name {
                    CovRef::All => "*",
                    CovRef::Named(n) => n,
                };
                write!(f, "{prefix}({n})")?;
                if *power > 1 {
                    write!(f, "^{power}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::InterceptPoly(d) => write!(f, "polyk({d})"),
            Term::Cells => f.write_str("cells"),
            Term::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| x.to_string()).collect();
                f.write_str(&parts.join(":"))
            }
        }
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        if self.strata {
            parts.push("strata(A)".into());
        }
        write!(f, "{} ~ {}", self.role.outcome_symbol(), parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pooled_and_stratified_forms() {
        let f = ModelFormula::parse("Y ~ polyk(3) + L0(*) + Lk(*) + Lk(*)^2 + Lk(*):k + strata(A)", Role::YHazard).unwrap();
        assert!(f.strata);
        assert_eq!(f.terms.len(), 5);
        assert_eq!(f.to_string(), "Y ~ polyk(3) + L0(*) + Lk(*) + Lk(*)^2 + Lk(*):k + strata(A)");
        let c = ModelFormula::parse("C ~ polyk(3) + A + A:k + L0(*) + Lk(*)", Role::CHazard).unwrap();
        assert_eq!(c.terms[2], Term::Product(vec![Factor::Arm, Factor::Time(1)]));
    }

    #[test]
    fn rejects_bad_formulas() {
        let bad = [
            ("Y ~ polyk(1)", Role::DHazard),
            ("A ~ polyk(1) + A", Role::AModelGivenFullL),
            ("A ~ cells + strata(A)", Role::AModelGivenPast),
            ("A ~ Lk(x)", Role::AModelGivenPast),
            ("Y ~ cells + polyk(0)", Role::YHazard),
            ("Y ~ Lk(x)^4", Role::YHazard),
            ("Y ~ polyk(1) + polyk(2)", Role::YHazard),
            ("Y ~ ", Role::YHazard),
            ("Y ~ foo", Role::YHazard),
            ("Y ~ A^2", Role::YHazard),
            ("Y ~ A + strata(A)", Role::YHazard),
            ("Y polyk(1)", Role::YHazard),
        ];
        for (text, role) in bad {
            assert!(matches!(ModelFormula::parse(text, role), Err(Error::Formula(_))), "{text}");
        }
    }
}
