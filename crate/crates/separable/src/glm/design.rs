//! Expansion of a formula into design columns.

use std::fmt;

use super::formula::{CovRef, CovariatePartition, Factor, Lag, ModelFormula, Role, Term};
use crate::error::{Error, Result};
use crate::event_history::{CovariateKind, CovariateSchema, EventHistoryDataset, Timing};

/// What a model sees of one person-interval: the interval index, the arm and
/// the covariate history `L_0, ..., L_k` (`history.len() == k + 1`).
///
/// The layout hides whatever the model's role does not condition on, so the
/// full history can always be passed.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub k: usize,
    pub arm: u8,
    pub history: &'a [&'a [f64]],
}

#[derive(Debug, Clone, PartialEq)]
enum Atom {
    Time(u32),
    Arm,
    Value { cov: usize, lag: Lag, power: u32 },
    Level { cov: usize, lag: Lag, level: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Column {
    atoms: Vec<Atom>,
    name: String,
}

/// Column layout of a formula against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    role: Role,
    strata: bool,
    saturated: bool,
    columns: Vec<Column>,
    /// Per covariate, whether its current value is visible to the model.
    current_visible: Vec<bool>,
    names: Vec<String>,
}

fn covariate_label(schema: &CovariateSchema, cov: usize, lag: Lag) -> String {
    let n = &schema.entries()[cov].name;
    match lag {
        Lag::Current => format!("Lk({n})"),
        Lag::Baseline => format!("L0({n})"),
        Lag::Previous => format!("Lprev({n})"),
    }
}

impl Layout {
    pub fn new(formula: &ModelFormula, schema: &CovariateSchema, partition: &CovariatePartition) -> Result<Self> {
        if partition.len() != schema.len() {
            return Err(Error::PartitionMismatch(format!(
                "partition covers {} covariates, schema has {}",
                partition.len(),
                schema.len()
            )));
        }
        let role = formula.role;
        let current_visible: Vec<bool> = (0..schema.len())
            .map(|i| match role {
                Role::AModelGivenPast => false,
                Role::AModelGivenLAD => partition.is_ad(i),
                _ => true,
            })
            .collect();
        let mut columns = Vec::new();
        for term in &formula.terms {
            match term {
                Term::Cells => {
                    if let Some(c) = schema.entries().iter().find(|c| !c.kind.is_discrete()) {
                        return Err(Error::ContinuousCovariate(c.name.clone()));
                    }
                }
                Term::InterceptPoly(d) => {
                    columns.push(Column { atoms: vec![], name: "1".into() });
                    for p in 1..=*d {
                        let name = if p == 1 { "k".to_string() } else { format!("k^{p}") };
                        columns.push(Column { atoms: vec![Atom::Time(p)], name });
                    }
                }
                Term::Product(factors) => {
                    let mut acc = vec![Column { atoms: vec![], name: String::new() }];
                    for f in factors {
                        let alts = expand_factor(f, schema, role, &current_visible)?;
                        if alts.is_empty() {
                            acc.clear();
                            break;
                        }
                        acc = acc
                            .iter()
                            .flat_map(|c| {
                                alts.iter().map(move |a| {
                                    let mut atoms = c.atoms.clone();
                                    atoms.extend(a.atoms.iter().cloned());
                                    let name =
                                        if c.name.is_empty() { a.name.clone() } else { format!("{}:{}", c.name, a.name) };
                                    Column { atoms, name }
                                })
                            })
                            .collect();
                    }
                    columns.extend(acc);
                }
            }
        }
        let saturated = formula.is_saturated();
        if !saturated && columns.is_empty() {
            return Err(Error::Formula("formula expands to no columns".into()));
        }
        let mut names: Vec<String> = Vec::new();
        if formula.strata {
            for arm in 0..2 {
                names.extend(columns.iter().map(|c| format!("[A={arm}]{}", c.name)));
            }
        } else {
            names.extend(columns.iter().map(|c| c.name.clone()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Formula(format!("column {n} appears twice")));
            }
        }
        Ok(Layout { role, strata: formula.strata, saturated, columns, current_visible, names })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    pub fn is_stratified(&self) -> bool {
        self.strata
    }

    fn visible(&self, cov: usize, j: usize, k: usize) -> bool {
        j < k || (j == k && self.current_visible[cov])
    }

    fn lookup(&self, ctx: &Context, cov: usize, lag: Lag) -> Option<f64> {
        let j = match lag {
            Lag::Current => ctx.k,
            Lag::Baseline => 0,
            Lag::Previous => ctx.k.checked_sub(1)?,
        };
        self.visible(cov, j, ctx.k).then(|| ctx.history[j][cov])
    }

    fn atom(&self, a: &Atom, ctx: &Context) -> f64 {
        match a {
            Atom::Time(p) => (ctx.k as f64).powi(*p as i32),
            Atom::Arm => f64::from(ctx.arm),
            Atom::Value { cov, lag, power } => self.lookup(ctx, *cov, *lag).map_or(0.0, |v| v.powi(*power as i32)),
            Atom::Level { cov, lag, level } => {
                self.lookup(ctx, *cov, *lag).map_or(0.0, |v| if v == f64::from(*level) { 1.0 } else { 0.0 })
            }
        }
    }

    /// Append the design row for `ctx` to `out`.
    pub fn write_row(&self, ctx: &Context, out: &mut Vec<f64>) {
        let start = out.len();
        out.extend(self.columns.iter().map(|c| c.atoms.iter().map(|a| self.atom(a, ctx)).product::<f64>()));
        if self.strata {
            let base: Vec<f64> = out[start..].to_vec();
            let (zero, one) = if ctx.arm == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            out.truncate(start);
            out.extend(base.iter().map(|v| v * zero));
            out.extend(base.iter().map(|v| v * one));
        }
    }

    pub fn row(&self, ctx: &Context) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width());
        self.write_row(ctx, &mut v);
        v
    }

    /// Key of the history cell a saturated model conditions on: the interval,
    /// the arm when stratified, and every visible covariate value.
    pub fn cell_key(&self, ctx: &Context) -> Vec<i64> {
        let mut key = vec![ctx.k as i64];
        if self.strata {
            key.push(i64::from(ctx.arm));
        }
        for (j, l) in ctx.history.iter().enumerate().take(ctx.k + 1) {
            for (cov, v) in l.iter().enumerate() {
                if self.visible(cov, j, ctx.k) {
                    key.push(*v as i64);
                }
            }
        }
        key
    }
}

fn expand_factor(f: &Factor, schema: &CovariateSchema, role: Role, current_visible: &[bool]) -> Result<Vec<Column>> {
    match f {
        Factor::Time(p) => {
            let name = if *p == 1 { "k".to_string() } else { format!("k^{p}") };
            Ok(vec![Column { atoms: vec![Atom::Time(*p)], name }])
        }
        Factor::Arm => Ok(vec![Column { atoms: vec![Atom::Arm], name: "A".into() }]),
        Factor::Covariate { name, lag, power } => {
            let lag = *lag;
            let covs: Vec<usize> = match name {
                CovRef::Named(n) => {
                    let i = schema.index_of(n).ok_or_else(|| Error::UnknownCovariate(n.clone()))?;
                    let c = &schema.entries()[i];
                    if *power > 1 && c.kind.is_discrete() {
                        return Err(Error::Formula(format!("power of discrete covariate {n}")));
                    }
                    if lag == Lag::Current && !current_visible[i] {
                        return Err(Error::Formula(format!(
                            "{} cannot use the current value of {n}",
                            role.name()
                        )));
                    }
                    vec![i]
                }
                // `L0(*)` covers the baseline covariates; `Lk(*)` and `Lprev(*)`
                // the time-varying ones visible to the role. Powers only apply
                // to continuous covariates.
                CovRef::All => schema
                    .entries()
                    .iter()
                    .enumerate()
                    .filter(|(i, c)| {
                        let timing_ok = match lag {
                            Lag::Baseline => c.timing == Timing::Baseline,
                            _ => c.timing == Timing::TimeVarying,
                        };
                        timing_ok
                            && (lag != Lag::Current || current_visible[*i])
                            && (*power == 1 || !c.kind.is_discrete())
                    })
                    .map(|(i, _)| i)
                    .collect(),
            };
            let mut out = Vec::new();
            for cov in covs {
                let label = covariate_label(schema, cov, lag);
                match schema.entries()[cov].kind {
                    CovariateKind::Categorical(levels) => {
                        for level in 1..levels {
                            out.push(Column { atoms: vec![Atom::Level { cov, lag, level }], name: format!("{label}={level}") });
                        }
                    }
                    _ => {
                        let name = if *power > 1 { format!("{label}^{power}") } else { label };
                        out.push(Column { atoms: vec![Atom::Value { cov, lag, power: *power }], name });
                    }
                }
            }
            Ok(out)
        }
    }
}

/// A dense row-major design matrix with its outcome column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub rows: usize,
    pub cols: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }
}

impl fmt::Display for DesignMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "y,{}", self.names.join(","))?;
        for i in 0..self.rows {
            let r: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{},{}", self.y[i], r.join(","))?;
        }
        Ok(())
    }
}

/// Visit every person-interval in the role's risk set with its context and
/// binary outcome.
pub(crate) fn for_each_row(ds: &EventHistoryDataset, role: Role, mut visit: impl FnMut(&Context, bool)) {
    for subject in ds.subjects() {
        let hist: Vec<&[f64]> = subject.iter().map(|r| r.l.as_slice()).collect();
        for r in subject {
            let outcome = match role.risk_set() {
                Some(kind) if !kind.admits(r) => continue,
                Some(crate::event_history::RiskSetKind::CHazard) => r.censored(),
                Some(crate::event_history::RiskSetKind::DHazard) => r.competing(),
                Some(crate::event_history::RiskSetKind::YHazard) => r.event(),
                None => r.a == 1,
            };
            let ctx = Context { k: r.k, arm: r.a, history: &hist[..=r.k] };
            visit(&ctx, outcome);
        }
    }
}

/// Stack the design rows of the formula's risk set.
pub fn build_design(
    formula: &ModelFormula,
    ds: &EventHistoryDataset,
    partition: &CovariatePartition,
) -> Result<(Layout, DesignMatrix)> {
    let layout = Layout::new(formula, ds.schema(), partition)?;
    if layout.is_saturated() {
        return Err(Error::Formula("a saturated model has no design matrix".into()));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for_each_row(ds, formula.role, |ctx, outcome| {
        layout.write_row(ctx, &mut x);
        y.push(if outcome { 1.0 } else { 0.0 });
    });
    if y.is_empty() {
        return Err(Error::EmptyRiskSet(formula.role.name().into()));
    }
    let m = DesignMatrix { rows: y.len(), cols: layout.width(), x, y, names: layout.names().to_vec() };
    Ok((layout, m))
}
