//! Per-subject weight processes built from fitted nuisance models.
//!
//! For a subject with records `0..=s`, the weights reweight the observed arm
//! towards a regime `(a_Y, a_D)`:
//!
//! * `w_c`: inverse probability of remaining uncensored through `s`, under the
//!   subject's own arm;
//! * `w_d`: ratio of competing-event survival under `a_D` to that under `a_Y`;
//! * `w_lad`: odds-ratio correction for the `A_D` covariate block;
//! * `w_y`: ratio of the outcome hazard at `s` and outcome survival before `s`
//!   under `a_Y` to the same under `a_D`;
//! * `w_lay`: odds-ratio correction for the `A_Y` covariate block.
//!
//! All of them equal exactly 1 when `a_Y = a_D`.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::event_history::{Design, EventHistoryDataset, IntervalRecord, RiskSetKind};
use crate::glm::{congeniality_warnings, fit, Context, CovariatePartition, FitOptions, FittedModel, ModelFormula, Role};
use crate::regime::Regime;

/// Predicted probabilities below this in a weight denominator are treated as
/// positivity failures.
pub const EPS_POS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFormulas {
    pub y_hazard: ModelFormula,
    pub d_hazard: ModelFormula,
    pub c_hazard: ModelFormula,
    pub a_given_lad_past: ModelFormula,
    pub a_given_full_l: ModelFormula,
    pub a_given_past: ModelFormula,
}

impl NuisanceFormulas {
    /// Saturated models throughout: arm-stratified hazards and treatment
    /// models over the full visible history.
    pub fn saturated() -> Self {
        let p = |t: &str, r| ModelFormula::parse(t, r).expect("built-in formula");
        NuisanceFormulas {
            y_hazard: p("Y ~ cells + strata(A)", Role::YHazard),
            d_hazard: p("D ~ cells + strata(A)", Role::DHazard),
            c_hazard: p("C ~ cells + strata(A)", Role::CHazard),
            a_given_lad_past: p("A ~ cells", Role::AModelGivenLAD),
            a_given_full_l: p("A ~ cells", Role::AModelGivenFullL),
            a_given_past: p("A ~ cells", Role::AModelGivenPast),
        }
    }

    pub fn parse(y: &str, d: &str, c: &str, lad: &str, full: &str, past: &str) -> Result<Self> {
        Ok(NuisanceFormulas {
            y_hazard: ModelFormula::parse(y, Role::YHazard)?,
            d_hazard: ModelFormula::parse(d, Role::DHazard)?,
            c_hazard: ModelFormula::parse(c, Role::CHazard)?,
            a_given_lad_past: ModelFormula::parse(lad, Role::AModelGivenLAD)?,
            a_given_full_l: ModelFormula::parse(full, Role::AModelGivenFullL)?,
            a_given_past: ModelFormula::parse(past, Role::AModelGivenPast)?,
        })
    }
}

/// The fitted nuisance models. Treatment models are fitted only when the
/// partition needs them: `w_lad` needs the models given `L_AD` and given the
/// past when `L_AD` is non-empty, `w_lay` the models given full `L` and given
/// `L_AD` when `L_AY` is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSet {
    pub y_hazard: FittedModel,
    pub d_hazard: FittedModel,
    pub c_hazard: FittedModel,
    pub a_given_lad_past: Option<FittedModel>,
    pub a_given_full_l: Option<FittedModel>,
    pub a_given_past: Option<FittedModel>,
    pub partition: CovariatePartition,
    pub warnings: Vec<String>,
}

impl NuisanceSet {
    pub fn models(&self) -> Vec<&FittedModel> {
        let mut v = vec![&self.y_hazard, &self.d_hazard, &self.c_hazard];
        v.extend(self.a_given_lad_past.iter());
        v.extend(self.a_given_full_l.iter());
        v.extend(self.a_given_past.iter());
        v
    }

    fn needs_lad(&self) -> bool {
        self.partition.has_ad()
    }

    fn needs_lay(&self) -> bool {
        self.partition.has_ay()
    }
}

pub fn fit_nuisance(
    ds: &EventHistoryDataset,
    formulas: &NuisanceFormulas,
    partition: &CovariatePartition,
    opts: &FitOptions,
) -> Result<NuisanceSet> {
    if ds.design() != Design::TwoArm {
        return Err(Error::SchemaMismatch("nuisance models are fitted on two-arm data".into()));
    }
    if partition.len() != ds.schema().len() {
        return Err(Error::PartitionMismatch(format!(
            "partition covers {} covariates, schema has {}",
            partition.len(),
            ds.schema().len()
        )));
    }
    let f = |m: &ModelFormula| fit(m, ds, partition, opts);
    let (lad_needed, lay_needed) = (partition.has_ad(), partition.has_ay());
    let a_given_lad_past = if lad_needed || lay_needed { Some(f(&formulas.a_given_lad_past)?) } else { None };
    let a_given_past = if lad_needed { Some(f(&formulas.a_given_past)?) } else { None };
    let a_given_full_l = if lay_needed { Some(f(&formulas.a_given_full_l)?) } else { None };
    let warnings = match (&a_given_past, &a_given_lad_past, &a_given_full_l) {
        (Some(p), Some(l), Some(fl)) => congeniality_warnings(p.layout(), l.layout(), fl.layout()),
        _ => vec![],
    };
    Ok(NuisanceSet {
        y_hazard: f(&formulas.y_hazard)?,
        d_hazard: f(&formulas.d_hazard)?,
        c_hazard: f(&formulas.c_hazard)?,
        a_given_lad_past,
        a_given_full_l,
        a_given_past,
        partition: partition.clone(),
        warnings,
    })
}

/// A user-chosen offset for the outcome-hazard condition: the outcome hazard
/// at interval `k` with `A_D = 0` minus that with `A_D = 1`, with `A_Y` held
/// at `a_y`, as a function of the covariate history through `k`.
pub trait SensitivityFunction: Sync {
    fn offset(&self, k: usize, history: &[&[f64]], a_y: u8) -> f64;
}

/// No violation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroOffset;

impl SensitivityFunction for ZeroOffset {
    fn offset(&self, _: usize, _: &[&[f64]], _: u8) -> f64 {
        0.0
    }
}

/// One value per interval; the last value is reused past the end.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseOffset(pub Vec<f64>);

impl SensitivityFunction for PiecewiseOffset {
    fn offset(&self, k: usize, _: &[&[f64]], _: u8) -> f64 {
        self.0.get(k).or(self.0.last()).copied().unwrap_or(0.0)
    }
}

/// `intercept + slope * L_k[covariate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOffset {
    pub covariate: usize,
    pub intercept: f64,
    pub slope: f64,
}

impl SensitivityFunction for LinearOffset {
    fn offset(&self, k: usize, history: &[&[f64]], _: u8) -> f64 {
        self.intercept + self.slope * history[k][self.covariate]
    }
}

/// Offsets looked up by interval, covariate history and `a_y`; a history
/// missing from the table yields NaN, reported as out of range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableOffset {
    pub table: HashMap<(usize, Vec<i64>, u8), f64>,
}

impl TableOffset {
    pub fn key(k: usize, history: &[&[f64]], a_y: u8) -> (usize, Vec<i64>, u8) {
        (k, history[..=k].iter().flat_map(|l| l.iter().map(|v| *v as i64)).collect(), a_y)
    }
}

impl SensitivityFunction for TableOffset {
    fn offset(&self, k: usize, history: &[&[f64]], a_y: u8) -> f64 {
        self.table.get(&Self::key(k, history, a_y)).copied().unwrap_or(f64::NAN)
    }
}

/// A subject's records with the covariate history laid out for prediction.
pub struct SubjectHistory<'a> {
    pub records: &'a [IntervalRecord],
    hist: Vec<&'a [f64]>,
}

impl<'a> SubjectHistory<'a> {
    pub fn new(records: &'a [IntervalRecord]) -> Self {
        SubjectHistory { records, hist: records.iter().map(|r| r.l.as_slice()).collect() }
    }

    pub fn context(&self, j: usize, arm: u8) -> Context<'_> {
        Context { k: self.records[j].k, arm, history: &self.hist[..=j] }
    }

    pub fn history(&self, j: usize) -> &[&'a [f64]] {
        &self.hist[..=j]
    }

    pub fn arm(&self) -> u8 {
        self.records[0].a
    }

    fn id(&self) -> &str {
        &self.records[0].subject_id
    }

    fn positive(&self, what: &'static str, value: f64, j: usize) -> Result<f64> {
        if value < EPS_POS || value.is_nan() {
            return Err(Error::PositivityBreach { what, value, subject: self.id().to_string(), k: self.records[j].k });
        }
        Ok(value)
    }
}

fn require<'m>(m: &'m Option<FittedModel>, role: Role) -> Result<&'m FittedModel> {
    m.as_ref().ok_or_else(|| Error::PartitionMismatch(format!("{} was not fitted for this partition", role.name())))
}

/// `Pr(A = a | context)` from a treatment model.
fn arm_prob(m: &FittedModel, ctx: &Context, a: u8) -> Result<f64> {
    let p1 = m.predict(ctx)?;
    Ok(if a == 1 { p1 } else { 1.0 - p1 })
}

/// Censoring weight at record `s` under arm `a`.
pub fn w_c(ns: &NuisanceSet, sh: &SubjectHistory, s: usize, a: u8) -> Result<f64> {
    if sh.records[s].censored() {
        return Ok(0.0);
    }
    let mut surv = 1.0;
    for j in 0..=s {
        let h = ns.c_hazard.predict(&sh.context(j, a))?;
        surv *= sh.positive("uncensored", 1.0 - h, j)?;
    }
    Ok(1.0 / surv)
}

/// Competing-event survival ratio through record `s`.
pub fn w_d(ns: &NuisanceSet, sh: &SubjectHistory, s: usize, r: Regime) -> Result<f64> {
    if r.is_diagonal() {
        return Ok(1.0);
    }
    let mut w = 1.0;
    for j in 0..=s {
        if !RiskSetKind::DHazard.admits(&sh.records[j]) {
            continue;
        }
        let num = 1.0 - ns.d_hazard.predict(&sh.context(j, r.a_d))?;
        let den = 1.0 - ns.d_hazard.predict(&sh.context(j, r.a_y))?;
        w *= num / sh.positive("competing-event-free", den, j)?;
    }
    Ok(w)
}

/// `A_D` covariate-block weight through record `s`.
pub fn w_lad(ns: &NuisanceSet, sh: &SubjectHistory, s: usize, r: Regime) -> Result<f64> {
    if r.is_diagonal() || !ns.needs_lad() {
        return Ok(1.0);
    }
    let lad = require(&ns.a_given_lad_past, Role::AModelGivenLAD)?;
    let past = require(&ns.a_given_past, Role::AModelGivenPast)?;
    let mut w = 1.0;
    for j in 0..=s {
        let ctx = sh.context(j, sh.arm());
        let num_l = arm_prob(lad, &ctx, r.a_d)?;
        let den_l = sh.positive("treatment given L_AD", arm_prob(lad, &ctx, r.a_y)?, j)?;
        let num_p = arm_prob(past, &ctx, r.a_y)?;
        let den_p = sh.positive("treatment given past", arm_prob(past, &ctx, r.a_d)?, j)?;
        w *= (num_l / den_l) * (num_p / den_p);
    }
    Ok(w)
}

/// `A_Y` covariate-block weight through record `s`.
pub fn w_lay(ns: &NuisanceSet, sh: &SubjectHistory, s: usize, r: Regime) -> Result<f64> {
    if r.is_diagonal() || !ns.needs_lay() {
        return Ok(1.0);
    }
    let full = require(&ns.a_given_full_l, Role::AModelGivenFullL)?;
    let lad = require(&ns.a_given_lad_past, Role::AModelGivenLAD)?;
    let mut w = 1.0;
    for j in 0..=s {
        let ctx = sh.context(j, sh.arm());
        let num_f = arm_prob(full, &ctx, r.a_y)?;
        let den_f = sh.positive("treatment given full L", arm_prob(full, &ctx, r.a_d)?, j)?;
        let num_l = arm_prob(lad, &ctx, r.a_d)?;
        let den_l = sh.positive("treatment given L_AD", arm_prob(lad, &ctx, r.a_y)?, j)?;
        w *= (num_f / den_f) * (num_l / den_l);
    }
    Ok(w)
}

/// Outcome weight at record `s`: hazard ratio at `s` times the survival
/// ratio before `s`, `a_Y` over `a_D`. With an offset, the `a_Y` hazard is
/// moved by `(-1)^{a_D} t` towards the counterfactual hazard under `a_D`.
fn outcome_weight(
    ns: &NuisanceSet,
    sh: &SubjectHistory,
    s: usize,
    r: Regime,
    t: Option<&dyn SensitivityFunction>,
) -> Result<f64> {
    if r.is_diagonal() {
        return Ok(1.0);
    }
    let sign = if r.a_d == 0 { 1.0 } else { -1.0 };
    let shifted = |j: usize| -> Result<f64> {
        let h = ns.y_hazard.predict(&sh.context(j, r.a_y))?;
        let Some(t) = t else { return Ok(h) };
        let v = h + sign * t.offset(sh.records[j].k, sh.history(j), r.a_y);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OffsetOutOfRange { value: v, k: sh.records[j].k });
        }
        Ok(v)
    };
    let h_den = ns.y_hazard.predict(&sh.context(s, r.a_d))?;
    let mut w = shifted(s)? / sh.positive("outcome hazard", h_den, s)?;
    for j in 0..s {
        let num = 1.0 - shifted(j)?;
        let den = 1.0 - ns.y_hazard.predict(&sh.context(j, r.a_d))?;
        w *= num / sh.positive("outcome-free", den, j)?;
    }
    Ok(w)
}

pub fn w_y(ns: &NuisanceSet, sh: &SubjectHistory, s: usize, r: Regime) -> Result<f64> {
    outcome_weight(ns, sh, s, r, None)
}

pub fn w_y_dagger(ns: &NuisanceSet, sh: &SubjectHistory, s: usize, r: Regime, t: &dyn SensitivityFunction) -> Result<f64> {
    outcome_weight(ns, sh, s, r, Some(t))
}

/// Which weighted representation a trace follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Average over `A = a_Y`, weights `w_c * w_d * w_lad`.
    Nu1,
    /// Average over `A = a_D`, weights `w_c * w_y * w_lay`.
    Nu2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub subject_id: String,
    pub s: usize,
    pub w_c: f64,
    pub w_d: f64,
    pub w_lad: f64,
    pub w_y: f64,
    pub w_lay: f64,
    pub product: f64,
}

/// Cumulative weights at every record of every subject averaged by the
/// representation. Families not used by the representation are reported as 1.
/// The outcome weight needs the outcome hazard at `s`, so for `Nu2` only
/// records in the outcome risk set are listed.
pub fn weight_trace(ds: &EventHistoryDataset, ns: &NuisanceSet, r: Regime, rep: Representation) -> Result<Vec<TraceRow>> {
    let arm = match rep {
        Representation::Nu1 => r.a_y,
        Representation::Nu2 => r.a_d,
    };
    let mut out = Vec::new();
    for subject in ds.subjects() {
        if subject[0].a != arm {
            continue;
        }
        let sh = SubjectHistory::new(subject);
        for (s, rec) in subject.iter().enumerate() {
            let wc = w_c(ns, &sh, s, arm)?;
            let mut row =
                TraceRow { subject_id: rec.subject_id.clone(), s: rec.k, w_c: wc, w_d: 1.0, w_lad: 1.0, w_y: 1.0, w_lay: 1.0, product: 0.0 };
            match rep {
                Representation::Nu1 => {
                    row.w_d = w_d(ns, &sh, s, r)?;
                    row.w_lad = w_lad(ns, &sh, s, r)?;
                }
                Representation::Nu2 => {
                    if !RiskSetKind::YHazard.admits(rec) {
                        continue;
                    }
                    row.w_y = w_y(ns, &sh, s, r)?;
                    row.w_lay = w_lay(ns, &sh, s, r)?;
                }
            }
            row.product = row.w_c * row.w_d * row.w_lad * row.w_y * row.w_lay;
            out.push(row);
        }
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::io("weight trace", e);
    wr.write_record(["id", "s", "w_c", "w_d", "w_lad", "w_y", "w_lay", "product"]).map_err(io)?;
    for r in rows {
        wr.write_record([
            r.subject_id.clone(),
            r.s.to_string(),
            r.w_c.to_string(),
            r.w_d.to_string(),
            r.w_lad.to_string(),
            r.w_y.to_string(),
            r.w_lay.to_string(),
            r.product.to_string(),
        ])
        .map_err(io)?;
    }
    wr.flush().map_err(|e| Error::io("weight trace", e))
}
