//! Risk-curve estimators, effect contrasts and the nonparametric bootstrap.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_history::{Design, EventHistoryDataset, IntervalRecord};
use crate::glm::CovariatePartition;
use crate::par::{map_indexed, Execution};
use crate::regime::Regime;
use crate::weights::{w_c, w_d, w_lad, w_lay, w_y, w_y_dagger, NuisanceSet, SensitivityFunction, SubjectHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorTag {
    Nu1,
    Nu2,
    Nu2Dagger,
    GFormula,
    AalenJohansen,
    /// Inverse-probability-of-censoring weighted empirical incidence.
    IpcwCif,
}

impl EstimatorTag {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::Nu1 => "nu1",
            EstimatorTag::Nu2 => "nu2",
            EstimatorTag::Nu2Dagger => "nu2_dagger",
            EstimatorTag::GFormula => "gformula",
            EstimatorTag::AalenJohansen => "aalen_johansen",
            EstimatorTag::IpcwCif => "ipcw_cif",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Self::Nu1, Self::Nu2, Self::Nu2Dagger, Self::GFormula, Self::AalenJohansen, Self::IpcwCif]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Formula(format!("unknown estimator '{s}'")))
    }
}

/// Treatment values a curve refers to; `a_z` only for three-component curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CurveRegime {
    pub a_y: u8,
    pub a_d: u8,
    pub a_z: Option<u8>,
}

impl From<Regime> for CurveRegime {
    fn from(r: Regime) -> Self {
        CurveRegime { a_y: r.a_y, a_d: r.a_d, a_z: None }
    }
}

impl fmt::Display for CurveRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ay={};ad={}", self.a_y, self.a_d)?;
        if let Some(z) = self.a_z {
            write!(f, ";az={z}")?;
        }
        Ok(())
    }
}

/// Estimated `Pr(Y_{k+1} = 1)` for `k = 0..=K`, as computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub regime: CurveRegime,
    pub values: Vec<f64>,
    pub tag: EstimatorTag,
}

impl RiskCurve {
    /// Values forced into `[0, 1]` and made non-decreasing, for display only.
    pub fn reported(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut running: f64 = 0.0;
        for v in &self.values {
            running = running.max(v.clamp(0.0, 1.0));
            out.push(running);
        }
        out
    }

    /// Which entries [`RiskCurve::reported`] changes.
    pub fn clip_flags(&self) -> Vec<bool> {
        self.reported().iter().zip(&self.values).map(|(r, v)| r != v).collect()
    }
}

fn arm_subjects(ds: &EventHistoryDataset, arm: u8) -> Result<Vec<&[IntervalRecord]>> {
    let subjects: Vec<_> = ds.subjects().filter(|s| s[0].a == arm).collect();
    if subjects.is_empty() {
        return Err(Error::NoSubjectsInArm(arm));
    }
    Ok(subjects)
}

/// Sum of `weight(subject, s)` over subjects in `arm` whose outcome occurs at
/// record `s`, accumulated over intervals and divided by the arm size.
fn weighted_incidence(
    ds: &EventHistoryDataset,
    arm: u8,
    weight: impl Fn(&SubjectHistory, usize) -> Result<f64>,
) -> Result<Vec<f64>> {
    let subjects = arm_subjects(ds, arm)?;
    let mut inc = vec![0.0; ds.horizon() + 1];
    for s in &subjects {
        let last = s.len() - 1;
        if !s[last].event() {
            continue;
        }
        let sh = SubjectHistory::new(s);
        inc[s[last].k] += weight(&sh, last)?;
    }
    let n = subjects.len() as f64;
    let mut acc = 0.0;
    Ok(inc
        .into_iter()
        .map(|x| {
            acc += x;
            acc / n
        })
        .collect())
}

/// Outcome incidence in arm `a` with each event weighted by its inverse
/// probability of remaining uncensored.
pub fn ipcw_empirical_cif(ds: &EventHistoryDataset, ns: &NuisanceSet, a: u8) -> Result<RiskCurve> {
    let values = weighted_incidence(ds, a, |sh, s| w_c(ns, sh, s, a))?;
    Ok(RiskCurve { regime: Regime { a_y: a, a_d: a }.into(), values, tag: EstimatorTag::IpcwCif })
}

/// Weighted average over the `A = a_Y` arm with weights `w_c * w_d * w_lad`.
pub fn estimate_nu1(ds: &EventHistoryDataset, ns: &NuisanceSet, r: Regime) -> Result<RiskCurve> {
    let values = weighted_incidence(ds, r.a_y, |sh, s| Ok(w_c(ns, sh, s, r.a_y)? * w_d(ns, sh, s, r)? * w_lad(ns, sh, s, r)?))?;
    Ok(RiskCurve { regime: r.into(), values, tag: EstimatorTag::Nu1 })
}

/// Weighted average over the `A = a_D` arm with weights `w_c * w_y * w_lay`.
pub fn estimate_nu2(ds: &EventHistoryDataset, ns: &NuisanceSet, r: Regime) -> Result<RiskCurve> {
    let values = weighted_incidence(ds, r.a_d, |sh, s| Ok(w_c(ns, sh, s, r.a_d)? * w_y(ns, sh, s, r)? * w_lay(ns, sh, s, r)?))?;
    Ok(RiskCurve { regime: r.into(), values, tag: EstimatorTag::Nu2 })
}

/// [`estimate_nu2`] with the outcome hazard under `a_Y` shifted by `t`.
pub fn estimate_nu2_dagger(
    ds: &EventHistoryDataset,
    ns: &NuisanceSet,
    r: Regime,
    t: &dyn SensitivityFunction,
) -> Result<RiskCurve> {
    let values =
        weighted_incidence(ds, r.a_d, |sh, s| Ok(w_c(ns, sh, s, r.a_d)? * w_y_dagger(ns, sh, s, r, t)? * w_lay(ns, sh, s, r)?))?;
    Ok(RiskCurve { regime: r.into(), values, tag: EstimatorTag::Nu2Dagger })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    Outcome,
    Competing,
}

/// Discrete-time Aalen-Johansen incidence of `cause` in arm `a`, with every
/// uncensored person-interval weighted by its inverse probability of
/// remaining uncensored.
pub fn ipcw_aalen_johansen(ds: &EventHistoryDataset, ns: &NuisanceSet, cause: Cause, a: u8) -> Result<RiskCurve> {
    let subjects = arm_subjects(ds, a)?;
    let horizon = ds.horizon();
    // weighted totals per interval: at risk, outcome, competing event
    let mut at_risk = vec![0.0; horizon + 1];
    let mut y = vec![0.0; horizon + 1];
    let mut d = vec![0.0; horizon + 1];
    for s in &subjects {
        let sh = SubjectHistory::new(s);
        for (j, rec) in s.iter().enumerate() {
            if rec.censored() {
                break;
            }
            let w = w_c(ns, &sh, j, a)?;
            at_risk[rec.k] += w;
            if rec.competing() {
                d[rec.k] += w;
            } else if rec.event() {
                y[rec.k] += w;
            }
        }
    }
    let mut surv = 1.0;
    let mut cif = 0.0;
    let mut values = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if at_risk[k] > 0.0 {
            let (py, pd) = (y[k] / at_risk[k], d[k] / at_risk[k]);
            cif += surv * if cause == Cause::Outcome { py } else { pd };
            surv *= 1.0 - py - pd;
        }
        values.push(cif);
    }
    Ok(RiskCurve { regime: Regime { a_y: a, a_d: a }.into(), values, tag: EstimatorTag::AalenJohansen })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Count {
    /// Has record `j`; history through `j - 1`.
    Rec,
    /// Has record `j`; history through `j - 1` and the `A_D` block at `j`.
    RecAd,
    /// Has record `j`; full history through `j`.
    RecFull,
    Uncensored,
    Competing,
    UncensoredNoCompeting,
    Outcome,
}

/// Subject counts per arm for every history prefix, with covariates of each
/// interval laid out `A_D` block first.
struct HistoryCounts {
    counts: [HashMap<(Count, usize, Vec<i64>), f64>; 2],
    order: Vec<usize>,
    n_ad: usize,
    /// Distinct `A_D` and `A_Y` block values seen at each interval.
    seen: Vec<(BTreeSet<Vec<i64>>, BTreeSet<Vec<i64>>)>,
}

impl HistoryCounts {
    fn new(ds: &EventHistoryDataset, partition: &CovariatePartition) -> Result<Self> {
        let schema = ds.schema();
        if ds.design() != Design::TwoArm {
            return Err(Error::SchemaMismatch("the plug-in formula reads a two-arm trial".into()));
        }
        if let Some(c) = schema.entries().iter().find(|c| !c.kind.is_discrete()) {
            return Err(Error::ContinuousCovariate(c.name.clone()));
        }
        if partition.len() != schema.len() {
            return Err(Error::PartitionMismatch(format!(
                "partition covers {} covariates, schema has {}",
                partition.len(),
                schema.len()
            )));
        }
        let mut order: Vec<usize> = (0..schema.len()).filter(|&i| partition.is_ad(i)).collect();
        let n_ad = order.len();
        order.extend((0..schema.len()).filter(|&i| !partition.is_ad(i)));
        let w = order.len();
        let mut hc = HistoryCounts { counts: Default::default(), order, n_ad, seen: vec![Default::default(); ds.horizon() + 1] };
        for s in ds.subjects() {
            let arm = s[0].a as usize;
            let h: Vec<i64> = s.iter().flat_map(|r| hc.order.iter().map(|&c| r.l[c] as i64)).collect();
            for (j, rec) in s.iter().enumerate() {
                let full = &h[..(j + 1) * w];
                let row = &h[j * w..(j + 1) * w];
                hc.seen[j].0.insert(row[..n_ad].to_vec());
                hc.seen[j].1.insert(row[n_ad..].to_vec());
                let counts = &mut hc.counts[arm];
                let mut add = |c: Count, key: &[i64]| *counts.entry((c, j, key.to_vec())).or_insert(0.0) += 1.0;
                add(Count::Rec, &h[..j * w]);
                add(Count::RecAd, &h[..j * w + n_ad]);
                add(Count::RecFull, full);
                if rec.censored() {
                    continue;
                }
                add(Count::Uncensored, full);
                if rec.competing() {
                    add(Count::Competing, full);
                    continue;
                }
                add(Count::UncensoredNoCompeting, full);
                if rec.event() {
                    add(Count::Outcome, full);
                }
            }
        }
        Ok(hc)
    }

    fn get(&self, arm: u8, c: Count, j: usize, key: &[i64]) -> f64 {
        self.counts[arm as usize].get(&(c, j, key.to_vec())).copied().unwrap_or(0.0)
    }

    fn ratio(&self, arm: u8, num: Count, den: Count, j: usize, num_key: &[i64], den_key: &[i64]) -> Result<f64> {
        let d = self.get(arm, den, j, den_key);
        if d == 0.0 {
            return Err(Error::EmptyCell(format!("{num:?} given {den:?} in arm {arm} at interval {j}, history {den_key:?}")));
        }
        Ok(self.get(arm, num, j, num_key) / d)
    }
}

/// Arms supplying each factor of the identifying formula.
#[derive(Clone, Copy)]
struct FactorArms {
    y: u8,
    d: u8,
    lad: u8,
    lay: u8,
}

fn plugin(hc: &HistoryCounts, horizon: usize, arms: FactorArms) -> Result<Vec<f64>> {
    let mut inc = vec![0.0; horizon + 1];
    plugin_step(hc, horizon, arms, 0, 1.0, &mut Vec::new(), &mut inc)?;
    let mut acc = 0.0;
    Ok(inc.into_iter().map(|x| {
        acc += x;
        acc
    })
    .collect())
}

fn plugin_step(
    hc: &HistoryCounts,
    horizon: usize,
    arms: FactorArms,
    j: usize,
    mass: f64,
    h: &mut Vec<i64>,
    inc: &mut [f64],
) -> Result<()> {
    let start = h.len();
    for ad in &hc.seen[j].0 {
        h.truncate(start);
        h.extend(ad);
        let f_ad = if hc.n_ad == 0 { 1.0 } else { hc.ratio(arms.lad, Count::RecAd, Count::Rec, j, h, &h[..start])? };
        if f_ad == 0.0 {
            continue;
        }
        let mid = h.len();
        for ay in &hc.seen[j].1 {
            h.truncate(mid);
            h.extend(ay);
            let f_ay = hc.ratio(arms.lay, Count::RecFull, Count::RecAd, j, h, &h[..mid])?;
            if f_ay == 0.0 {
                continue;
            }
            let m = mass * f_ad * f_ay;
            let d_free = 1.0 - hc.ratio(arms.d, Count::Competing, Count::Uncensored, j, h, h)?;
            if d_free == 0.0 {
                continue;
            }
            let hy = hc.ratio(arms.y, Count::Outcome, Count::UncensoredNoCompeting, j, h, h)?;
            inc[j] += m * d_free * hy;
            let next = m * d_free * (1.0 - hy);
            if j < horizon && next > 0.0 {
                plugin_step(hc, horizon, arms, j + 1, next, h, inc)?;
            }
        }
    }
    h.truncate(start);
    Ok(())
}

/// The identifying formula with every conditional replaced by its empirical
/// frequency, summed over the covariate histories seen in the data. The
/// outcome hazard and the `A_Y` block come from arm `a_Y`, the competing
/// hazard and the `A_D` block from arm `a_D`.
pub fn gformula_plugin(ds: &EventHistoryDataset, r: Regime, partition: &CovariatePartition) -> Result<RiskCurve> {
    arm_subjects(ds, r.a_y)?;
    arm_subjects(ds, r.a_d)?;
    let hc = HistoryCounts::new(ds, partition)?;
    let values = plugin(&hc, ds.horizon(), FactorArms { y: r.a_y, d: r.a_d, lad: r.a_d, lay: r.a_y })?;
    Ok(RiskCurve { regime: r.into(), values, tag: EstimatorTag::GFormula })
}

/// Three-component version: the covariate density comes from arm `a_Z`.
pub fn gformula_three_way(ds: &EventHistoryDataset, a_y: u8, a_d: u8, a_z: u8) -> Result<RiskCurve> {
    for a in [a_y, a_d, a_z] {
        if a > 1 {
            return Err(Error::MissingRegime(format!("component value {a}")));
        }
        arm_subjects(ds, a)?;
    }
    let hc = HistoryCounts::new(ds, &CovariatePartition::all_ad(ds.schema()))?;
    let values = plugin(&hc, ds.horizon(), FactorArms { y: a_y, d: a_d, lad: a_z, lay: a_z })?;
    Ok(RiskCurve { regime: CurveRegime { a_y, a_d, a_z: Some(a_z) }, values, tag: EstimatorTag::GFormula })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    /// `nu(1,1) - nu(0,0)`.
    Total,
    /// `nu(1,a_D) - nu(0,a_D)`.
    AySeparable { a_d: u8 },
    /// `nu(a_Y,1) - nu(a_Y,0)`.
    AdSeparable { a_y: u8 },
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectKind::Total => write!(f, "total"),
            EffectKind::AySeparable { a_d } => write!(f, "ay_separable(ad={a_d})"),
            EffectKind::AdSeparable { a_y } => write!(f, "ad_separable(ay={a_y})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub kind: EffectKind,
    pub point: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub resamples: usize,
}

impl EffectEstimate {
    /// Intervals whose percentile bounds do not bracket the point estimate.
    /// Percentile intervals need not contain the estimate; this reports it.
    pub fn point_outside_interval(&self) -> Vec<bool> {
        (0..self.point.len())
            .map(|k| self.resamples > 0 && !(self.ci_low[k] <= self.point[k] && self.point[k] <= self.ci_high[k]))
            .collect()
    }
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Total and separable effects from the four two-component curves. No
/// intervals are attached.
pub fn effect_contrasts(curves: &[RiskCurve]) -> Result<Vec<EffectEstimate>> {
    let find = |a_y: u8, a_d: u8| -> Result<&RiskCurve> {
        curves
            .iter()
            .find(|c| c.regime == CurveRegime { a_y, a_d, a_z: None })
            .ok_or_else(|| Error::MissingRegime(format!("ay={a_y};ad={a_d}")))
    };
    let nu = [[find(0, 0)?, find(0, 1)?], [find(1, 0)?, find(1, 1)?]];
    let len = nu[0][0].values.len();
    if nu.iter().flatten().any(|c| c.values.len() != len) {
        return Err(Error::SchemaMismatch("curves differ in horizon".into()));
    }
    let v = |a_y: usize, a_d: usize| nu[a_y][a_d].values.as_slice();
    let make = |kind, point: Vec<f64>| EffectEstimate { kind, ci_low: point.clone(), ci_high: point.clone(), point, resamples: 0 };
    Ok(vec![
        make(EffectKind::Total, difference(v(1, 1), v(0, 0))),
        make(EffectKind::AySeparable { a_d: 0 }, difference(v(1, 0), v(0, 0))),
        make(EffectKind::AySeparable { a_d: 1 }, difference(v(1, 1), v(0, 1))),
        make(EffectKind::AdSeparable { a_y: 0 }, difference(v(0, 1), v(0, 0))),
        make(EffectKind::AdSeparable { a_y: 1 }, difference(v(1, 1), v(1, 0))),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
    pub level: f64,
    /// Largest tolerated fraction of resamples whose estimator fails.
    pub max_failure_fraction: f64,
    pub exec: Execution,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { resamples: 500, seed: 0, level: 0.95, max_failure_fraction: 0.1, exec: Execution::Parallel }
    }
}

/// Per-interval percentile intervals from resampled estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapIntervals {
    pub point: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Successful resamples.
    pub resamples: usize,
    pub failed: usize,
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Draws subjects with replacement from stream `stream` of the generator
/// seeded with `seed`; resampled subjects get fresh ids.
pub fn resample_subjects(ds: &EventHistoryDataset, seed: u64, stream: u64) -> EventHistoryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = ds.n_subjects();
    let subjects = (0..n)
        .map(|i| {
            let src = ds.subject(rng.random_range(0..n));
            src.iter().map(|r| IntervalRecord { subject_id: i.to_string(), ..r.clone() }).collect()
        })
        .collect();
    EventHistoryDataset::from_subjects(ds.schema().clone(), ds.horizon(), ds.design(), subjects)
}

/// Nonparametric bootstrap of a series-valued estimator. Resample `i` uses
/// stream `i` under `opts.seed`; the estimator is rerun in full on every resample.
pub fn bootstrap_series<F>(ds: &EventHistoryDataset, opts: &BootstrapOptions, estimator: F) -> Result<BootstrapIntervals>
where
    F: Fn(&EventHistoryDataset) -> Result<Vec<f64>> + Sync + Send,
{
    let point = estimator(ds)?;
    if opts.resamples == 0 {
        return Ok(BootstrapIntervals { low: point.clone(), high: point.clone(), point, resamples: 0, failed: 0 });
    }
    let draws = map_indexed(opts.exec, opts.resamples, |i| estimator(&resample_subjects(ds, opts.seed, i as u64)));
    let ok: Vec<Vec<f64>> = draws.into_iter().filter_map(|d| d.ok()).collect();
    let failed = opts.resamples - ok.len();
    if ok.is_empty() || failed as f64 > opts.max_failure_fraction * opts.resamples as f64 {
        return Err(Error::ResampleFitFailure { failed, total: opts.resamples });
    }
    let alpha = (1.0 - opts.level) / 2.0;
    let (mut low, mut high) = (Vec::with_capacity(point.len()), Vec::with_capacity(point.len()));
    for k in 0..point.len() {
        let mut col: Vec<f64> = ok.iter().map(|d| d[k]).collect();
        col.sort_by(f64::total_cmp);
        low.push(quantile_sorted(&col, alpha));
        high.push(quantile_sorted(&col, 1.0 - alpha));
    }
    Ok(BootstrapIntervals { point, low, high, resamples: ok.len(), failed })
}

/// Percentile interval for an effect series.
pub fn bootstrap_ci<F>(ds: &EventHistoryDataset, kind: EffectKind, opts: &BootstrapOptions, estimator: F) -> Result<EffectEstimate>
where
    F: Fn(&EventHistoryDataset) -> Result<Vec<f64>> + Sync + Send,
{
    let b = bootstrap_series(ds, opts, estimator)?;
    Ok(EffectEstimate { kind, point: b.point, ci_low: b.low, ci_high: b.high, resamples: b.resamples })
}
