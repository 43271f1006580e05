//! Exact functionals of an enumerated process: counterfactual risks, the
//! identifying formula and weighted averages evaluated on the observed law,
//! and the quantities that diagnose assumption failures.

use std::collections::{HashMap, HashSet};

use super::law::{cumulate, enumerate, End, ExactLaw};
use super::spec::{Arms, DgpSpec};
use crate::error::{Error, Result};
use crate::glm::CovariatePartition;
use crate::regime::Regime;
use crate::weights::{Representation, SensitivityFunction, TableOffset};

/// `Pr(Y_{k+1} = 1)` for `k = 0..=horizon` with both components set and no
/// censoring.
pub fn true_counterfactual_risk(spec: &DgpSpec, r: Regime) -> Result<Vec<f64>> {
    Ok(enumerate(spec, spec.two_way(r.a_y, r.a_d)?, false)?.outcome_cif(spec.horizon))
}

/// As [`true_counterfactual_risk`] for a process with a third component.
pub fn true_risk_three_way(spec: &DgpSpec, a_y: u8, a_d: u8, a_z: u8) -> Result<Vec<f64>> {
    if !spec.uses_a_z() {
        return Err(Error::InvalidDgp("process has no third component".into()));
    }
    Ok(enumerate(spec, Arms { a_y, a_d, a_z: Some(a_z) }, false)?.outcome_cif(spec.horizon))
}

/// Measured covariates split into the two blocks, `A_D` block first.
#[derive(Debug, Clone)]
struct BlockOrder {
    order: Vec<usize>,
    n_ad: usize,
}

impl BlockOrder {
    fn new(spec: &DgpSpec, partition: &CovariatePartition) -> Result<Self> {
        let measured = spec.measured();
        if partition.len() != measured.len() {
            return Err(Error::PartitionMismatch(format!(
                "partition covers {} covariates, the process measures {}",
                partition.len(),
                measured.len()
            )));
        }
        let ad: Vec<usize> = (0..measured.len()).filter(|&i| partition.is_ad(i)).map(|i| measured[i]).collect();
        let n_ad = ad.len();
        let mut order = ad;
        order.extend((0..measured.len()).filter(|&i| !partition.is_ad(i)).map(|i| measured[i]));
        Ok(BlockOrder { order, n_ad })
    }

    fn width(&self) -> usize {
        self.order.len()
    }

    fn n_ay(&self) -> usize {
        self.order.len() - self.n_ad
    }

    fn flatten(&self, values: &[Vec<u32>]) -> Vec<u32> {
        values.iter().flat_map(|row| self.order.iter().map(move |&c| row[c])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Tag {
    /// Has record `j`; keyed by the history through `j - 1`.
    Rec,
    /// Has record `j`; history through `j - 1` plus the `A_D` block at `j`.
    RecAd,
    /// Has record `j`; full history through `j`.
    RecFull,
    Uncensored,
    Competing,
    UncensoredNoCompeting,
    Outcome,
}

/// Probability mass of every history prefix, by event status.
#[derive(Debug, Clone, Default)]
struct Masses(HashMap<(Tag, usize, Vec<u32>), f64>);

impl Masses {
    fn new(law: &ExactLaw, blocks: &BlockOrder) -> Self {
        let w = blocks.width();
        let mut m = Masses::default();
        for t in &law.trajectories {
            let h = blocks.flatten(&t.values);
            for j in 0..t.records() {
                let full = &h[..(j + 1) * w];
                m.add(Tag::Rec, j, &h[..j * w], t.prob);
                m.add(Tag::RecAd, j, &h[..j * w + blocks.n_ad], t.prob);
                m.add(Tag::RecFull, j, full, t.prob);
                let tags: &[Tag] = match t.end {
                    End::Censored(s) if s == j => &[],
                    End::Competing(s) if s == j => &[Tag::Uncensored, Tag::Competing],
                    End::Outcome(s) if s == j => &[Tag::Uncensored, Tag::UncensoredNoCompeting, Tag::Outcome],
                    _ => &[Tag::Uncensored, Tag::UncensoredNoCompeting],
                };
                for &tag in tags {
                    m.add(tag, j, full, t.prob);
                }
            }
        }
        m
    }

    fn add(&mut self, tag: Tag, j: usize, key: &[u32], p: f64) {
        *self.0.entry((tag, j, key.to_vec())).or_insert(0.0) += p;
    }

    fn get(&self, tag: Tag, j: usize, key: &[u32]) -> f64 {
        self.0.get(&(tag, j, key.to_vec())).copied().unwrap_or(0.0)
    }

    fn ratio(&self, num: Tag, den: Tag, j: usize, num_key: &[u32], den_key: &[u32]) -> Result<f64> {
        let d = self.get(den, j, den_key);
        if d <= 0.0 {
            return Err(Error::UndefinedConditional(format!("{num:?} given {den:?} at interval {j}, history {den_key:?}")));
        }
        Ok(self.get(num, j, num_key) / d)
    }

    fn hazard_y(&self, j: usize, full: &[u32]) -> Result<f64> {
        self.ratio(Tag::Outcome, Tag::UncensoredNoCompeting, j, full, full)
    }

    fn hazard_d(&self, j: usize, full: &[u32]) -> Result<f64> {
        self.ratio(Tag::Competing, Tag::Uncensored, j, full, full)
    }

    fn uncensored(&self, j: usize, full: &[u32]) -> Result<f64> {
        self.ratio(Tag::Uncensored, Tag::RecFull, j, full, full)
    }
}

fn level_grid(levels: &[u32]) -> Vec<Vec<u32>> {
    let mut grid = vec![Vec::new()];
    for &l in levels {
        grid = grid.into_iter().flat_map(|g| (0..l).map(move |v| [g.as_slice(), &[v]].concat())).collect();
    }
    grid
}

/// The observed two-arm law of a process, with every conditional the
/// identifying formula and the weights need.
pub struct ObservedLaw<'a> {
    spec: &'a DgpSpec,
    blocks: BlockOrder,
    laws: [ExactLaw; 2],
    masses: [Masses; 2],
}

impl<'a> ObservedLaw<'a> {
    pub fn new(spec: &'a DgpSpec, partition: &CovariatePartition) -> Result<Self> {
        let blocks = BlockOrder::new(spec, partition)?;
        let laws = [enumerate(spec, spec.arm(0), true)?, enumerate(spec, spec.arm(1), true)?];
        let masses = [Masses::new(&laws[0], &blocks), Masses::new(&laws[1], &blocks)];
        Ok(ObservedLaw { spec, blocks, laws, masses })
    }

    pub fn arm_law(&self, a: u8) -> &ExactLaw {
        &self.laws[a as usize]
    }

    /// The identifying formula with the outcome hazard from arm `a_Y`, the
    /// competing hazard and `A_D` block from arm `a_D`, and the `A_Y` block
    /// from arm `a_Y`.
    pub fn gformula(&self, r: Regime) -> Result<Vec<f64>> {
        self.gformula_arms(r.a_y, r.a_d, r.a_d, r.a_y)
    }

    /// Three-component version: all covariates from arm `a_Z`.
    pub fn gformula_three_way(&self, a_y: u8, a_d: u8, a_z: u8) -> Result<Vec<f64>> {
        self.gformula_arms(a_y, a_d, a_z, a_z)
    }

    fn gformula_arms(&self, y: u8, d: u8, lad: u8, lay: u8) -> Result<Vec<f64>> {
        let levels = |cs: &[usize]| -> Vec<u32> { cs.iter().map(|&c| self.spec.covariates[c].levels).collect() };
        let grids = (
            level_grid(&levels(&self.blocks.order[..self.blocks.n_ad])),
            level_grid(&levels(&self.blocks.order[self.blocks.n_ad..])),
        );
        let mut inc = vec![0.0; self.spec.horizon + 1];
        let arms = [y, d, lad, lay].map(|a| &self.masses[a as usize]);
        self.gformula_step(0, 1.0, &mut Vec::new(), &grids, arms, &mut inc)?;
        Ok(cumulate(inc))
    }

    fn gformula_step(
        &self,
        j: usize,
        mass: f64,
        h: &mut Vec<u32>,
        grids: &(Vec<Vec<u32>>, Vec<Vec<u32>>),
        [my, md, mlad, mlay]: [&Masses; 4],
        inc: &mut [f64],
    ) -> Result<()> {
        let start = h.len();
        for ad in &grids.0 {
            h.truncate(start);
            h.extend(ad);
            let f_ad = if ad.is_empty() { 1.0 } else { mlad.ratio(Tag::RecAd, Tag::Rec, j, h, &h[..start])? };
            if f_ad == 0.0 {
                continue;
            }
            let mid = h.len();
            for ay in &grids.1 {
                h.truncate(mid);
                h.extend(ay);
                let f_ay = mlay.ratio(Tag::RecFull, Tag::RecAd, j, h, &h[..mid])?;
                if f_ay == 0.0 {
                    continue;
                }
                let m = mass * f_ad * f_ay;
                let d_free = 1.0 - md.hazard_d(j, h)?;
                if d_free == 0.0 {
                    continue;
                }
                let hy = my.hazard_y(j, h)?;
                inc[j] += m * d_free * hy;
                let next = m * d_free * (1.0 - hy);
                if j < self.spec.horizon && next > 0.0 {
                    self.gformula_step(j + 1, next, h, grids, [my, md, mlad, mlay], inc)?;
                }
            }
        }
        h.truncate(start);
        Ok(())
    }

    /// Exact expectation of a weighted estimator: the outcome indicator times
    /// the representation's weights, averaged over the arm it draws from.
    /// Treatment probabilities assume equal allocation to the two arms.
    pub fn weighted(&self, r: Regime, rep: Representation) -> Result<Vec<f64>> {
        self.weighted_with(r, rep, None)
    }

    /// The second representation with the outcome hazard under `a_Y` moved by
    /// the offset `t`.
    pub fn weighted_dagger(&self, r: Regime, t: &dyn SensitivityFunction) -> Result<Vec<f64>> {
        self.weighted_with(r, Representation::Nu2, Some(t))
    }

    fn weighted_with(&self, r: Regime, rep: Representation, t: Option<&dyn SensitivityFunction>) -> Result<Vec<f64>> {
        let arm = match rep {
            Representation::Nu1 => r.a_y,
            Representation::Nu2 => r.a_d,
        };
        let measured = self.spec.measured();
        let mut inc = vec![0.0; self.spec.horizon + 1];
        for traj in &self.laws[arm as usize].trajectories {
            let End::Outcome(s) = traj.end else { continue };
            let h = self.blocks.flatten(&traj.values);
            let mut w = self.w_c(&h, s, arm)?;
            if !r.is_diagonal() {
                match rep {
                    Representation::Nu1 => w *= self.w_d(&h, s, r)? * self.w_lad(&h, s, r)?,
                    Representation::Nu2 => {
                        let rows: Vec<Vec<f64>> =
                            traj.values.iter().map(|v| measured.iter().map(|&c| f64::from(v[c])).collect()).collect();
                        let hist: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                        w *= self.w_y(&h, &hist, s, r, t)? * self.w_lay(&h, s, r)?;
                    }
                }
            }
            inc[s] += traj.prob * w;
        }
        Ok(cumulate(inc))
    }

    fn full<'h>(&self, h: &'h [u32], j: usize) -> &'h [u32] {
        &h[..(j + 1) * self.blocks.width()]
    }

    fn w_c(&self, h: &[u32], s: usize, arm: u8) -> Result<f64> {
        let mut w = 1.0;
        for j in 0..=s {
            w /= self.masses[arm as usize].uncensored(j, self.full(h, j))?;
        }
        Ok(w)
    }

    fn w_d(&self, h: &[u32], s: usize, r: Regime) -> Result<f64> {
        let mut w = 1.0;
        for j in 0..=s {
            let f = self.full(h, j);
            w *= (1.0 - self.masses[r.a_d as usize].hazard_d(j, f)?) / (1.0 - self.masses[r.a_y as usize].hazard_d(j, f)?);
        }
        Ok(w)
    }

    /// `Pr(A = a | key)` under equal allocation.
    fn arm_prob(&self, tag: Tag, j: usize, key: &[u32], a: u8) -> Result<f64> {
        let m = [self.masses[0].get(tag, j, key), self.masses[1].get(tag, j, key)];
        let total = m[0] + m[1];
        if total <= 0.0 {
            return Err(Error::UndefinedConditional(format!("treatment given {tag:?} at interval {j}")));
        }
        Ok(m[a as usize] / total)
    }

    fn w_lad(&self, h: &[u32], s: usize, r: Regime) -> Result<f64> {
        if self.blocks.n_ad == 0 {
            return Ok(1.0);
        }
        let w_len = self.blocks.width();
        let mut w = 1.0;
        for j in 0..=s {
            let lad = &h[..j * w_len + self.blocks.n_ad];
            let past = &h[..j * w_len];
            w *= self.arm_prob(Tag::RecAd, j, lad, r.a_d)? / self.arm_prob(Tag::RecAd, j, lad, r.a_y)?;
            w *= self.arm_prob(Tag::Rec, j, past, r.a_y)? / self.arm_prob(Tag::Rec, j, past, r.a_d)?;
        }
        Ok(w)
    }

    fn w_lay(&self, h: &[u32], s: usize, r: Regime) -> Result<f64> {
        if self.blocks.n_ay() == 0 {
            return Ok(1.0);
        }
        let w_len = self.blocks.width();
        let mut w = 1.0;
        for j in 0..=s {
            let full = self.full(h, j);
            let lad = &h[..j * w_len + self.blocks.n_ad];
            w *= self.arm_prob(Tag::RecFull, j, full, r.a_y)? / self.arm_prob(Tag::RecFull, j, full, r.a_d)?;
            w *= self.arm_prob(Tag::RecAd, j, lad, r.a_d)? / self.arm_prob(Tag::RecAd, j, lad, r.a_y)?;
        }
        Ok(w)
    }

    fn w_y(&self, h: &[u32], hist: &[&[f64]], s: usize, r: Regime, t: Option<&dyn SensitivityFunction>) -> Result<f64> {
        let (my, md) = (&self.masses[r.a_y as usize], &self.masses[r.a_d as usize]);
        let sign = if r.a_d == 0 { 1.0 } else { -1.0 };
        let shifted = |j: usize| -> Result<f64> {
            let base = my.hazard_y(j, self.full(h, j))?;
            Ok(match t {
                Some(t) => base + sign * t.offset(j, &hist[..=j], r.a_y),
                None => base,
            })
        };
        let mut w = shifted(s)? / md.hazard_y(s, self.full(h, s))?;
        for j in 0..s {
            w *= (1.0 - shifted(j)?) / (1.0 - md.hazard_y(j, self.full(h, j))?);
        }
        Ok(w)
    }
}

/// The offset that makes the shifted estimator exact: for each measured
/// history and `a_Y`, the outcome hazard with `A_D = 0` minus that with
/// `A_D = 1`, both without censoring. Histories where either hazard is
/// undefined are left out.
pub fn oracle_sensitivity_t(spec: &DgpSpec) -> Result<TableOffset> {
    let partition = CovariatePartition::all_ad(&spec.schema());
    let blocks = BlockOrder::new(spec, &partition)?;
    let w = blocks.width();
    let mut table = HashMap::new();
    for a_y in 0..=1u8 {
        let laws = [enumerate(spec, spec.two_way(a_y, 0)?, false)?, enumerate(spec, spec.two_way(a_y, 1)?, false)?];
        let masses = [Masses::new(&laws[0], &blocks), Masses::new(&laws[1], &blocks)];
        let mut seen = HashSet::new();
        for t in laws.iter().flat_map(|l| &l.trajectories) {
            let h = blocks.flatten(&t.values);
            for j in 0..t.records() {
                let full = &h[..(j + 1) * w];
                if !seen.insert((j, full.to_vec())) {
                    continue;
                }
                if let (Ok(h0), Ok(h1)) = (masses[0].hazard_y(j, full), masses[1].hazard_y(j, full)) {
                    let rows: Vec<Vec<f64>> =
                        (0..=j).map(|i| full[i * w..(i + 1) * w].iter().map(|v| f64::from(*v)).collect()).collect();
                    let hist: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                    table.insert(TableOffset::key(j, &hist, a_y), h0 - h1);
                }
            }
        }
    }
    Ok(TableOffset { table })
}

/// Largest violation of each dismissible-component condition, measured as an
/// absolute difference of conditional probabilities between regimes that
/// differ only in the component that should not matter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DismissibleGaps {
    /// Outcome hazard across `a_D`.
    pub y: f64,
    /// Competing-event hazard across `a_Y`.
    pub d: f64,
    /// `A_Y` block density across `a_D`.
    pub l_ay: f64,
    /// `A_D` block density across `a_Y`.
    pub l_ad: f64,
}

impl DismissibleGaps {
    pub fn max(&self) -> f64 {
        self.y.max(self.d).max(self.l_ay).max(self.l_ad)
    }
}

fn max_gap(a: &Masses, b: &Masses, num: Tag, den: Tag, den_len: impl Fn(usize, usize) -> usize) -> f64 {
    let mut gap: f64 = 0.0;
    for ((tag, j, key), _) in a.0.iter().chain(b.0.iter()) {
        if *tag != num {
            continue;
        }
        let dk = &key[..den_len(*j, key.len())];
        if let (Ok(x), Ok(y)) = (a.ratio(num, den, *j, key, dk), b.ratio(num, den, *j, key, dk)) {
            gap = gap.max((x - y).abs());
        }
    }
    gap
}

/// Gaps computed from the censoring-free laws of all four regimes.
pub fn dismissible_gaps(spec: &DgpSpec, partition: &CovariatePartition) -> Result<DismissibleGaps> {
    let blocks = BlockOrder::new(spec, partition)?;
    let w = blocks.width();
    let n_ad = blocks.n_ad;
    let mut m: HashMap<(u8, u8), Masses> = HashMap::new();
    for r in Regime::all() {
        m.insert((r.a_y, r.a_d), Masses::new(&enumerate(spec, spec.two_way(r.a_y, r.a_d)?, false)?, &blocks));
    }
    let mut g = DismissibleGaps::default();
    for a in 0..=1u8 {
        let same = |_: usize, len: usize| len;
        g.y = g.y.max(max_gap(&m[&(a, 0)], &m[&(a, 1)], Tag::Outcome, Tag::UncensoredNoCompeting, same));
        g.d = g.d.max(max_gap(&m[&(0, a)], &m[&(1, a)], Tag::Competing, Tag::Uncensored, same));
        g.l_ad = g.l_ad.max(max_gap(&m[&(0, a)], &m[&(1, a)], Tag::RecAd, Tag::Rec, |j, _| j * w));
        g.l_ay = g.l_ay.max(max_gap(&m[&(a, 0)], &m[&(a, 1)], Tag::RecFull, Tag::RecAd, |j, _| j * w + n_ad));
    }
    Ok(g)
}
