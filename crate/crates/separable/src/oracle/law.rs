//! Exact enumeration of trajectory laws and Monte-Carlo draws from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Arms, DgpSpec, Draw, Target};
use crate::error::{Error, Result};
use crate::event_history::{Design, EventHistoryDataset, IntervalRecord};
use crate::par::{map_indexed, Execution};

/// Enumeration stops with an error beyond this many trajectories.
pub const MAX_TRAJECTORIES: usize = 10_000_000;

/// How a trajectory ends; the index is the last record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Censored(usize),
    Competing(usize),
    Outcome(usize),
    Survived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Values of every covariate, measured or not, per recorded interval.
    pub values: Vec<Vec<u32>>,
    pub end: End,
    pub prob: f64,
}

impl Trajectory {
    pub fn records(&self) -> usize {
        self.values.len()
    }
}

/// The full distribution of trajectories under fixed treatment arms.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLaw {
    pub arms: Arms,
    pub censoring: bool,
    pub trajectories: Vec<Trajectory>,
}

impl ExactLaw {
    pub fn total(&self) -> f64 {
        self.trajectories.iter().map(|t| t.prob).sum()
    }

    /// `Pr(Y_{k+1} = 1)` accumulated over `k = 0..=horizon`.
    pub fn outcome_cif(&self, horizon: usize) -> Vec<f64> {
        let mut inc = vec![0.0; horizon + 1];
        for t in &self.trajectories {
            if let End::Outcome(s) = t.end {
                inc[s] += t.prob;
            }
        }
        cumulate(inc)
    }
}

pub(crate) fn cumulate(mut v: Vec<f64>) -> Vec<f64> {
    for i in 1..v.len() {
        v[i] += v[i - 1];
    }
    v
}

struct Enumerator<'a> {
    spec: &'a DgpSpec,
    arms: Arms,
    censoring: bool,
    cap: usize,
    out: Vec<Trajectory>,
}

impl Enumerator<'_> {
    fn push(&mut self, t: Trajectory) -> Result<()> {
        if self.out.len() >= self.cap {
            return Err(Error::StateSpaceTooLarge(self.cap));
        }
        self.out.push(t);
        Ok(())
    }

    fn covariates(&mut self, k: usize, values: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, prob: f64) -> Result<()> {
        let c = current.len();
        if c == self.spec.covariates.len() {
            values.push(current.clone());
            let r = self.events(k, values, prob);
            values.pop();
            return r;
        }
        let options = covariate_options(self.spec, c, k, self.arms, values, current)?;
        for (level, p) in options {
            if p == 0.0 {
                continue;
            }
            current.push(level);
            let r = self.covariates(k, values, current, prob * p);
            current.pop();
            r?;
        }
        Ok(())
    }

    fn events(&mut self, k: usize, values: &mut Vec<Vec<u32>>, prob: f64) -> Result<()> {
        let (hist, cur) = values.split_at(k);
        let cur = &cur[0];
        let mut prob = prob;
        let mut targets = vec![(Target::D, End::Competing(k)), (Target::Y, End::Outcome(k))];
        if self.censoring && self.spec.has_censoring() {
            targets.insert(0, (Target::C, End::Censored(k)));
        }
        for (target, end) in targets {
            let p = event_prob(self.spec, target, k, self.arms, hist, cur)?;
            if p > 0.0 {
                self.push(Trajectory { values: values.clone(), end, prob: prob * p })?;
            }
            prob *= 1.0 - p;
            if prob == 0.0 {
                return Ok(());
            }
        }
        if k == self.spec.horizon {
            return self.push(Trajectory { values: values.clone(), end: End::Survived, prob });
        }
        self.covariates(k + 1, values, &mut Vec::new(), prob)
    }
}

fn covariate_options(
    spec: &DgpSpec,
    c: usize,
    k: usize,
    arms: Arms,
    values: &[Vec<u32>],
    current: &[u32],
) -> Result<Vec<(u32, f64)>> {
    if k > 0 && spec.covariates[c].baseline {
        return Ok(vec![(values[0][c], 1.0)]);
    }
    match spec.draw_for(Target::Covariate(c), k, arms, values, current)? {
        Draw::Carry => match k.checked_sub(1) {
            Some(j) => Ok(vec![(values[j][c], 1.0)]),
            None => Err(Error::InvalidDgp(format!("'{}' carried at interval 0", spec.covariates[c].name))),
        },
        Draw::Categorical(probs) => Ok(probs.iter().enumerate().map(|(l, p)| (l as u32, *p)).collect()),
        Draw::Bernoulli(_) => unreachable!("covariate rules never hold a Bernoulli draw"),
    }
}

fn event_prob(spec: &DgpSpec, target: Target, k: usize, arms: Arms, values: &[Vec<u32>], current: &[u32]) -> Result<f64> {
    match spec.draw_for(target, k, arms, values, current)? {
        Draw::Bernoulli(p) => Ok(*p),
        _ => unreachable!("event rules always hold a Bernoulli draw"),
    }
}

/// Enumerates every trajectory with positive probability under `arms`.
/// Without `censoring`, censoring rules are ignored.
pub fn enumerate(spec: &DgpSpec, arms: Arms, censoring: bool) -> Result<ExactLaw> {
    enumerate_capped(spec, arms, censoring, MAX_TRAJECTORIES)
}

fn enumerate_capped(spec: &DgpSpec, arms: Arms, censoring: bool, cap: usize) -> Result<ExactLaw> {
    let mut e = Enumerator { spec, arms, censoring, cap, out: Vec::new() };
    e.covariates(0, &mut Vec::new(), &mut Vec::new(), 1.0)?;
    Ok(ExactLaw { arms, censoring, trajectories: e.out })
}

/// Measured covariate values of one interval, in schema order.
fn measured_row(spec: &DgpSpec, values: &[u32]) -> Vec<f64> {
    spec.covariates.iter().zip(values).filter(|(c, _)| c.measured).map(|(_, v)| f64::from(*v)).collect()
}

fn trajectory_records(spec: &DgpSpec, t: &Trajectory, id: &str, a: u8, a_d: u8) -> Vec<IntervalRecord> {
    (0..t.records())
        .map(|j| {
            let (c_next, d_next, y_next) = match t.end {
                End::Censored(s) if s == j => (Some(true), None, None),
                End::Competing(s) if s == j => (Some(false), Some(true), None),
                End::Outcome(s) if s == j => (Some(false), Some(false), Some(true)),
                _ => (Some(false), Some(false), Some(false)),
            };
            IntervalRecord { subject_id: id.to_string(), k: j, a, a_d, l: measured_row(spec, &t.values[j]), c_next, d_next, y_next }
        })
        .collect()
}

/// Largest replication exponent tried when building exact-law datasets.
const MAX_DYADIC_EXPONENT: u32 = 20;

/// A two-arm dataset whose empirical distribution within each arm equals the
/// exact observed law: every trajectory is replicated `prob * 2^m` times, with
/// the same `m` for both arms. Requires dyadic trajectory probabilities.
pub fn dataset_from_law(spec: &DgpSpec) -> Result<EventHistoryDataset> {
    if spec.design != Design::TwoArm {
        return Err(Error::InvalidDgp("exact-law datasets are built for two-arm designs".into()));
    }
    let laws = [enumerate(spec, spec.arm(0), true)?, enumerate(spec, spec.arm(1), true)?];
    let exponent = (0..=MAX_DYADIC_EXPONENT)
        .find(|&m| {
            let scale = f64::from(2u32).powi(m as i32);
            laws.iter().flat_map(|l| &l.trajectories).all(|t| (t.prob * scale).fract() == 0.0)
        })
        .ok_or_else(|| Error::InvalidDgp(format!("trajectory probabilities are not multiples of 2^-{MAX_DYADIC_EXPONENT}")))?;
    let scale = f64::from(2u32).powi(exponent as i32);
    let mut subjects = Vec::new();
    for (a, law) in laws.iter().enumerate() {
        let a = a as u8;
        for t in &law.trajectories {
            let copies = (t.prob * scale) as usize;
            for _ in 0..copies {
                let id = subjects.len().to_string();
                subjects.push(trajectory_records(spec, t, &id, a, a));
            }
        }
    }
    Ok(EventHistoryDataset::from_subjects(spec.schema(), spec.horizon, Design::TwoArm, subjects))
}

fn draw_level(rng: &mut ChaCha8Rng, probs: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return l as u32;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0) as u32
}

fn simulate_subject(spec: &DgpSpec, i: usize, seed: u64) -> Result<Vec<IntervalRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let (a, a_d) = match spec.design {
        Design::TwoArm => {
            let a = u8::from(rng.random_bool(0.5));
            (a, a)
        }
        Design::FourArm => (u8::from(rng.random_bool(0.5)), u8::from(rng.random_bool(0.5))),
    };
    let arms = match spec.design {
        Design::TwoArm => spec.arm(a),
        Design::FourArm => spec.two_way(a, a_d)?,
    };
    let mut values: Vec<Vec<u32>> = Vec::new();
    let mut end = End::Survived;
    'intervals: for k in 0..=spec.horizon {
        let mut current = Vec::with_capacity(spec.covariates.len());
        for c in 0..spec.covariates.len() {
            let options = covariate_options(spec, c, k, arms, &values, &current)?;
            let level = match options.as_slice() {
                [(only, _)] => *only,
                _ => draw_level(&mut rng, &options.iter().map(|(_, p)| *p).collect::<Vec<_>>()),
            };
            current.push(level);
        }
        values.push(current);
        let (hist, cur) = values.split_at(k);
        let mut targets = vec![(Target::D, End::Competing(k)), (Target::Y, End::Outcome(k))];
        if spec.has_censoring() {
            targets.insert(0, (Target::C, End::Censored(k)));
        }
        for (target, e) in targets {
            let p = event_prob(spec, target, k, arms, hist, &cur[0])?;
            if rng.random::<f64>() < p {
                end = e;
                break 'intervals;
            }
        }
    }
    let t = Trajectory { values, end, prob: 1.0 };
    Ok(trajectory_records(spec, &t, &i.to_string(), a, a_d))
}

/// Draws `n` independent subjects. Subject `i` uses its own ChaCha8 stream
/// of `seed`, so the result does not depend on the execution schedule.
pub fn simulate(spec: &DgpSpec, n: usize, seed: u64, exec: Execution) -> Result<EventHistoryDataset> {
    let subjects = map_indexed(exec, n, |i| simulate_subject(spec, i, seed)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EventHistoryDataset::from_subjects(spec.schema(), spec.horizon, spec.design, subjects))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_is_enforced() {
        let text = "horizon = 3\n[[covariates]]\nname = \"L\"\nlevels = 4\n\
                    [[rules]]\ntarget = \"L\"\nprobs = [0.25, 0.25, 0.25, 0.25]\n\
                    [[rules]]\ntarget = \"D\"\np = 0.5\n[[rules]]\ntarget = \"Y\"\np = 0.5\n";
        let spec = DgpSpec::from_toml(text).unwrap();
        let arms = spec.arm(0);
        let full = enumerate(&spec, arms, false).unwrap();
        assert!((full.total() - 1.0).abs() < 1e-12);
        let n = full.trajectories.len();
        assert!(enumerate_capped(&spec, arms, false, n).is_ok());
        assert_eq!(enumerate_capped(&spec, arms, false, n - 1), Err(Error::StateSpaceTooLarge(n - 1)));
    }
}
