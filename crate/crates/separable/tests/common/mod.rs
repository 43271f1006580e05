#![allow(dead_code)]

pub mod figures;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use separable::event_history::{Covariate, CovariateKind, CovariateSchema, Design, EventHistoryDataset, IntervalRecord, Timing};

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn record(id: usize, k: usize, a: u8, l: Vec<f64>, c: bool, d: bool, y: bool) -> IntervalRecord {
    let (c_next, d_next, y_next) = if c {
        (Some(true), None, None)
    } else if d {
        (Some(false), Some(true), None)
    } else {
        (Some(false), Some(false), Some(y))
    };
    IntervalRecord { subject_id: format!("s{id}"), k, a, a_d: a, l, c_next, d_next, y_next }
}

/// One continuous time-varying covariate `x`; every subject followed for
/// `horizon + 1` intervals unless the outcome fires. The event probability
/// at each interval is `expit(eta(k, a, x))`.
pub fn logistic_panel(n: usize, horizon: usize, seed: u64, eta: impl Fn(usize, u8, f64) -> f64) -> EventHistoryDataset {
    let schema = CovariateSchema::new(vec![Covariate::new("x", CovariateKind::Continuous, Timing::TimeVarying)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let a = u8::from(rng.random_bool(0.5));
        let mut recs = Vec::new();
        for k in 0..=horizon {
            let x: f64 = rng.random_range(-2.0..2.0);
            let p = separable::glm::expit(eta(k, a, x));
            let y = rng.random_bool(p);
            recs.push(record(i, k, a, vec![x], false, false, y));
            if y {
                break;
            }
        }
        subjects.push(recs);
    }
    EventHistoryDataset::from_subjects(schema, horizon, Design::TwoArm, subjects)
}

pub fn saturated(ds: &EventHistoryDataset, partition: &separable::glm::CovariatePartition) -> separable::weights::NuisanceSet {
    use separable::weights::{fit_nuisance, NuisanceFormulas};
    fit_nuisance(ds, &NuisanceFormulas::saturated(), partition, &separable::glm::FitOptions::default()).unwrap()
}

pub fn load_dgp(name: &str) -> separable::oracle::DgpSpec {
    separable::oracle::DgpSpec::from_path(&fixture_path(&format!("dgp/{name}.toml"))).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
