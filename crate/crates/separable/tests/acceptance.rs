//! Acceptance suite: one PASS/FAIL line per criterion, every tolerance fixed
//! below. Runs without the test harness so the lines are always printed.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use separable::causal_graph::{check_dismissible, LPartition};
use separable::estimators::{
    bootstrap_series, estimate_nu1, estimate_nu2, estimate_nu2_dagger, gformula_plugin, ipcw_empirical_cif,
    BootstrapOptions,
};
use separable::event_history::EventHistoryDataset;
use separable::glm::{build_design, fit, log_likelihood, score, CovariatePartition, FitOptions, ModelFormula, Role};
use separable::oracle::{oracle_sensitivity_t, simulate, true_counterfactual_risk, ObservedLaw};
use separable::par::Execution;
use separable::weights::{Representation, ZeroOffset};
use separable::Regime;

use common::figures::{classification_mismatches, graph, random_decomposition_graph, LemmaTally};
use common::{load_dgp, logistic_panel, max_diff, saturated};

const IDENTITY_TOL: f64 = 1e-10;
const COLLAPSE_TOL: f64 = 1e-12;
const LARGE_N: usize = 200_000;
const LARGE_N_TOL: f64 = 0.005;
const NU1_NU2_TOL: f64 = 0.01;
const SCORE_TOL: f64 = 1e-6;
const GRADIENT_REL_TOL: f64 = 1e-6;
const RANDOM_GRAPHS: u64 = 200;
const RESAMPLES: usize = 500;
const REPLICATIONS: usize = 100;
const REPLICATION_N: usize = 1000;
const MIN_COVERED: usize = 90;

/// Processes whose graphs satisfy the dismissible conditions, with the graph
/// fixture and the covariates of that graph in the `A_Y` block.
const CONFORMING: [(&str, &str, &[&str]); 9] = [
    ("toy1", "fig4a", &[]),
    ("toy1_censored", "fig4a", &[]),
    ("fig1b", "fig1b", &[]),
    ("fig2b", "fig2b", &[]),
    ("fig4b", "fig4b", &["Z1"]),
    ("fig5b", "fig5b", &["Zy1"]),
    ("fig8a", "fig8a", &[]),
    ("fig8d", "fig8d", &["Ly1"]),
    ("fig4a_k2", "fig4a_k2", &[]),
];

const TWO_WAY: [&str; 12] =
    ["toy1", "toy1_censored", "fig1b", "fig2b", "fig4b", "fig5b", "fig8a", "fig8d", "fig4a_k2", "fig5a", "fig8e", "fig8f"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn r(a_y: u8, a_d: u8) -> Regime {
    Regime::new(a_y, a_d).unwrap()
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn identification() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut graphs_ok = true;
    for (dgp, fig, ay) in CONFORMING {
        let g = graph(fig);
        graphs_ok &= check_dismissible(&g, &LPartition::with_ay(&g, ay)).unwrap().all_hold();
        let spec = load_dgp(dgp);
        let law = ObservedLaw::new(&spec, &spec.default_partition()).unwrap();
        for reg in Regime::all() {
            let gap = max_diff(&law.gformula(reg).unwrap(), &true_counterfactual_risk(&spec, reg).unwrap());
            worst = worst.max(gap);
        }
    }
    let t = start.elapsed();
    outcome(
        graphs_ok && worst <= IDENTITY_TOL && within(t, 10),
        format!("{} processes, graphs pass: {graphs_ok}, max |g - truth| = {worst:.2e}, {t:.1?}", CONFORMING.len()),
    )
}

fn representations() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for name in TWO_WAY {
        let spec = load_dgp(name);
        let law = ObservedLaw::new(&spec, &spec.default_partition()).unwrap();
        for reg in Regime::all() {
            let g = law.gformula(reg).unwrap();
            let nu1 = law.weighted(reg, Representation::Nu1).unwrap();
            let nu2 = law.weighted(reg, Representation::Nu2).unwrap();
            worst = worst.max(max_diff(&g, &nu1)).max(max_diff(&g, &nu2)).max(max_diff(&nu1, &nu2));
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= IDENTITY_TOL && within(t, 10),
        format!("{} processes, max pairwise gap {worst:.2e}, {t:.1?}", TWO_WAY.len()),
    )
}

fn consistency() -> Outcome {
    let start = Instant::now();
    let spec = load_dgp("toy1");
    let ds = simulate(&spec, LARGE_N, 20_240_601, Execution::Parallel).unwrap();
    let ns = saturated(&ds, &spec.default_partition());
    let truth = true_counterfactual_risk(&spec, r(1, 0)).unwrap();
    let nu1 = estimate_nu1(&ds, &ns, r(1, 0)).unwrap().values;
    let nu2 = estimate_nu2(&ds, &ns, r(1, 0)).unwrap().values;
    let (e1, e2, e12) = (max_diff(&nu1, &truth), max_diff(&nu2, &truth), max_diff(&nu1, &nu2));
    let t = start.elapsed();
    outcome(
        e1 <= LARGE_N_TOL && e2 <= LARGE_N_TOL && e12 <= NU1_NU2_TOL && within(t, 60),
        format!("n={LARGE_N}, |nu1 - truth| = {e1:.4}, |nu2 - truth| = {e2:.4}, |nu1 - nu2| = {e12:.4}, {t:.1?}"),
    )
}

fn collapse() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut datasets = 0;
    for (name, n, seed) in [("toy1_censored", 5000, 1), ("fig5b", 3000, 2), ("fig8d", 3000, 3), ("fig4a_k2", 3000, 4)] {
        let spec = load_dgp(name);
        let ds = simulate(&spec, n, seed, Execution::Parallel).unwrap();
        let part = spec.default_partition();
        let ns = saturated(&ds, &part);
        for a in 0..=1 {
            let cif = ipcw_empirical_cif(&ds, &ns, a).unwrap().values;
            for est in [
                estimate_nu1(&ds, &ns, r(a, a)).unwrap().values,
                estimate_nu2(&ds, &ns, r(a, a)).unwrap().values,
                gformula_plugin(&ds, r(a, a), &part).unwrap().values,
            ] {
                worst = worst.max(max_diff(&est, &cif));
            }
        }
        datasets += 1;
    }
    outcome(worst <= COLLAPSE_TOL, format!("{datasets} datasets, max gap to the weighted arm incidence {worst:.2e}"))
}

fn classification() -> Outcome {
    let (checks, bad) = classification_mismatches();
    let detail = if bad.is_empty() { format!("{checks} checks match") } else { bad.join("; ") };
    outcome(bad.is_empty(), detail)
}

fn graph_lemmas() -> Outcome {
    let mut tally = LemmaTally::default();
    for seed in 0..RANDOM_GRAPHS {
        tally.add(&random_decomposition_graph(10_000 + seed));
    }
    outcome(
        tally.violated == [0; 4],
        format!("{RANDOM_GRAPHS} graphs, antecedent met {:?}, violations {:?}", tally.triggered, tally.violated),
    )
}

fn sensitivity() -> Outcome {
    let start = Instant::now();
    let spec = load_dgp("fig8f");
    let part = spec.default_partition();
    let t_oracle = oracle_sensitivity_t(&spec).unwrap();
    let law = ObservedLaw::new(&spec, &part).unwrap();
    let ds = simulate(&spec, LARGE_N, 8_080_808, Execution::Parallel).unwrap();
    let ns = saturated(&ds, &part);
    let mut zero_exact = true;
    let (mut exact_gap, mut sample_gap, mut uncorrected): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for reg in [r(1, 0), r(0, 1)] {
        let truth = true_counterfactual_risk(&spec, reg).unwrap();
        let plain = estimate_nu2(&ds, &ns, reg).unwrap().values;
        zero_exact &= estimate_nu2_dagger(&ds, &ns, reg, &ZeroOffset).unwrap().values == plain;
        exact_gap = exact_gap.max(max_diff(&law.weighted_dagger(reg, &t_oracle).unwrap(), &truth));
        sample_gap = sample_gap.max(max_diff(&estimate_nu2_dagger(&ds, &ns, reg, &t_oracle).unwrap().values, &truth));
        uncorrected = uncorrected.max(max_diff(&law.weighted(reg, Representation::Nu2).unwrap(), &truth));
    }
    let t = start.elapsed();
    outcome(
        zero_exact && exact_gap <= IDENTITY_TOL && sample_gap <= LARGE_N_TOL,
        format!(
            "zero offset exact: {zero_exact}, exact shifted gap {exact_gap:.2e} (unshifted {uncorrected:.4}), n={LARGE_N} gap {sample_gap:.4}, {t:.1?}"
        ),
    )
}

fn fitting() -> Outcome {
    let ds = logistic_panel(5000, 3, 17, |k, a, x| -2.0 + 0.25 * k as f64 + 0.5 * f64::from(a) - 0.4 * x);
    let part = CovariatePartition::all_ad(ds.schema());
    let formula = ModelFormula::parse("Y ~ polyk(2) + Lk(x) + A + A:k", Role::YHazard).unwrap();
    let model = fit(&formula, &ds, &part, &FitOptions::default()).unwrap();
    let (_, design) = build_design(&formula, &ds, &part).unwrap();
    let residual = score(&design, model.coefficients()).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..10 {
        let beta: Vec<f64> = (0..design.cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = score(&design, &beta);
        for (j, g) in grad.iter().enumerate() {
            let h = 1e-5;
            let mut up = beta.clone();
            up[j] += h;
            let mut down = beta.clone();
            down[j] -= h;
            let fd = (log_likelihood(&design, &up) - log_likelihood(&design, &down)) / (2.0 * h);
            worst_rel = worst_rel.max((g - fd).abs() / fd.abs().max(1.0));
        }
    }
    outcome(
        residual <= SCORE_TOL && worst_rel <= GRADIENT_REL_TOL,
        format!("max |score| at the fit {residual:.2e}, max gradient relative error {worst_rel:.2e} at 10 points"),
    )
}

fn bootstrap() -> Outcome {
    let start = Instant::now();
    let spec = load_dgp("toy1");
    let part = spec.default_partition();
    let reg = r(1, 0);
    let truth = *true_counterfactual_risk(&spec, reg).unwrap().last().unwrap();
    let estimator = |d: &EventHistoryDataset| Ok(estimate_nu2(d, &saturated(d, &part), reg)?.values);
    let opts = |seed| BootstrapOptions { resamples: RESAMPLES, seed, ..Default::default() };

    let first = simulate(&spec, REPLICATION_N, 500, Execution::Parallel).unwrap();
    let again = bootstrap_series(&first, &opts(7), estimator).unwrap();
    let deterministic = again == bootstrap_series(&first, &opts(7), estimator).unwrap()
        && again == bootstrap_series(&first, &BootstrapOptions { exec: Execution::Sequential, ..opts(7) }, estimator).unwrap();

    let mut covered = 0;
    let mut failed = 0;
    for rep in 0..REPLICATIONS {
        let ds = simulate(&spec, REPLICATION_N, 1_000 + rep as u64, Execution::Parallel).unwrap();
        match bootstrap_series(&ds, &opts(rep as u64), estimator) {
            Ok(ci) => {
                let k = ci.low.len() - 1;
                covered += usize::from(ci.low[k] <= truth && truth <= ci.high[k]);
            }
            Err(_) => failed += 1,
        }
    }
    let t = start.elapsed();
    outcome(
        deterministic && covered >= MIN_COVERED && within(t, 600),
        format!(
            "B={RESAMPLES}, seed-deterministic: {deterministic}, covered {covered}/{REPLICATIONS} at n={REPLICATION_N} ({failed} failed), {t:.1?}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("identification formula equals enumerated truth", identification),
        ("weighted representations agree", representations),
        ("large-sample estimator consistency", consistency),
        ("diagonal regimes collapse to the arm incidence", collapse),
        ("figure classifications", classification),
        ("graph lemmas on random graphs", graph_lemmas),
        ("sensitivity offset closes the gap", sensitivity),
        ("pooled logistic fitting", fitting),
        ("bootstrap determinism and coverage", bootstrap),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let o = run();
        println!("criterion {id} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
