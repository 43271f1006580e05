//! Pooled logistic regression for discrete-time hazards and treatment models.

mod design;
mod formula;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

pub use design::{build_design, Context, DesignMatrix, Layout};
pub use formula::{CovRef, CovariatePartition, Factor, Lag, ModelFormula, Role, Term};

use crate::error::{Error, Result};
use crate::event_history::EventHistoryDataset;

/// Newton-Raphson settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Converged once the largest absolute score falls to this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest absolute coefficient, on the column-scaled parametrisation,
    /// before the fit is declared separated.
    pub separation_bound: f64,
    /// Ridge penalty tried once when the unpenalised fit does not converge.
    pub ridge_fallback: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tolerance: 1e-8, max_iterations: 100, separation_bound: 30.0, ridge_fallback: None }
    }
}

/// Score tolerance accepted when step-halving can no longer improve the
/// likelihood, i.e. when rounding noise in the score dominates.
const FLOOR_TOLERANCE: f64 = 1e-6;
const MAX_HALVINGS: usize = 30;
const POLISH_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
enum Fit {
    Parametric(Vec<f64>),
    /// Every outcome in the risk set was the same.
    Constant(f64),
    /// Saturated model: event proportion per history cell.
    Cells(HashMap<Vec<i64>, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub formula: ModelFormula,
    layout: Layout,
    fit: Fit,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub max_abs_score: f64,
    pub rows: usize,
    pub events: usize,
    pub ridge: Option<f64>,
}

/// Raw Newton-Raphson result on a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub max_abs_score: f64,
    /// Log-likelihood after every accepted step, starting from zero
    /// coefficients. Non-decreasing up to rounding.
    pub trace: Vec<f64>,
}

fn log1pexp(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn linear_predictor(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(x, b)| x * b).sum()
}

/// Bernoulli log-likelihood of `beta` on a design.
pub fn log_likelihood(m: &DesignMatrix, beta: &[f64]) -> f64 {
    (0..m.rows)
        .map(|i| {
            let eta = linear_predictor(m.row(i), beta);
            m.y[i] * eta - log1pexp(eta)
        })
        .sum()
}

/// Gradient of [`log_likelihood`]: `X^T (y - p)`.
pub fn score(m: &DesignMatrix, beta: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; m.cols];
    for i in 0..m.rows {
        let row = m.row(i);
        let r = m.y[i] - expit(linear_predictor(row, beta));
        for (sj, x) in s.iter_mut().zip(row) {
            *sj += x * r;
        }
    }
    s
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Maximise the (optionally ridge-penalised) Bernoulli likelihood.
///
/// Columns are rescaled by their largest absolute entry internally; the
/// returned coefficients and score refer to the original columns.
pub fn newton_raphson(m: &DesignMatrix, opts: &FitOptions, ridge: f64) -> Result<NewtonFit> {
    let (n, p) = (m.rows, m.cols);
    if n == 0 {
        return Err(Error::EmptyRiskSet("design".into()));
    }
    let scale: Vec<f64> = (0..p).map(|j| (0..n).fold(0.0, |a: f64, i| a.max(m.x[i * p + j].abs()))).collect();
    if scale.iter().any(|s| *s == 0.0) {
        return Err(Error::SingularInformation);
    }
    let mut z = m.clone();
    for i in 0..n {
        for j in 0..p {
            z.x[i * p + j] /= scale[j];
        }
    }
    let penalised = |b: &[f64]| log_likelihood(&z, b) - 0.5 * ridge * b.iter().map(|v| v * v).sum::<f64>();
    let unscaled = |b: &[f64]| b.iter().zip(&scale).map(|(v, s)| v / s).collect::<Vec<f64>>();
    // Score on the original columns, which is what the tolerance refers to.
    let full_score = |b: &[f64]| -> Vec<f64> {
        let s = score(&z, b);
        s.iter().zip(b).zip(&scale).map(|((sj, bj), sc)| (sj - ridge * bj) * sc).collect()
    };

    let mut beta = vec![0.0; p];
    let mut ll = penalised(&beta);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut polish = 0;
    let mut reached = false;
    loop {
        let s = full_score(&beta);
        let ms = max_abs(&s);
        if ms <= opts.tolerance {
            reached = true;
        }
        if reached && polish >= POLISH_STEPS {
            return Ok(NewtonFit { coefficients: unscaled(&beta), converged: true, iterations, loglik: ll, max_abs_score: ms, trace });
        }
        if iterations >= opts.max_iterations {
            if reached {
                return Ok(NewtonFit { coefficients: unscaled(&beta), converged: true, iterations, loglik: ll, max_abs_score: ms, trace });
            }
            return Err(Error::NonConvergence { iterations, max_score: ms });
        }
        let max_coef = max_abs(&beta);
        if !reached && max_coef > opts.separation_bound {
            return Err(Error::Separation { max_coef, max_score: ms });
        }
        // Information matrix on the scaled columns.
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut grad = DVector::<f64>::zeros(p);
        for i in 0..n {
            let row = z.row(i);
            let mu = expit(linear_predictor(row, &beta));
            let w = mu * (1.0 - mu);
            let r = z.y[i] - mu;
            for a in 0..p {
                grad[a] += row[a] * r;
                if w > 0.0 {
                    let wa = w * row[a];
                    for b in 0..=a {
                        info[(a, b)] += wa * row[b];
                    }
                }
            }
        }
        for a in 0..p {
            grad[a] -= ridge * beta[a];
            info[(a, a)] += ridge;
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let chol = info.cholesky().ok_or(Error::SingularInformation)?;
        let step = chol.solve(&grad);
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularInformation);
        }
        iterations += 1;
        if reached {
            // Polish: the likelihood is flat to rounding here, so a full step
            // is kept only if it shrinks the score.
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + d).collect();
            let cs = max_abs(&full_score(&cand));
            if cs < ms {
                ll = penalised(&cand);
                beta = cand;
                trace.push(ll);
                polish += 1;
                continue;
            }
            return Ok(NewtonFit { coefficients: unscaled(&beta), converged: true, iterations, loglik: ll, max_abs_score: ms, trace });
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, d)| b + t * d).collect();
            let cll = penalised(&cand);
            // Changes below the rounding level of the likelihood are no decrease.
            if cll.is_finite() && cll >= ll - 1e-12 * (1.0 + ll.abs()) {
                accepted = Some((cand, cll));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, cll)) => {
                beta = cand;
                ll = cll;
                trace.push(ll);
            }
            None => {
                // No step improves the likelihood: we sit at the numerical floor.
                if ms <= FLOOR_TOLERANCE {
                    return Ok(NewtonFit {
                        coefficients: unscaled(&beta),
                        converged: true,
                        iterations,
                        loglik: ll,
                        max_abs_score: ms,
                        trace,
                    });
                }
                return Err(Error::NonConvergence { iterations, max_score: ms });
            }
        }
    }
}

/// Fit a model on the formula's risk set in `ds`.
pub fn fit(
    formula: &ModelFormula,
    ds: &EventHistoryDataset,
    partition: &CovariatePartition,
    opts: &FitOptions,
) -> Result<FittedModel> {
    let layout = Layout::new(formula, ds.schema(), partition)?;
    if layout.is_saturated() {
        return fit_cells(formula, layout, ds);
    }
    let (layout, m) = build_design(formula, ds, partition)?;
    let events = m.y.iter().filter(|v| **v == 1.0).count();
    let base = FittedModel {
        formula: formula.clone(),
        layout,
        fit: Fit::Constant(0.0),
        converged: true,
        iterations: 0,
        loglik: 0.0,
        max_abs_score: 0.0,
        rows: m.rows,
        events,
        ridge: None,
    };
    if events == 0 || events == m.rows {
        // The maximum likelihood estimate is on the boundary: the fitted
        // probability is exactly the observed one.
        return Ok(FittedModel { fit: Fit::Constant(if events == 0 { 0.0 } else { 1.0 }), ..base });
    }
    let (nf, ridge) = match newton_raphson(&m, opts, 0.0) {
        Ok(nf) => (nf, None),
        Err(Error::NonConvergence { .. }) if opts.ridge_fallback.is_some() => {
            let lambda = opts.ridge_fallback.unwrap_or_default();
            (newton_raphson(&m, opts, lambda)?, Some(lambda))
        }
        Err(e) => return Err(e),
    };
    Ok(FittedModel {
        fit: Fit::Parametric(nf.coefficients),
        converged: nf.converged,
        iterations: nf.iterations,
        loglik: nf.loglik,
        max_abs_score: nf.max_abs_score,
        ridge,
        ..base
    })
}

fn fit_cells(formula: &ModelFormula, layout: Layout, ds: &EventHistoryDataset) -> Result<FittedModel> {
    let mut tally: HashMap<Vec<i64>, (f64, f64)> = HashMap::new();
    let mut rows = 0;
    let mut events = 0;
    design::for_each_row(ds, formula.role, |ctx, outcome| {
        let e = tally.entry(layout.cell_key(ctx)).or_insert((0.0, 0.0));
        e.0 += f64::from(u8::from(outcome));
        e.1 += 1.0;
        rows += 1;
        events += usize::from(outcome);
    });
    if rows == 0 {
        return Err(Error::EmptyRiskSet(formula.role.name().into()));
    }
    let mut loglik = 0.0;
    for (ev, n) in tally.values() {
        let p = ev / n;
        if p > 0.0 && p < 1.0 {
            loglik += ev * p.ln() + (n - ev) * (1.0 - p).ln();
        }
    }
    let cells = tally.into_iter().map(|(k, (ev, n))| (k, ev / n)).collect();
    Ok(FittedModel {
        formula: formula.clone(),
        layout,
        fit: Fit::Cells(cells),
        converged: true,
        iterations: 0,
        loglik,
        max_abs_score: 0.0,
        rows,
        events,
        ridge: None,
    })
}

impl FittedModel {
    /// Probability that the outcome equals 1 given the context.
    pub fn predict(&self, ctx: &Context) -> Result<f64> {
        if !self.converged {
            return Err(Error::NotConverged);
        }
        match &self.fit {
            Fit::Constant(p) => Ok(*p),
            Fit::Parametric(beta) => Ok(expit(linear_predictor(&self.layout.row(ctx), beta))),
            Fit::Cells(cells) => cells
                .get(&self.layout.cell_key(ctx))
                .copied()
                .ok_or_else(|| Error::UnseenLevel(self.formula.role.name().into())),
        }
    }

    /// As [`FittedModel::predict`] with the arm replaced.
    pub fn predict_at(&self, ctx: &Context, arm: u8) -> Result<f64> {
        self.predict(&Context { arm, ..*ctx })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Coefficients aligned with [`Layout::names`]; empty for saturated and
    /// constant fits.
    pub fn coefficients(&self) -> &[f64] {
        match &self.fit {
            Fit::Parametric(b) => b,
            _ => &[],
        }
    }

    pub fn is_saturated(&self) -> bool {
        matches!(self.fit, Fit::Cells(_))
    }

    /// Number of history cells of a saturated fit.
    pub fn cell_count(&self) -> usize {
        match &self.fit {
            Fit::Cells(c) => c.len(),
            _ => 0,
        }
    }
}

/// Column names of `narrow` missing from `wide`; a saturated model counts as
/// containing every column.
fn not_nested(narrow: &Layout, wide: &Layout) -> Vec<String> {
    if wide.is_saturated() {
        return vec![];
    }
    if narrow.is_saturated() {
        return vec!["cells".into()];
    }
    narrow.names().iter().filter(|n| !wide.names().contains(n)).cloned().collect()
}

/// Warnings when the three treatment models are not nested as
/// `given past` within `given L_AD and past` within `given full L`.
pub fn congeniality_warnings(past: &Layout, lad: &Layout, full: &Layout) -> Vec<String> {
    let mut out = Vec::new();
    for (a, b, an, bn) in [(past, lad, "a_given_past", "a_given_lad_past"), (lad, full, "a_given_lad_past", "a_given_full_l")] {
        let missing = not_nested(a, b);
        if !missing.is_empty() {
            out.push(format!("{an} has terms absent from {bn}: {}", missing.join(", ")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(x: &[&[f64]], y: &[f64]) -> DesignMatrix {
        DesignMatrix {
            rows: y.len(),
            cols: x[0].len(),
            x: x.iter().flat_map(|r| r.iter().copied()).collect(),
            y: y.to_vec(),
            names: (0..x[0].len()).map(|j| format!("x{j}")).collect(),
        }
    }

    #[test]
    fn intercept_only_at_half() {
        let m = design(&[&[1.0], &[1.0], &[1.0], &[1.0]], &[0.0, 1.0, 1.0, 0.0]);
        let f = newton_raphson(&m, &FitOptions::default(), 0.0).unwrap();
        assert!(f.coefficients[0].abs() <= 1e-8);
        assert!(f.converged);
    }

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let y: Vec<f64> = (0..10).map(|i| if i < 9 { 1.0 } else { 0.0 }).collect();
        let rows: Vec<&[f64]> = vec![&[1.0]; 10];
        let f = newton_raphson(&design(&rows, &y), &FitOptions::default(), 0.0).unwrap();
        assert!((expit(f.coefficients[0]) - 0.9).abs() < 1e-12);
        assert!(f.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
    }

    #[test]
    fn separated_points() {
        let m = design(&[&[1.0, 0.0], &[1.0, 1.0]], &[0.0, 1.0]);
        assert!(matches!(newton_raphson(&m, &FitOptions::default(), 0.0), Err(Error::Separation { .. })));
    }

    #[test]
    fn collinear_columns_are_singular() {
        let m = design(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]], &[0.0, 1.0, 1.0]);
        assert_eq!(newton_raphson(&m, &FitOptions::default(), 0.0), Err(Error::SingularInformation));
    }

    #[test]
    fn ridge_shrinks() {
        let m = design(&[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]], &[0.0, 1.0, 1.0, 1.0, 0.0]);
        let plain = newton_raphson(&m, &FitOptions::default(), 0.0).unwrap();
        let shrunk = newton_raphson(&m, &FitOptions::default(), 1.0).unwrap();
        assert!(shrunk.coefficients[1].abs() < plain.coefficients[1].abs());
    }

    #[test]
    fn zero_coefficients_predict_half() {
        assert_eq!(expit(0.0), 0.5);
        assert!((expit(logit(0.9)) - 0.9).abs() < 1e-15);
    }
}
