//! Monotone surrogate distributions for targets neither solver reproduces.
//!
//! The surrogate is a plateau followed by a stretched-exponential decay,
//!
//! ```text
//! y(x) = A                      for x < k
//! y(x) = A exp(-B (x - k)^C)    for x >= k
//! ```
//!
//! evaluated at groups `x = 1..n`. For every breakpoint `k` the positive
//! parameters `A, B, C` are fitted by damped Gauss-Newton on their logarithms;
//! the breakpoint whose normalized curve is closest to the data in Wasserstein
//! distance wins.

use serde::{Deserialize, Serialize};

use crate::distributions::{wasserstein_1d, AgeDistribution};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;
// keeps exp() of the log-parameters finite
const LOG_BOUNDS: [(f64, f64); 3] = [(-50.0, 5.0), (-50.0, 20.0), (-10.0, 5.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// 1-based breakpoint group.
    pub k: usize,
}

impl CurveParams {
    pub fn new(a: f64, b: f64, c: f64, k: usize) -> Result<Self> {
        for (index, value) in [a, b, c].into_iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidValue {
                    index,
                    value,
                    reason: "curve parameters A, B, C must be positive",
                });
            }
        }
        if k == 0 {
            return Err(Error::Config("breakpoint k is 1-based".into()));
        }
        Ok(Self { a, b, c, k })
    }
}

/// Curve value at 1-based group `x`.
pub fn eval_curve(params: &CurveParams, x: usize) -> f64 {
    if x <= params.k {
        return params.a;
    }
    let t = (x - params.k) as f64;
    params.a * (-params.b * t.powf(params.c)).exp()
}

/// One row of the per-breakpoint table. Failed fits carry infinite scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointFit {
    pub k: usize,
    pub sse: f64,
    pub wasserstein: f64,
    pub params: Option<CurveParams>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFitResult {
    pub params: CurveParams,
    pub fitted: AgeDistribution,
    pub wasserstein_to_original: f64,
    pub residual_sse: f64,
    pub per_k_table: Vec<BreakpointFit>,
}

/// Values and log-parameter Jacobian rows of the curve for breakpoint `k`.
fn evaluate(theta: &[f64; 3], k: usize, n: usize) -> (Vec<f64>, Vec<[f64; 3]>) {
    let a = theta[0].exp();
    let c = theta[2].exp();
    let mut values = Vec::with_capacity(n);
    let mut jac = Vec::with_capacity(n);
    for x in 1..=n {
        if x <= k {
            values.push(a);
            jac.push([a, 0.0, 0.0]);
            continue;
        }
        let ln_t = ((x - k) as f64).ln();
        let u = (theta[1] + c * ln_t).exp();
        let y = a * (-u).exp();
        values.push(y);
        if y == 0.0 {
            jac.push([0.0; 3]);
        } else {
            jac.push([y, -y * u, -y * u * c * ln_t]);
        }
    }
    (values, jac)
}

fn sse(values: &[f64], data: &[f64]) -> f64 {
    values.iter().zip(data).map(|(v, d)| (v - d) * (v - d)).sum()
}

/// Solves the 3x3 system `m x = rhs` by Gaussian elimination with pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            for j in col..3 {
                m[row][j] -= factor * m[col][j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|j| m[row][j] * x[j]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(x)
}

struct LmOutcome {
    theta: [f64; 3],
    sse: f64,
    iterations: usize,
}

/// Levenberg-Marquardt on `(ln A, ln B, ln C)`; `None` when the step size
/// has not dropped below tolerance within the iteration budget.
fn levenberg_marquardt(data: &[f64], k: usize, start: [f64; 3]) -> Option<LmOutcome> {
    let n = data.len();
    let mut theta = start;
    let (mut values, mut jac) = evaluate(&theta, k, n);
    let mut current = sse(&values, data);
    let mut lambda = 1e-3;
    let mut nu = 2.0;

    for iteration in 1..=MAX_ITERATIONS {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for ((row, v), d) in jac.iter().zip(&values).zip(data) {
            let r = v - d;
            for i in 0..3 {
                jtr[i] += row[i] * r;
                for j in 0..3 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let scale: [f64; 3] = std::array::from_fn(|i| jtj[i][i].max(1e-12));
        let mut damped = jtj;
        for i in 0..3 {
            damped[i][i] += lambda * scale[i];
        }
        let step = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]])?;

        let mut candidate = theta;
        for i in 0..3 {
            candidate[i] = (theta[i] + step[i]).clamp(LOG_BOUNDS[i].0, LOG_BOUNDS[i].1);
        }
        let moved = (0..3).fold(0.0f64, |acc, i| acc.max((candidate[i] - theta[i]).abs()));
        let (cand_values, cand_jac) = evaluate(&candidate, k, n);
        let cand_sse = sse(&cand_values, data);
        let predicted: f64 = (0..3).map(|i| step[i] * (lambda * scale[i] * step[i] - jtr[i])).sum();
        let gain = (current - cand_sse) / predicted;

        if cand_sse.is_finite() && cand_sse <= current {
            theta = candidate;
            values = cand_values;
            jac = cand_jac;
            current = cand_sse;
            let factor = if gain.is_finite() && gain > 0.0 {
                (1.0 - (2.0 * gain - 1.0).powi(3)).max(1.0 / 3.0)
            } else {
                1.0 / 3.0
            };
            lambda = (lambda * factor).max(1e-15);
            nu = 2.0;
        } else {
            lambda *= nu;
            nu *= 2.0;
        }
        if moved < STEP_TOLERANCE {
            return Some(LmOutcome {
                theta,
                sse: current,
                iterations: iteration,
            });
        }
    }
    None
}

fn initial_guess(data: &[f64], k: usize) -> [f64; 3] {
    let n = data.len();
    let a0 = data.iter().cloned().fold(f64::MIN, f64::max);
    let c0 = 1.0f64;
    let span = (n.saturating_sub(k)).max(1) as f64;
    let b0 = std::f64::consts::LN_2 / span.powf(c0);
    [a0.ln(), b0.ln(), c0.ln()]
}

/// Fits the curve with breakpoint `k` (1-based) to `data`.
pub fn fit_breakpoint(data: &[f64], k: usize) -> BreakpointFit {
    let failed = |iterations| BreakpointFit {
        k,
        sse: f64::INFINITY,
        wasserstein: f64::INFINITY,
        params: None,
        iterations,
    };
    let Some(outcome) = levenberg_marquardt(data, k, initial_guess(data, k)) else {
        log::debug!("curve fit for k = {k} did not converge");
        return failed(MAX_ITERATIONS);
    };
    let [ln_a, ln_b, ln_c] = outcome.theta;
    let Ok(params) = CurveParams::new(ln_a.exp(), ln_b.exp(), ln_c.exp(), k) else {
        return failed(outcome.iterations);
    };
    let curve: Vec<f64> = (1..=data.len()).map(|x| eval_curve(&params, x)).collect();
    let total: f64 = curve.iter().sum();
    let fitted: Vec<f64> = curve.iter().map(|v| v / total).collect();
    if fitted.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return failed(outcome.iterations);
    }
    let wasserstein = wasserstein_1d(&fitted, data).unwrap_or(f64::INFINITY);
    BreakpointFit {
        k,
        sse: outcome.sse,
        wasserstein,
        params: Some(params),
        iterations: outcome.iterations,
    }
}

/// Fits every breakpoint `k = 1..=n` and keeps the one closest to `dist`.
///
/// Ties in Wasserstein distance go to the smallest `k`.
pub fn fit(dist: &AgeDistribution) -> Result<CurveFitResult> {
    let data = dist.proportions();
    let n = data.len();
    let per_k_table: Vec<BreakpointFit> = (1..=n).map(|k| fit_breakpoint(data, k)).collect();

    let mut best: Option<&BreakpointFit> = None;
    for row in per_k_table.iter().filter(|row| row.params.is_some()) {
        if best.is_none_or(|b| row.wasserstein < b.wasserstein) {
            best = Some(row);
        }
    }
    let best = best.ok_or(Error::CurveFitFailed)?;
    let params = best.params.expect("filtered on params");
    let curve: Vec<f64> = (1..=n).map(|x| eval_curve(&params, x)).collect();
    let total: f64 = curve.iter().sum();
    let fitted = AgeDistribution::new(
        dist.labels().to_vec(),
        curve.iter().map(|v| v / total).collect(),
    )?;
    Ok(CurveFitResult {
        params,
        wasserstein_to_original: best.wasserstein,
        residual_sse: best.sse,
        fitted,
        per_k_table,
    })
}
