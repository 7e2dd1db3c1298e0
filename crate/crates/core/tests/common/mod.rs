//! Reference computations shared by the integration tests.
//!
//! Nothing here calls into the library; each routine is a direct, slow
//! restatement of the quantity it checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One step of the expected agent dynamics.
///
/// An agent in group `g` is active with probability `alpha[g]`; active agents
/// move up one group with probability `p[g]` (the last group keeps its
/// survivors) and otherwise restart in group 0.
pub fn expected_update(p: &[f64], alpha: Option<&[f64]>, state: &[f64]) -> Vec<f64> {
    let n = state.len();
    let mut next = vec![0.0; n];
    for g in 0..n {
        let a = alpha.map_or(1.0, |a| a[g]);
        next[g] += (1.0 - a) * state[g];
        next[(g + 1).min(n - 1)] += a * p[g] * state[g];
        next[0] += a * (1.0 - p[g]) * state[g];
    }
    next
}

/// Iterates the expected update from the uniform state until it stops moving.
pub fn iterate_to_fixed_point(p: &[f64], alpha: Option<&[f64]>, max_steps: usize) -> Vec<f64> {
    let n = p.len();
    let mut state = vec![1.0 / n as f64; n];
    for _ in 0..max_steps {
        let next = expected_update(p, alpha, &state);
        let change = next
            .iter()
            .zip(&state)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        state = next;
        if change == 0.0 {
            break;
        }
    }
    state
}

/// Stationary vector of the expected update by dense elimination.
pub fn linear_steady_state(p: &[f64], alpha: Option<&[f64]>) -> Vec<f64> {
    let n = p.len();
    // columns of the update map are its images of the unit vectors
    let mut m = vec![vec![0.0; n + 1]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = expected_update(p, alpha, &e);
        for i in 0..n {
            m[i][j] = col[i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        m[n - 1][j] = 1.0;
    }
    m[n - 1][n] = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .unwrap();
        m.swap(c, pivot);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

/// First-order Wasserstein distance on unit-spaced groups, computed from the
/// quantile functions rather than the CDFs.
pub fn quantile_wasserstein(a: &[f64], b: &[f64]) -> f64 {
    let cum = |v: &[f64]| {
        let total: f64 = v.iter().sum();
        let mut acc = 0.0;
        v.iter()
            .map(|x| {
                acc += x / total;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let (ca, cb) = (cum(a), cum(b));
    let quantile = |c: &[f64], u: f64| c.iter().position(|&x| x >= u).unwrap_or(c.len() - 1);
    let mut cuts: Vec<f64> = ca.iter().chain(&cb).copied().chain([0.0]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[1] - w[0]) * (quantile(&ca, mid) as f64 - quantile(&cb, mid) as f64).abs()
        })
        .sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Random monotone non-increasing weights with `n` groups.
pub fn monotone_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

/// A random `(p, alpha)` pair whose expected steady state is not monotone.
pub fn hump_parameters(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let state = linear_steady_state(&p, Some(&alpha));
        if state.windows(2).any(|w| w[1] > w[0]) {
            return (p, alpha, state);
        }
    }
}

/// UK-like 2019 age profile in thousands (21 five-year groups).
pub const UK_SHAPED: [f64; 21] = [
    3914.0, 4138.0, 3858.0, 3668.0, 4184.0, 4527.0, 4541.0, 4331.0, 4140.0, 4493.0, 4700.0,
    4409.0, 3790.0, 3461.0, 3353.0, 2366.0, 1740.0, 1047.0, 453.0, 121.0, 14.0,
];
