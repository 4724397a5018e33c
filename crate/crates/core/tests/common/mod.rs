//! Independent dense-matrix oracles shared by the integration tests.
#![allow(dead_code)]

use capacity_rct::ModelParams;
use nalgebra::{DMatrix, DVector};

/// Generator of the queue-length chain, built from per-user clocks: each of
/// the `n - i` desired users leaves at rate lambda; each of the `i` undesired
/// users recovers on its own at rate tau, and each of the `min(i, m)` users in
/// service is cured at rate mu p.
pub fn generator(params: &ModelParams, m: u32, n: u32) -> DMatrix<f64> {
    let size = n as usize + 1;
    let mut q = DMatrix::zeros(size, size);
    for i in 0..=n {
        let mut up = 0.0;
        for _ in 0..(n - i) {
            up += params.lambda();
        }
        let mut down = 0.0;
        for u in 0..i {
            down += params.tau();
            if u < m {
                down += params.mu() * params.p();
            }
        }
        let k = i as usize;
        if i < n {
            q[(k, k + 1)] = up;
        }
        if i > 0 {
            q[(k, k - 1)] = down;
        }
        q[(k, k)] = -(up + down);
    }
    q
}

/// Solves `pi Q = 0`, `sum pi = 1` by replacing one balance equation with the
/// normalization.
pub fn dense_stationary(params: &ModelParams, m: u32, n: u32) -> Vec<f64> {
    let q = generator(params, m, n);
    let size = q.nrows();
    let mut a = q.transpose();
    for j in 0..size {
        a[(size - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(size);
    rhs[size - 1] = 1.0;
    let pi = a.lu().solve(&rhs).expect("singular generator");
    pi.iter().copied().collect()
}

pub fn dense_mean(pi: &[f64]) -> f64 {
    pi.iter().enumerate().map(|(j, p)| j as f64 * p).sum()
}

/// `lim T Var((1/T) ∫ X)` from the Poisson equation `Q g = -(x - mean)`,
/// `pi g = 0`, as `2 sum_i pi_i (x_i - mean) g_i`.
pub fn dense_asymptotic_variance(params: &ModelParams, m: u32, n: u32) -> f64 {
    let q = generator(params, m, n);
    let pi = dense_stationary(params, m, n);
    let mean = dense_mean(&pi);
    let size = q.nrows();
    let f = DVector::from_fn(size, |i, _| i as f64 - mean);
    let mut a = q.clone();
    let mut rhs = -f.clone();
    for j in 0..size {
        a[(0, j)] = pi[j];
    }
    rhs[0] = 0.0;
    let g = a.lu().solve(&rhs).expect("singular Poisson system");
    2.0 * (0..size).map(|i| pi[i] * f[i] * g[i]).sum::<f64>()
}

/// Expected time average `(1/T) E ∫_0^T X dt` from a fixed start, by RK4 on
/// the forward equations `p' = p Q` augmented with the running area `a' = p x`.
pub fn transient_time_average(params: &ModelParams, m: u32, n: u32, start: u32, horizon: f64, steps: usize) -> f64 {
    let qt = generator(params, m, n).transpose();
    let size = qt.nrows();
    let x = DVector::from_fn(size, |i, _| i as f64);
    let rate = |p: &DVector<f64>| (&qt * p, x.dot(p));
    let mut p = DVector::zeros(size);
    p[start as usize] = 1.0;
    let h = horizon / steps as f64;
    let mut area = 0.0;
    for _ in 0..steps {
        let (k1, a1) = rate(&p);
        let (k2, a2) = rate(&(&p + &k1 * (h / 2.0)));
        let (k3, a3) = rate(&(&p + &k2 * (h / 2.0)));
        let (k4, a4) = rate(&(&p + &k3 * h));
        p += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        area += (a1 + 2.0 * a2 + 2.0 * a3 + a4) * (h / 6.0);
    }
    area / horizon
}

pub fn staffed() -> ModelParams {
    ModelParams::new(0.4, 0.35, 3.0, 0.1).unwrap()
}

pub fn pilot_model() -> ModelParams {
    ModelParams::new(0.185, 0.16, 7.0, 0.085).unwrap()
}

pub fn sweep_base() -> ModelParams {
    ModelParams::new(0.3, 0.3, 3.0, 0.5).unwrap()
}
