//! Random instances and brute-force reference computations used by the test
//! suites. Everything here avoids the eigendecomposition so it can check it.

use crate::covariance::{CovMatrix, ReducedProblem};
use crate::linalg::SymmetricMatrix;
use crate::synthetic::SplitMix64;

/// Random orthogonal matrix (row-major) by Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        for _ in 0..2 {
            for q in &cols {
                let p: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= p * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut q = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q[i * n + j] = c[i];
        }
    }
    q
}

/// `Q·diag(σ)·Qᵀ` for a random orthogonal `Q`.
pub fn with_spectrum(rng: &mut SplitMix64, sigma: &[f64]) -> SymmetricMatrix<f64> {
    let n = sigma.len();
    let q = random_orthogonal(rng, n);
    SymmetricMatrix::from_upper(n, |i, j| (0..n).map(|k| q[i * n + k] * sigma[k] * q[j * n + k]).sum())
        .expect("finite")
}

/// Random SPD matrix with eigenvalues log-spaced from `scale` down to
/// `scale / cond`.
pub fn random_spd(rng: &mut SplitMix64, n: usize, cond: f64) -> SymmetricMatrix<f64> {
    let scale = 0.5 + rng.next_f64() * 2.0;
    let sigma: Vec<f64> = (0..n)
        .map(|k| {
            let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            scale * cond.powf(-t)
        })
        .collect();
    with_spectrum(rng, &sigma)
}

pub fn random_cov(rng: &mut SplitMix64, n: usize, cond: f64) -> CovMatrix<f64> {
    CovMatrix::new(random_spd(rng, n, cond), 1000).expect("valid")
}

/// Solves `a·x = b` (`a` row-major, `n × n`) by Gaussian elimination with
/// partial pivoting. Returns `None` for a numerically singular system.
pub fn gauss_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))?;
        if m[piv * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for r in (col + 1)..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let s: f64 = ((col + 1)..n).map(|k| m[col * n + k] * x[k]).sum();
        x[col] = (x[col] - s) / m[col * n + col];
    }
    Some(x)
}

/// `1/(Cov⁻¹)_ii` by direct elimination.
pub fn min_error_oracle(c: &CovMatrix<f64>, i: usize) -> Option<f64> {
    let n = c.dim();
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    gauss_solve(c.mat.as_slice(), &e).map(|x| 1.0 / x[i])
}

/// CovLasso objective `θᵀĈθ − 2b̂ᵀθ + λ‖θ‖₁`.
pub fn lasso_objective(rp: &ReducedProblem<f64>, lambda: f64, theta: &[f64]) -> f64 {
    let m = theta.len();
    let mut quad = 0.0;
    for a in 0..m {
        for b in 0..m {
            quad += theta[a] * rp.chat.get(a, b) * theta[b];
        }
    }
    let lin: f64 = theta.iter().zip(&rp.bhat).map(|(t, b)| t * b).sum();
    quad - 2.0 * lin + lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// Exact minimizer by enumerating all `3^m` sign patterns and keeping the
/// best sign-consistent stationary point.
pub fn lasso_by_enumeration(rp: &ReducedProblem<f64>, lambda: f64) -> (Vec<f64>, f64) {
    let m = rp.bhat.len();
    let mut best = (vec![0.0; m], lasso_objective(rp, lambda, &vec![0.0; m]));
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut signs = vec![0i8; m];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..m).filter(|&j| signs[j] != 0).collect();
        if active.is_empty() {
            continue;
        }
        let k = active.len();
        let mut a = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (p, &jp) in active.iter().enumerate() {
            for (q, &jq) in active.iter().enumerate() {
                a[p * k + q] = rp.chat.get(jp, jq);
            }
            rhs[p] = rp.bhat[jp] - 0.5 * lambda * signs[jp] as f64;
        }
        let Some(x) = gauss_solve(&a, &rhs) else { continue };
        if active.iter().zip(&x).any(|(&j, &v)| v * signs[j] as f64 <= 0.0) {
            continue;
        }
        let mut theta = vec![0.0; m];
        for (&j, &v) in active.iter().zip(&x) {
            theta[j] = v;
        }
        let obj = lasso_objective(rp, lambda, &theta);
        if obj < best.1 {
            best = (theta, obj);
        }
    }
    best
}

/// Reduced problem built directly from `Ĉ`, `b̂` and `Cov_ii`.
pub fn reduced(chat: SymmetricMatrix<f64>, bhat: Vec<f64>, cov_ii: f64) -> ReducedProblem<f64> {
    ReducedProblem {
        target: 0,
        chat,
        bhat,
        cov_ii,
    }
}
