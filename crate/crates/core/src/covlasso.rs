//! Covariance lasso: `min θ̂ᵀĈθ̂ − 2b̂ᵀθ̂ + λ‖θ̂‖₁` by cyclic coordinate descent.
//!
//! The reduced problem is the full constrained problem with `θ_i = −1`
//! substituted. Solutions carry their own optimality evidence: a KKT
//! check (the only thing that sets `converged`) and, on request, a dual
//! certificate built from a symmetric square root of `Ĉ`.

use std::collections::BTreeSet;

use crate::covariance::{CovMatrix, ReducedProblem};
use crate::error::{Error, Result};
use crate::linalg::{dot, SqrtFactor};
use crate::scalar::{soft_threshold, Scalar};

/// Coordinates with `Ĉ_jj` at or below this are pinned to zero.
pub const PINNED_DIAGONAL: f64 = 1e-300;

/// Off-target coefficients at or below this magnitude are not support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

/// Slack allowed on the monotonicity of prediction error along a path.
pub const PATH_MONOTONE_SLACK: f64 = 1e-9;

/// Solution of a reduced problem at one `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution<F> {
    pub theta_hat: Vec<F>,
    pub lambda: F,
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    /// Set only when the KKT conditions hold.
    pub converged: bool,
    pub objective: F,
    /// Reduced coordinates held at zero because `Ĉ_jj` vanished.
    pub pinned: Vec<usize>,
}

impl<F: Scalar> ReducedSolution<F> {
    /// Turns a non-converged solve into [`Error::NotConverged`].
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
            })
        }
    }
}

/// Smallest `λ` with the all-zero solution: `2·‖b̂‖_∞`.
pub fn lambda_max<F: Scalar>(rp: &ReducedProblem<F>) -> F {
    F::two() * rp.bhat.iter().fold(F::zero(), |m, b| m.max(b.abs()))
}

/// `θ̂ᵀĈθ̂ − 2b̂ᵀθ̂ + λ‖θ̂‖₁`.
pub fn objective<F: Scalar>(rp: &ReducedProblem<F>, lambda: F, theta_hat: &[F]) -> F {
    let l1: F = theta_hat.iter().map(|t| t.abs()).sum();
    rp.chat.quad_form(theta_hat) - F::two() * dot(&rp.bhat, theta_hat) + lambda * l1
}

/// `err_i(θ) = θᵀCovθ` for the embedded reduced vector.
pub fn reduced_prediction_error<F: Scalar>(rp: &ReducedProblem<F>, theta_hat: &[F]) -> F {
    (rp.cov_ii - F::two() * dot(&rp.bhat, theta_hat) + rp.chat.quad_form(theta_hat)).max(F::zero())
}

/// Cyclic coordinate descent with exact soft-threshold updates.
///
/// Runs sweeps until the largest coordinate move is at most
/// `1e-10·(1 + ‖θ̂‖_∞)`, then recomputes the gradient from scratch and
/// checks KKT. A failed check resumes sweeping; the sweep cap is
/// `100·(n−1)`.
pub fn solve<F: Scalar>(
    rp: &ReducedProblem<F>,
    lambda: F,
    init: Option<&[F]>,
) -> Result<ReducedSolution<F>> {
    if !(lambda > F::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let m = rp.bhat.len();
    let mut theta = match init {
        Some(t) if t.len() != m => {
            return Err(Error::DimMismatch {
                expected: m,
                found: t.len(),
            })
        }
        Some(t) => t.to_vec(),
        None => vec![F::zero(); m],
    };

    let pin = F::lit(PINNED_DIAGONAL);
    let pinned: Vec<usize> = (0..m).filter(|&j| !(rp.chat.get(j, j) > pin)).collect();
    for &j in &pinned {
        theta[j] = F::zero();
    }
    let active: Vec<usize> = (0..m).filter(|j| !pinned.contains(j)).collect();

    let half_lambda = lambda * F::half();
    let step_tol = F::tol(1e-10);
    let cap = 100 * m.max(1);

    // r = Ĉθ̂ − b̂
    let mut resid = gradient(rp, &theta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cap {
        iterations += 1;
        let mut max_step = F::zero();
        for &j in &active {
            let cjj = rp.chat.get(j, j);
            let old = theta[j];
            let z = cjj * old - resid[j];
            let new = soft_threshold(z, half_lambda) / cjj;
            let delta = new - old;
            if delta != F::zero() {
                theta[j] = new;
                for (r, &c) in resid.iter_mut().zip(rp.chat.row(j)) {
                    *r += c * delta;
                }
                max_step = max_step.max(delta.abs());
            }
        }
        let scale = F::one() + theta.iter().fold(F::zero(), |a, t| a.max(t.abs()));
        if max_step <= step_tol * scale {
            resid = gradient(rp, &theta);
            let (_, valid) = kkt_residuals_with(&resid, lambda, &theta, &pinned);
            if valid {
                converged = true;
                break;
            }
        }
    }

    let objective = objective(rp, lambda, &theta);
    Ok(ReducedSolution {
        theta_hat: theta,
        lambda,
        iterations,
        converged,
        objective,
        pinned,
    })
}

fn gradient<F: Scalar>(rp: &ReducedProblem<F>, theta: &[F]) -> Vec<F> {
    rp.chat
        .mul_vec(theta)
        .into_iter()
        .zip(&rp.bhat)
        .map(|(a, &b)| a - b)
        .collect()
}

/// Stationarity residuals `r = Ĉθ̂ − b̂` and whether
/// `0 ∈ r + (λ/2)·∂‖θ̂‖₁` holds to `1e-6·max(λ, 1)`.
pub fn kkt_residuals<F: Scalar>(
    rp: &ReducedProblem<F>,
    lambda: F,
    theta_hat: &[F],
) -> Result<(Vec<F>, bool)> {
    if theta_hat.len() != rp.bhat.len() {
        return Err(Error::DimMismatch {
            expected: rp.bhat.len(),
            found: theta_hat.len(),
        });
    }
    let r = gradient(rp, theta_hat);
    let (_, valid) = kkt_residuals_with(&r, lambda, theta_hat, &[]);
    Ok((r, valid))
}

/// Largest KKT violation (zero when every condition holds exactly).
pub fn kkt_violation<F: Scalar>(resid: &[F], lambda: F, theta_hat: &[F]) -> F {
    kkt_residuals_with(resid, lambda, theta_hat, &[]).0
}

fn kkt_residuals_with<F: Scalar>(resid: &[F], lambda: F, theta: &[F], pinned: &[usize]) -> (F, bool) {
    let half = lambda * F::half();
    let tol = F::tol(1e-6) * lambda.max(F::one());
    let mut worst = F::zero();
    for (j, (&r, &t)) in resid.iter().zip(theta).enumerate() {
        if pinned.contains(&j) {
            continue;
        }
        let v = if t != F::zero() {
            (r + half * t.signum()).abs()
        } else {
            (r.abs() - half).max(F::zero())
        };
        worst = worst.max(v);
    }
    (worst, worst <= tol)
}

/// Dual point and gap for a candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate<F> {
    /// `ξ = √2·(A⁻ᵀb̂ − Aθ̂)/λ`.
    pub xi: Vec<F>,
    /// `max_j (|(Aξ)_j| − √2/2)⁺`.
    pub feasibility_violation: F,
    /// Primal objective (plus the constant `‖A⁻¹b̂‖²`) minus dual objective
    /// at `ξ` rescaled into the feasible set.
    pub gap: F,
    pub primal: F,
    pub dual: F,
    /// Factor applied to `ξ` to make it feasible (1 when already feasible).
    pub dual_scale: F,
}

/// Builds the dual certificate from `A = Ĉ^{1/2}`.
///
/// With `y = √2·A⁻¹b̂` the dual objective is
/// `‖A⁻¹b̂‖² − (λ²/2)·‖ξ − y/λ‖²` over `‖Aξ‖_∞ ≤ √2/2`. When the raw `ξ`
/// is infeasible it is scaled down onto the constraint before evaluating,
/// so `gap ≥ 0` by weak duality for any `θ̂`.
pub fn dual_certificate<F: Scalar>(
    rp: &ReducedProblem<F>,
    lambda: F,
    theta_hat: &[F],
    a: &SqrtFactor<F>,
) -> Result<DualCertificate<F>> {
    if !(lambda > F::zero()) {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let m = rp.bhat.len();
    if theta_hat.len() != m || a.matrix().dim() != m {
        return Err(Error::DimMismatch {
            expected: m,
            found: if theta_hat.len() != m {
                theta_hat.len()
            } else {
                a.matrix().dim()
            },
        });
    }
    let sqrt2 = F::two().sqrt();
    let bound = sqrt2 * F::half();
    let ainv_b = a.apply_inverse(&rp.bhat)?;
    let a_theta = a.apply(theta_hat);
    let xi: Vec<F> = ainv_b
        .iter()
        .zip(&a_theta)
        .map(|(&u, &v)| sqrt2 * (u - v) / lambda)
        .collect();
    let a_xi = a.apply(&xi);
    let a_xi_max = a_xi.iter().fold(F::zero(), |mx, v| mx.max(v.abs()));
    let feasibility_violation = (a_xi_max - bound).max(F::zero());
    let dual_scale = if a_xi_max > bound { bound / a_xi_max } else { F::one() };

    let c0 = dot(&ainv_b, &ainv_b);
    let primal = objective(rp, lambda, theta_hat) + c0;
    let dist2: F = xi
        .iter()
        .zip(&ainv_b)
        .map(|(&x, &u)| {
            let d = x * dual_scale - sqrt2 * u / lambda;
            d * d
        })
        .sum();
    let dual = c0 - lambda * lambda * F::half() * dist2;
    Ok(DualCertificate {
        xi,
        feasibility_violation,
        gap: primal - dual,
        primal,
        dual,
        dual_scale,
    })
}

/// Warm-started solutions over a non-increasing `λ` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath<F> {
    pub lambdas: Vec<F>,
    pub solutions: Vec<ReducedSolution<F>>,
    /// `err_i(θ*(λ))` aligned with `lambdas`.
    pub errors: Vec<F>,
    /// Error never rises (beyond slack) as `λ` decreases.
    pub monotone: bool,
}

impl<F: Scalar> SolutionPath<F> {
    pub fn all_converged(&self) -> bool {
        self.solutions.iter().all(|s| s.converged)
    }
}

/// Solves along `grid` in order, seeding each solve with the previous one.
///
/// The grid must be positive and non-increasing; repeated values are
/// allowed and reproduce the previous solution.
pub fn solution_path<F: Scalar>(rp: &ReducedProblem<F>, grid: &[F]) -> Result<SolutionPath<F>> {
    validate_grid(grid)?;
    let mut solutions: Vec<ReducedSolution<F>> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let init = solutions.last().map(|s| s.theta_hat.as_slice());
        let sol = solve(rp, lambda, init)?;
        solutions.push(sol);
    }
    let errors: Vec<F> = solutions
        .iter()
        .map(|s| reduced_prediction_error(rp, &s.theta_hat))
        .collect();
    let slack = F::tol(PATH_MONOTONE_SLACK);
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] + slack);
    Ok(SolutionPath {
        lambdas: grid.to_vec(),
        solutions,
        errors,
        monotone,
    })
}

pub(crate) fn validate_grid<F: Scalar>(grid: &[F]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if let Some(bad) = grid.iter().find(|&&l| !(l > F::zero()) || !l.is_finite()) {
        return Err(Error::InvalidInput(format!("grid value {bad} is not positive")));
    }
    if let Some(k) = grid.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput(format!(
            "grid must be descending: {} then {}",
            grid[k],
            grid[k + 1]
        )));
    }
    Ok(())
}

/// `k` log-spaced values from `λ_max` down to `λ_max/1000`.
pub fn auto_grid<F: Scalar>(lambda_max: F, k: usize) -> Vec<F> {
    match k {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => {
            let ratio = F::lit(1e-3);
            let denom = F::lit((k - 1) as f64);
            (0..k)
                .map(|s| lambda_max * ratio.powf(F::lit(s as f64) / denom))
                .collect()
        }
    }
}

/// A full-length dependency vector with `θ_target = −1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencySolution<F> {
    pub target: usize,
    pub theta: Vec<F>,
    pub lambda: F,
    /// `θᵀCovθ`.
    pub pred_error: F,
    /// Off-target indices with `|θ_j| > 1e-10`, ascending.
    pub support: BTreeSet<usize>,
    pub converged: bool,
    pub kkt_max_violation: F,
    pub dual: Option<DualCertificate<F>>,
    pub iterations: usize,
}

impl<F: Scalar> DependencySolution<F> {
    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// `(index, θ_j)` for every support member.
    pub fn coefficients(&self) -> Vec<(usize, F)> {
        self.support.iter().map(|&j| (j, self.theta[j])).collect()
    }

    /// Attaches a dual certificate computed for this solution.
    pub fn with_dual(mut self, rp: &ReducedProblem<F>, a: &SqrtFactor<F>) -> Result<Self> {
        let theta_hat: Vec<F> = (0..rp.bhat.len())
            .map(|j| self.theta[rp.full_index(j)])
            .collect();
        self.dual = Some(dual_certificate(rp, self.lambda, &theta_hat, a)?);
        Ok(self)
    }
}

/// Places `θ̂` back into the full index space.
pub fn embed<F: Scalar>(rs: &ReducedSolution<F>, rp: &ReducedProblem<F>) -> Result<DependencySolution<F>> {
    if rs.theta_hat.len() != rp.bhat.len() {
        return Err(Error::DimMismatch {
            expected: rp.bhat.len(),
            found: rs.theta_hat.len(),
        });
    }
    let n = rp.n();
    let mut theta = vec![F::zero(); n];
    theta[rp.target] = -F::one();
    for (j, &t) in rs.theta_hat.iter().enumerate() {
        theta[rp.full_index(j)] = t;
    }
    let thr = F::lit(SUPPORT_THRESHOLD);
    let support = (0..n)
        .filter(|&j| j != rp.target && theta[j].abs() > thr)
        .collect();
    let resid = gradient(rp, &rs.theta_hat);
    Ok(DependencySolution {
        target: rp.target,
        pred_error: reduced_prediction_error(rp, &rs.theta_hat),
        theta,
        lambda: rs.lambda,
        support,
        converged: rs.converged,
        kkt_max_violation: kkt_violation(&resid, rs.lambda, &rs.theta_hat),
        dual: None,
        iterations: rs.iterations,
    })
}

/// `θᵀ·Cov·θ`, clamped at zero.
pub fn prediction_error<F: Scalar>(c: &CovMatrix<F>, theta: &[F]) -> Result<F> {
    if theta.len() != c.dim() {
        return Err(Error::DimMismatch {
            expected: c.dim(),
            found: theta.len(),
        });
    }
    Ok(c.mat.quad_form(theta).max(F::zero()))
}

/// Reduces, solves and embeds in one call.
pub fn solve_dependency<F: Scalar>(
    c: &CovMatrix<F>,
    target: usize,
    lambda: F,
) -> Result<DependencySolution<F>> {
    let rp = c.reduce(target)?;
    let rs = solve(&rp, lambda, None)?;
    embed(&rs, &rp)
}
