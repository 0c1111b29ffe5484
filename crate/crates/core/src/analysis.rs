//! Diagnostics that explain a dependency without (or alongside) solving for
//! it: how redundant the target channel is, which categories can be ruled
//! out of its support in advance, and what a solved error guarantees.

use std::collections::BTreeSet;

use crate::covariance::{CovMatrix, ReducedProblem};
use crate::covlasso::{lambda_max, DependencySolution, ReducedSolution, SolutionPath};
use crate::error::{Error, Result};
use crate::linalg::{dot, eigendecompose, log_det, norm2, SqrtFactor, DEFAULT_RELATIVE_FLOOR};
use crate::scalar::Scalar;

/// Guard band subtracted from the screening threshold.
pub const SCREEN_GUARD: f64 = 1e-12;

/// Additive slack in the slope-bound check.
pub const SLOPE_SLACK: f64 = 1e-8;

/// Targets with `Cov_ii` at or below this carry no signal to explain.
pub const DEGENERATE_TARGET: f64 = 1e-300;

/// How much of channel `i` the other channels already explain.
#[derive(Debug, Clone, PartialEq)]
pub struct RedundancyReport<F> {
    pub target: usize,
    /// `1/(Cov⁻¹)_ii`, the error of the best unpenalized combination.
    pub err0: F,
    /// `ln det Cov − ln det Cov_{−i,−i}`.
    pub log_det_ratio: F,
    /// `Σ_j α_j²/σ_j²` with `α_j = ⟨e_i, q_j⟩`.
    pub eigen_sum: F,
    /// `err0 / Cov_ii`.
    pub relative: F,
    pub cov_ii: F,
    /// Some eigenvalue of `Cov` or of the minor sat below the floor.
    pub floored: bool,
    /// Absolute eigenvalue floor used.
    pub floor: F,
}

impl<F: Scalar> RedundancyReport<F> {
    /// Largest pairwise relative disagreement among the three routes.
    pub fn route_disagreement(&self) -> F {
        let routes = [self.err0, self.log_det_ratio.exp(), self.eigen_sum.recip()];
        let mut worst = F::zero();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let scale = routes[a].abs().max(routes[b].abs());
                if scale > F::zero() {
                    worst = worst.max((routes[a] - routes[b]).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Redundancy of category `i` with the default relative floor.
pub fn redundancy<F: Scalar>(c: &CovMatrix<F>, i: usize) -> Result<RedundancyReport<F>> {
    redundancy_with_floor(c, i, F::lit(DEFAULT_RELATIVE_FLOOR))
}

/// Redundancy of category `i` computed three ways: an SPD solve for
/// `(Cov⁻¹)e_i`, a log-determinant ratio from two factorizations, and the
/// spectral sum over the full factorization.
pub fn redundancy_with_floor<F: Scalar>(
    c: &CovMatrix<F>,
    i: usize,
    relative_floor: F,
) -> Result<RedundancyReport<F>> {
    let n = c.dim();
    if n < 2 {
        return Err(Error::DimTooSmall(n));
    }
    if i >= n {
        return Err(Error::OutOfRange(format!("target {i} of {n}")));
    }
    let cov_ii = c.get(i, i);
    if !(cov_ii > F::lit(DEGENERATE_TARGET)) {
        return Err(Error::DegenerateTarget {
            target: i,
            cov_ii: cov_ii.as_f64(),
        });
    }
    let eig = eigendecompose(&c.mat)?;
    let floor = eig.relative_floor(relative_floor);
    let minor = eigendecompose(&c.mat.without(i))?;
    let floored = eig.needs_floor(floor) || minor.needs_floor(floor);

    let mut e_i = vec![F::zero(); n];
    e_i[i] = F::one();
    let x = eig.solve(&e_i, F::zero(), floor)?;
    let err0 = x[i].recip();

    let log_det_ratio = log_det(&eig, floor)? - log_det(&minor, floor)?;

    let eigen_sum = eig
        .axis_loadings(i)
        .iter()
        .zip(eig.eigenvalues())
        .map(|(&a, &s)| a * a / s.max(floor))
        .sum();

    Ok(RedundancyReport {
        target: i,
        err0,
        log_det_ratio,
        eigen_sum,
        relative: err0 / cov_ii,
        cov_ii,
        floored,
        floor,
    })
}

/// Per-coordinate screening values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenEntry<F> {
    /// Category index.
    pub index: usize,
    /// `|Cov_ij|`.
    pub cov_abs: F,
    /// `|b̂_j| / ‖b̂‖_∞`.
    pub ratio: F,
    /// `1 − 2‖A_j‖₂‖A⁻ᵀb̂‖₂·|1/λ − 1/(2‖b̂‖_∞)|`.
    pub theorem3_rhs: F,
    /// `λ/λ_max`, the equivalent normalized form of `|Cov_ij| < λ/2`.
    pub conjecture_bar: F,
    pub theorem3_zero: bool,
    pub conjecture_zero: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningReport<F> {
    pub target: usize,
    pub lambda: F,
    pub lambda_max: F,
    /// Categories proven to have zero coefficient.
    pub theorem3_zero: BTreeSet<usize>,
    /// Categories predicted (heuristically) to have zero coefficient.
    pub conjecture_zero: BTreeSet<usize>,
    pub per_j: Vec<ScreenEntry<F>>,
    /// `‖A⁻ᵀb̂‖₂` as used in the bound.
    pub ainv_b_norm: F,
    /// The square root needed flooring, so `‖A⁻ᵀb̂‖₂` was replaced by its
    /// upper bound `√Cov_ii`.
    pub conservative: bool,
}

impl<F: Scalar> ScreeningReport<F> {
    /// Indices screened out that nonetheless carry a nonzero coefficient in
    /// `sol`: `(certified-zero violations, heuristic violations)`.
    pub fn violations(&self, sol: &DependencySolution<F>) -> (Vec<usize>, Vec<usize>) {
        let bad = |set: &BTreeSet<usize>| set.iter().copied().filter(|j| sol.support.contains(j)).collect();
        (bad(&self.theorem3_zero), bad(&self.conjecture_zero))
    }
}

/// Precomputed, `λ`-independent screening quantities for one target.
#[derive(Debug, Clone)]
pub struct Screener<F> {
    target: usize,
    full_index: Vec<usize>,
    bhat: Vec<F>,
    row_norms: Vec<F>,
    ainv_b_norm: F,
    conservative: bool,
    lambda_max: F,
}

impl<F: Scalar> Screener<F> {
    pub fn new(rp: &ReducedProblem<F>) -> Result<Self> {
        let factor = SqrtFactor::of(&rp.chat)?;
        Self::with_factor(rp, &factor)
    }

    /// Uses an existing square root of `Ĉ`.
    ///
    /// `‖A_j‖₂` is taken as `max(‖row_j(A)‖, √Ĉ_jj)`, which equals the
    /// exact value whenever `A² = Ĉ`. If the factor floored any eigenvalue,
    /// `A⁻¹b̂` is no longer trustworthy and `√Cov_ii` (which bounds
    /// `‖Ĉ^{-1/2}b̂‖` for any PSD `Cov`) stands in for it.
    pub fn with_factor(rp: &ReducedProblem<F>, factor: &SqrtFactor<F>) -> Result<Self> {
        let m = rp.bhat.len();
        if factor.matrix().dim() != m {
            return Err(Error::DimMismatch {
                expected: m,
                found: factor.matrix().dim(),
            });
        }
        let row_norms = (0..m)
            .map(|j| factor.row_norm(j).max(rp.chat.get(j, j).max(F::zero()).sqrt()))
            .collect();
        let conservative = factor.floored();
        let ainv_b_norm = if conservative {
            rp.cov_ii.max(F::zero()).sqrt()
        } else {
            norm2(&factor.apply_inverse(&rp.bhat)?)
        };
        Ok(Self {
            target: rp.target,
            full_index: (0..m).map(|j| rp.full_index(j)).collect(),
            bhat: rp.bhat.clone(),
            row_norms,
            ainv_b_norm,
            conservative,
            lambda_max: lambda_max(rp),
        })
    }

    pub fn lambda_max(&self) -> F {
        self.lambda_max
    }

    /// `‖A_j‖₂·‖A⁻ᵀb̂‖₂`, the per-coordinate Lipschitz constant of `r_j/λ`
    /// in `1/λ`.
    pub fn slope_constant(&self, j: usize) -> F {
        self.row_norms[j] * self.ainv_b_norm
    }

    /// Screening at `λ ∈ (0, λ_max)`.
    pub fn at(&self, lambda: F) -> Result<ScreeningReport<F>> {
        let lmax = self.lambda_max;
        if !(lambda > F::zero() && lambda < lmax) {
            return Err(Error::OutOfRange(format!(
                "lambda {lambda} outside (0, lambda_max = {lmax})"
            )));
        }
        let binf = lmax * F::half();
        let gap = (lambda.recip() - (F::two() * binf).recip()).abs();
        let guard = F::lit(SCREEN_GUARD);
        let half = lambda * F::half();
        let mut per_j = Vec::with_capacity(self.bhat.len());
        let mut theorem3_zero = BTreeSet::new();
        let mut conjecture_zero = BTreeSet::new();
        for (j, &b) in self.bhat.iter().enumerate() {
            let ratio = b.abs() / binf;
            let rhs = F::one() - F::two() * self.slope_constant(j) * gap;
            let t3 = ratio < rhs - guard;
            let conj = b.abs() < half;
            let index = self.full_index[j];
            if t3 {
                theorem3_zero.insert(index);
            }
            if conj {
                conjecture_zero.insert(index);
            }
            per_j.push(ScreenEntry {
                index,
                cov_abs: b.abs(),
                ratio,
                theorem3_rhs: rhs,
                conjecture_bar: lambda / lmax,
                theorem3_zero: t3,
                conjecture_zero: conj,
            });
        }
        Ok(ScreeningReport {
            target: self.target,
            lambda,
            lambda_max: lmax,
            theorem3_zero,
            conjecture_zero,
            per_j,
            ainv_b_norm: self.ainv_b_norm,
            conservative: self.conservative,
        })
    }
}

/// Screens category `i` of `c` at `λ`.
pub fn screen<F: Scalar>(c: &CovMatrix<F>, i: usize, lambda: F) -> Result<ScreeningReport<F>> {
    let rp = c.reduce(i)?;
    Screener::new(&rp)?.at(lambda)
}

/// Margin of the slope bound between two consecutive path points.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeMargin<F> {
    pub lambda_a: F,
    pub lambda_b: F,
    /// Smallest `RHS + slack − LHS` over coordinates (nonnegative ⇔ pass).
    pub margin: F,
    /// Reduced coordinate attaining `margin`.
    pub worst: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeVerification<F> {
    pub pairs: Vec<SlopeMargin<F>>,
    pub passed: bool,
}

/// Checks `|r_j(λ')/λ' − r_j(λ'')/λ''| ≤ ‖A_j‖‖A⁻ᵀb̂‖·|1/λ' − 1/λ''| + 1e-8`
/// for each coordinate and each consecutive pair on the path, where
/// `r = Ĉθ̂ − b̂`.
pub fn verify_slope_bound<F: Scalar>(
    rp: &ReducedProblem<F>,
    path: &SolutionPath<F>,
) -> Result<SlopeVerification<F>> {
    let screener = Screener::new(rp)?;
    verify_slope_bound_with(rp, path, &screener)
}

pub fn verify_slope_bound_with<F: Scalar>(
    rp: &ReducedProblem<F>,
    path: &SolutionPath<F>,
    screener: &Screener<F>,
) -> Result<SlopeVerification<F>> {
    let lmax = screener.lambda_max();
    let top = lmax * (F::one() + F::tol(1e-12));
    for (k, s) in path.solutions.iter().enumerate() {
        if !s.converged {
            return Err(Error::InvalidInput(format!(
                "path point {k} (lambda {}) did not converge",
                s.lambda
            )));
        }
        if !(s.lambda > F::zero() && s.lambda <= top) {
            return Err(Error::OutOfRange(format!(
                "path lambda {} outside (0, lambda_max = {lmax}]",
                s.lambda
            )));
        }
    }
    let scaled: Vec<Vec<F>> = path
        .solutions
        .iter()
        .map(|s| {
            rp.chat
                .mul_vec(&s.theta_hat)
                .iter()
                .zip(&rp.bhat)
                .map(|(&a, &b)| (a - b) / s.lambda)
                .collect()
        })
        .collect();
    let slack = F::lit(SLOPE_SLACK);
    let mut pairs = Vec::new();
    for k in 1..path.solutions.len() {
        let (la, lb) = (path.solutions[k - 1].lambda, path.solutions[k].lambda);
        let dinv = (la.recip() - lb.recip()).abs();
        let mut margin = F::infinity();
        let mut worst = 0;
        for j in 0..rp.bhat.len() {
            let lhs = (scaled[k - 1][j] - scaled[k][j]).abs();
            let m = screener.slope_constant(j) * dinv + slack - lhs;
            if m < margin {
                margin = m;
                worst = j;
            }
        }
        pairs.push(SlopeMargin {
            lambda_a: la,
            lambda_b: lb,
            margin,
            worst,
        });
    }
    let passed = pairs.iter().all(|p| p.margin >= F::zero());
    Ok(SlopeVerification { pairs, passed })
}

/// Probability statement backed by a prediction error.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovCertificate<F> {
    pub epsilon: F,
    pub delta: F,
    pub expected_sq_error: F,
    /// `expected_sq_error ≤ ε·δ`.
    pub holds: bool,
    /// `expected_sq_error ≤ ε²·δ`, the Chebyshev form, which implies
    /// `Pr(|f_i − Σθ_j f_j| ≥ ε) ≤ δ` for every `ε`.
    pub chebyshev_holds: bool,
}

/// Certifies `Pr(|f_i − Σ_{j≠i} θ_j f_j| < ε) > 1 − δ` from `θᵀCovθ`.
///
/// `holds` is the first-moment test `E ≤ εδ`; it implies the probability
/// statement only for `ε ≥ 1`. `chebyshev_holds` is valid for any `ε`.
pub fn certify_dependency<F: Scalar>(
    sol: &DependencySolution<F>,
    epsilon: F,
    delta: F,
) -> Result<MarkovCertificate<F>> {
    if !(epsilon > F::zero()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > F::zero() && delta < F::one()) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let e = sol.pred_error;
    Ok(MarkovCertificate {
        epsilon,
        delta,
        expected_sq_error: e,
        holds: e <= epsilon * delta,
        chebyshev_holds: e <= epsilon * epsilon * delta,
    })
}

/// Bracket on `Cov_ii − err_i(θ*(λ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinerErrorBound<F> {
    /// `max(0, ‖A⁻ᵀb̂‖² − (λ²/2)(‖ξ(λ_max)‖ + ‖ξ(λ) − ξ(λ_max)‖)²)`.
    pub lower: F,
    /// `‖A⁻ᵀb̂‖²·(1 − (2λ/λ_max − 1)₊²)`, from the contraction of `ξ` in `1/λ`.
    pub upper: F,
    /// `‖A⁻ᵀb̂‖² − (λ²/2)‖ξ(λ)‖²`.
    pub identity: F,
    /// `Cov_ii − θᵀCovθ` evaluated directly.
    pub direct: F,
    pub xi: Vec<F>,
}

/// Evaluates the dual-side identity for `Cov_ii − err` and brackets it.
pub fn finer_error_bound<F: Scalar>(
    rp: &ReducedProblem<F>,
    lambda: F,
    sol: &ReducedSolution<F>,
    a: &SqrtFactor<F>,
) -> Result<FinerErrorBound<F>> {
    if !sol.converged {
        return Err(Error::InvalidInput("solution did not converge".into()));
    }
    let lmax = lambda_max(rp);
    if !(lambda > F::zero() && lambda <= lmax * (F::one() + F::tol(1e-12))) {
        return Err(Error::OutOfRange(format!(
            "lambda {lambda} outside (0, lambda_max = {lmax}]"
        )));
    }
    let theta = &sol.theta_hat;
    if theta.len() != rp.bhat.len() {
        return Err(Error::DimMismatch {
            expected: rp.bhat.len(),
            found: theta.len(),
        });
    }
    let sqrt2 = F::two().sqrt();
    let u = a.apply_inverse(&rp.bhat)?;
    let a_theta = a.apply(theta);
    let c0 = dot(&u, &u);
    let xi: Vec<F> = u
        .iter()
        .zip(&a_theta)
        .map(|(&ui, &v)| sqrt2 * (ui - v) / lambda)
        .collect();
    let half_l2 = lambda * lambda * F::half();
    let identity = c0 - half_l2 * dot(&xi, &xi);
    let direct = F::two() * dot(&rp.bhat, theta) - rp.chat.quad_form(theta);

    let xi_max: Vec<F> = u.iter().map(|&ui| sqrt2 * ui / lmax).collect();
    let diff: Vec<F> = xi.iter().zip(&xi_max).map(|(&x, &y)| x - y).collect();
    let s = norm2(&xi_max) + norm2(&diff);
    let lower = (c0 - half_l2 * s * s).max(F::zero());
    let t = (F::two() * lambda / lmax - F::one()).max(F::zero());
    let upper = c0 * (F::one() - t * t);
    Ok(FinerErrorBound {
        lower,
        upper,
        identity,
        direct,
        xi,
    })
}

/// `|E[f_i f_j]|`, the value penalized to break a dependency between two
/// categories.
pub fn pair_covariance<F: Scalar>(c: &CovMatrix<F>, i: usize, j: usize) -> Result<F> {
    let n = c.dim();
    if i == j {
        return Err(Error::InvalidInput(format!("pair ({i}, {j}) is not a pair")));
    }
    if i >= n || j >= n {
        return Err(Error::OutOfRange(format!("pair ({i}, {j}) of {n}")));
    }
    Ok(c.get(i, j).abs())
}
