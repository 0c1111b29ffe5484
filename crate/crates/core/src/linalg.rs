//! Dense symmetric linear algebra.
//!
//! Everything here works from a cyclic Jacobi eigendecomposition: square
//! roots, inverse square roots, SPD solves and log-determinants are all
//! spectral functions of the same factorization. Tiny or negative
//! eigenvalues are never silently divided by; callers pass an explicit
//! floor and the routines report when it was used.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative eigenvalue floor applied when the caller does not choose one.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-12;

/// Effective eigenvalues below this are treated as exactly singular.
pub const SINGULAR_EIGENVALUE: f64 = 1e-300;

const MAX_SWEEPS: usize = 100;

/// A dense `n × n` symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Scalar> SymmetricMatrix<F> {
    /// Builds from row-major data, storing `(M + Mᵀ)/2`.
    pub fn new(n: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / n,
                pos % n
            )));
        }
        let mut m = Self { n, data };
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (m.data[i * n + j] + m.data[j * n + i]) * F::half();
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    /// Builds from a closure evaluated on the upper triangle only.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> F) -> Result<Self> {
        let mut data = vec![F::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!(
                        "non-finite entry at ({i}, {j})"
                    )));
                }
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![F::one(); n])
    }

    pub fn diagonal(d: &[F]) -> Self {
        let n = d.len();
        let mut data = vec![F::zero(); n * n];
        for (i, &v) in d.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn diag(&self) -> Vec<F> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `S·x`.
    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n, "mul_vec dimension");
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ·S·x`.
    pub fn quad_form(&self, x: &[F]) -> F {
        dot(x, &self.mul_vec(x))
    }

    pub fn matmul(&self, other: &Self) -> Vec<F> {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = vec![F::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == F::zero() {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> F {
        self.data.iter().map(|&x| x * x).sum::<F>().sqrt()
    }

    /// Principal submatrix with row and column `skip` removed.
    pub fn without(&self, skip: usize) -> Self {
        let n = self.n;
        let mut data = Vec::with_capacity((n - 1) * (n - 1));
        for i in (0..n).filter(|&i| i != skip) {
            for j in (0..n).filter(|&j| j != skip) {
                data.push(self.get(i, j));
            }
        }
        Self { n: n - 1, data }
    }

    /// Converts the scalar type.
    pub fn cast<G: Scalar>(&self) -> SymmetricMatrix<G> {
        SymmetricMatrix {
            n: self.n,
            data: self.data.iter().map(|x| G::lit(x.as_f64())).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Spectral factorization `S = Q·diag(σ²)·Qᵀ` with eigenvalues descending.
#[derive(Debug, Clone)]
pub struct Eigendecomposition<F> {
    eigenvalues: Vec<F>,
    /// Row-major `n × n`; column `j` is the eigenvector for `eigenvalues[j]`.
    vectors: Vec<F>,
    source_dim: usize,
    /// Eigenvalues in `[−1e-8·‖S‖_max, 0)` that were reset to zero.
    pub clamped_negatives: usize,
    /// Most negative raw eigenvalue seen before clamping (zero if none).
    pub min_raw_eigenvalue: F,
    /// Jacobi sweeps used.
    pub sweeps: usize,
}

impl<F: Scalar> Eigendecomposition<F> {
    pub fn eigenvalues(&self) -> &[F] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.source_dim
    }

    /// Entry `k` of eigenvector `j`.
    #[inline]
    pub fn vector_entry(&self, k: usize, j: usize) -> F {
        self.vectors[k * self.source_dim + j]
    }

    pub fn vector(&self, j: usize) -> Vec<F> {
        (0..self.source_dim).map(|k| self.vector_entry(k, j)).collect()
    }

    /// `α_j = ⟨e_i, q_j⟩` for every `j`.
    pub fn axis_loadings(&self, i: usize) -> Vec<F> {
        self.vectors[i * self.source_dim..(i + 1) * self.source_dim].to_vec()
    }

    /// Largest eigenvalue (zero for an empty matrix).
    pub fn max_eigenvalue(&self) -> F {
        self.eigenvalues.first().copied().unwrap_or_else(F::zero)
    }

    pub fn min_eigenvalue(&self) -> F {
        self.eigenvalues.last().copied().unwrap_or_else(F::zero)
    }

    /// Absolute floor `rel · max(σ₁², 0)`.
    pub fn relative_floor(&self, rel: F) -> F {
        rel * self.max_eigenvalue().max(F::zero())
    }

    /// Default floor `1e-12 · σ₁²`.
    pub fn default_floor(&self) -> F {
        self.relative_floor(F::lit(DEFAULT_RELATIVE_FLOOR))
    }

    /// Whether any eigenvalue falls strictly below `floor`.
    pub fn needs_floor(&self, floor: F) -> bool {
        self.eigenvalues.iter().any(|&s| s < floor)
    }

    /// `Q·diag(g(σ_j²))·Qᵀ·x`.
    pub fn apply_spectral(&self, x: &[F], mut g: impl FnMut(F) -> F) -> Vec<F> {
        let n = self.source_dim;
        assert_eq!(x.len(), n, "apply_spectral dimension");
        let mut coeffs = vec![F::zero(); n];
        for k in 0..n {
            let xk = x[k];
            if xk == F::zero() {
                continue;
            }
            let row = &self.vectors[k * n..(k + 1) * n];
            for (c, &q) in coeffs.iter_mut().zip(row) {
                *c += q * xk;
            }
        }
        for (c, &s) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= g(s);
        }
        (0..n)
            .map(|k| dot(&self.vectors[k * n..(k + 1) * n], &coeffs))
            .collect()
    }

    /// Solves `(S + ridge·I)·x = rhs` with eigenvalues floored at `floor`.
    pub fn solve(&self, rhs: &[F], ridge: F, floor: F) -> Result<Vec<F>> {
        if rhs.len() != self.source_dim {
            return Err(Error::DimMismatch {
                expected: self.source_dim,
                found: rhs.len(),
            });
        }
        let eff_min = self
            .eigenvalues
            .iter()
            .map(|&s| s.max(floor) + ridge)
            .fold(F::infinity(), F::min);
        if self.source_dim > 0 && !(eff_min >= F::lit(SINGULAR_EIGENVALUE)) {
            return Err(Error::SingularMatrix(eff_min.as_f64()));
        }
        Ok(self.apply_spectral(rhs, |s| (s.max(floor) + ridge).recip()))
    }

    /// Reassembles `Q·diag(σ²)·Qᵀ` (diagnostics and tests).
    pub fn reconstruct(&self) -> Vec<F> {
        let n = self.source_dim;
        let mut out = vec![F::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = F::zero();
                for k in 0..n {
                    acc += self.vector_entry(i, k) * self.eigenvalues[k] * self.vector_entry(j, k);
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    /// `max |QᵀQ − I|`.
    pub fn orthogonality_error(&self) -> F {
        let n = self.source_dim;
        let mut worst = F::zero();
        for a in 0..n {
            for b in 0..n {
                let mut acc = F::zero();
                for k in 0..n {
                    acc += self.vector_entry(k, a) * self.vector_entry(k, b);
                }
                let target = if a == b { F::one() } else { F::zero() };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps until the off-diagonal Frobenius mass drops to `1e-12·‖S‖_F`.
pub fn eigendecompose<F: Scalar>(s: &SymmetricMatrix<F>) -> Result<Eigendecomposition<F>> {
    let n = s.dim();
    if s.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let mut a = s.as_slice().to_vec();
    let mut v = vec![F::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = F::one();
    }
    let threshold = F::tol(1e-12) * s.frobenius();
    let big = F::max_value().sqrt() * F::half();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off = off_diagonal_norm(&a, n);
        if off <= threshold {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == F::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (F::two() * apq);
                let t = if tau.abs() > big {
                    (F::two() * tau).recip()
                } else {
                    let t = (tau.abs() + (F::one() + tau * tau).sqrt()).recip();
                    if tau >= F::zero() {
                        t
                    } else {
                        -t
                    }
                };
                let c = (F::one() + t * t).sqrt().recip();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = F::zero();
                a[q * n + p] = F::zero();
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a[y * n + y]
            .partial_cmp(&a[x * n + x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let clamp_band = F::tol(1e-8) * s.max_abs();
    let mut clamped = 0;
    let mut min_raw = F::zero();
    let mut eigenvalues = Vec::with_capacity(n);
    for &k in &order {
        let mut lam = a[k * n + k];
        min_raw = min_raw.min(lam);
        if lam < F::zero() && lam >= -clamp_band {
            lam = F::zero();
            clamped += 1;
        }
        eigenvalues.push(lam);
    }
    let mut vectors = vec![F::zero(); n * n];
    for (new_j, &old_j) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + new_j] = v[k * n + old_j];
        }
    }

    Ok(Eigendecomposition {
        eigenvalues,
        vectors,
        source_dim: n,
        clamped_negatives: clamped,
        min_raw_eigenvalue: min_raw,
        sweeps,
    })
}

fn off_diagonal_norm<F: Scalar>(a: &[F], n: usize) -> F {
    let mut acc = F::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// `Q·diag(max(σ², floor))^{1/2}·Qᵀ`.
pub fn sym_sqrt<F: Scalar>(e: &Eigendecomposition<F>, floor: F) -> Result<SymmetricMatrix<F>> {
    let n = e.dim();
    let roots: Vec<F> = e.eigenvalues.iter().map(|&s| s.max(floor).sqrt()).collect();
    SymmetricMatrix::from_upper(n, |i, j| {
        (0..n)
            .map(|k| e.vector_entry(i, k) * roots[k] * e.vector_entry(j, k))
            .sum()
    })
}

/// A symmetric square root `A` of a PSD matrix together with the spectral
/// data needed to apply `A⁻¹` without a second factorization.
#[derive(Debug, Clone)]
pub struct SqrtFactor<F> {
    matrix: SymmetricMatrix<F>,
    eig: Eigendecomposition<F>,
    floor: F,
}

impl<F: Scalar> SqrtFactor<F> {
    pub fn new(eig: Eigendecomposition<F>, floor: F) -> Result<Self> {
        if floor < F::zero() {
            return Err(Error::InvalidInput("negative eigenvalue floor".into()));
        }
        let matrix = sym_sqrt(&eig, floor)?;
        Ok(Self { matrix, eig, floor })
    }

    /// Factors `S` with the default relative floor.
    pub fn of(s: &SymmetricMatrix<F>) -> Result<Self> {
        let eig = eigendecompose(s)?;
        let floor = eig.default_floor();
        Self::new(eig, floor)
    }

    pub fn matrix(&self) -> &SymmetricMatrix<F> {
        &self.matrix
    }

    pub fn eigen(&self) -> &Eigendecomposition<F> {
        &self.eig
    }

    pub fn floor(&self) -> F {
        self.floor
    }

    /// True when some eigenvalue was raised to the floor.
    pub fn floored(&self) -> bool {
        self.eig.needs_floor(self.floor)
    }

    pub fn apply(&self, x: &[F]) -> Vec<F> {
        self.matrix.mul_vec(x)
    }

    /// `A⁻¹·x` (equal to `A⁻ᵀ·x`, `A` being symmetric).
    pub fn apply_inverse(&self, x: &[F]) -> Result<Vec<F>> {
        let eff_min = self
            .eig
            .eigenvalues()
            .iter()
            .map(|&s| s.max(self.floor))
            .fold(F::infinity(), F::min);
        if self.eig.dim() > 0 && !(eff_min >= F::lit(SINGULAR_EIGENVALUE)) {
            return Err(Error::SingularMatrix(eff_min.as_f64()));
        }
        let floor = self.floor;
        Ok(self
            .eig
            .apply_spectral(x, |s| s.max(floor).sqrt().recip()))
    }

    /// `‖A_j‖₂`, the Euclidean norm of row `j`.
    pub fn row_norm(&self, j: usize) -> F {
        norm2(self.matrix.row(j))
    }
}

/// Solves `(S + ridge·I)·x = rhs` through the eigendecomposition of `S`.
pub fn solve_spd<F: Scalar>(s: &SymmetricMatrix<F>, rhs: &[F], ridge: F) -> Result<Vec<F>> {
    if rhs.len() != s.dim() {
        return Err(Error::DimMismatch {
            expected: s.dim(),
            found: rhs.len(),
        });
    }
    if ridge < F::zero() {
        return Err(Error::InvalidInput("ridge must be nonnegative".into()));
    }
    let e = eigendecompose(s)?;
    e.solve(rhs, ridge, F::neg_infinity())
}

/// `Σ_j ln max(σ_j², floor)`.
pub fn log_det<F: Scalar>(e: &Eigendecomposition<F>, floor: F) -> Result<F> {
    let mut acc = F::zero();
    for &s in e.eigenvalues() {
        let eff = s.max(floor);
        if eff <= F::zero() {
            return Err(Error::SingularMatrix(eff.as_f64()));
        }
        acc += eff.ln();
    }
    Ok(acc)
}
