//! Logit matrices and their uncentralized second-moment matrix.
//!
//! `Cov = E[f(x) f(x)ᵀ]` is taken over raw logits: no softmax, no mean
//! subtraction, no scaling.

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::scalar::{Compensated, Scalar};

/// `N × n` raw logits, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
    labels: Option<Vec<u32>>,
    names: Option<Vec<String>>,
}

impl<F: Scalar> LogitMatrix<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "logit matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite logit at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            labels: None,
            names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::DimMismatch {
                expected: self.rows,
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= self.cols) {
            return Err(Error::InvalidLabels(format!(
                "label {bad} out of range for {} categories",
                self.cols
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Attaches labels that may index categories beyond the columns present
    /// (base logits whose labels also cover new categories).
    pub fn with_extended_labels(mut self, labels: Vec<u32>, n_total: usize) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::DimMismatch {
                expected: self.rows,
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_total) {
            return Err(Error::InvalidLabels(format!(
                "label {bad} out of range for {n_total} categories"
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::DimMismatch {
                expected: self.cols,
                found: names.len(),
            });
        }
        self.names = Some(names);
        Ok(self)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<F> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Name of category `c`, falling back to its index.
    pub fn name_of(&self, c: usize) -> String {
        self.names
            .as_ref()
            .and_then(|n| n.get(c).cloned())
            .unwrap_or_else(|| c.to_string())
    }

    /// Copy with column `c` replaced.
    pub fn with_column(&self, c: usize, values: &[F]) -> Result<Self> {
        if c >= self.cols {
            return Err(Error::OutOfRange(format!(
                "column {c} of {}",
                self.cols
            )));
        }
        if values.len() != self.rows {
            return Err(Error::DimMismatch {
                expected: self.rows,
                found: values.len(),
            });
        }
        let mut out = self.clone();
        for (r, &v) in values.iter().enumerate() {
            out.data[r * self.cols + c] = v;
        }
        Ok(out)
    }

    /// Rows `start..end` as a new matrix (labels follow; names kept).
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::OutOfRange(format!(
                "row range {start}..{end} of {}",
                self.rows
            )));
        }
        Ok(Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            names: self.names.clone(),
        })
    }

    /// Multiplies every entry by `alpha`.
    pub fn scaled(&self, alpha: F) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= alpha);
        out
    }
}

/// Streaming accumulator of `Σ f fᵀ` over samples.
///
/// Each upper-triangle entry is a compensated running sum fed in sample
/// order. Accumulators built on disjoint shards merge by folding the later
/// shard into the earlier one.
#[derive(Debug, Clone, PartialEq)]
pub struct CovAccumulator<F> {
    n: usize,
    upper: Vec<Compensated<F>>,
    count: u64,
}

impl<F: Scalar> CovAccumulator<F> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            upper: vec![Compensated::default(); n * (n + 1) / 2],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push_row(&mut self, row: &[F]) -> Result<()> {
        if row.len() != self.n {
            return Err(Error::DimMismatch {
                expected: self.n,
                found: row.len(),
            });
        }
        let mut k = 0;
        for i in 0..self.n {
            let fi = row[i];
            for &fj in &row[i..] {
                self.upper[k].add(fi * fj);
                k += 1;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Absorbs every row of `batch` in order.
    pub fn accumulate(&mut self, batch: &LogitMatrix<F>) -> Result<()> {
        if batch.cols() != self.n {
            return Err(Error::DimMismatch {
                expected: self.n,
                found: batch.cols(),
            });
        }
        for r in 0..batch.rows() {
            self.push_row(batch.row(r))?;
        }
        Ok(())
    }

    /// Folds `other` (samples that come after ours) into `self`.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            a.merge(b);
        }
        self.count += other.count;
        Ok(())
    }

    /// Current `Σ f fᵀ` as a full matrix.
    pub fn sum_outer(&self) -> SymmetricMatrix<F> {
        let n = self.n;
        SymmetricMatrix::from_upper(n, |i, j| self.upper[tri_index(n, i, j)].value())
            .expect("finite sums")
    }

    /// `Cov = Σ f fᵀ / count`.
    pub fn finalize(&self) -> Result<CovMatrix<F>> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let n = self.n;
        let denom = F::lit(self.count as f64);
        let mat = SymmetricMatrix::from_upper(n, |i, j| {
            self.upper[tri_index(n, i, j)].value() / denom
        })?;
        Ok(CovMatrix {
            mat,
            sample_count: self.count,
        })
    }
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    // row-major upper triangle, i <= j; rows before i hold Σ_{r<i}(n − r)
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Second-moment matrix with the number of samples behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix<F> {
    pub mat: SymmetricMatrix<F>,
    pub sample_count: u64,
}

impl<F: Scalar> CovMatrix<F> {
    pub fn new(mat: SymmetricMatrix<F>, sample_count: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok(Self { mat, sample_count })
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.mat.get(i, j)
    }

    /// Covariance of a whole logit matrix in one pass.
    pub fn from_logits(logits: &LogitMatrix<F>) -> Result<Self> {
        let mut acc = CovAccumulator::new(logits.cols());
        acc.accumulate(logits)?;
        acc.finalize()
    }

    /// Splits the rows into `shards` contiguous blocks, accumulates each on
    /// its own thread and merges them in block order. The result depends
    /// only on `shards`, never on thread scheduling.
    pub fn from_logits_sharded(logits: &LogitMatrix<F>, shards: usize) -> Result<Self> {
        let shards = shards.clamp(1, logits.rows());
        if shards == 1 {
            return Self::from_logits(logits);
        }
        let per = logits.rows().div_ceil(shards);
        let bounds: Vec<(usize, usize)> = (0..shards)
            .map(|s| (s * per, ((s + 1) * per).min(logits.rows())))
            .filter(|(a, b)| a < b)
            .collect();
        let parts: Vec<Result<CovAccumulator<F>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = bounds
                .iter()
                .map(|&(a, b)| {
                    scope.spawn(move || {
                        let mut acc = CovAccumulator::new(logits.cols());
                        for r in a..b {
                            acc.push_row(logits.row(r))?;
                        }
                        Ok(acc)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("accumulator thread panicked"))
                .collect()
        });
        let mut total = CovAccumulator::new(logits.cols());
        for part in parts {
            total.merge(&part?)?;
        }
        total.finalize()
    }

    /// Extracts `(Ĉov, b̂, Cov_ii)` for target `i`.
    ///
    /// Reduced coordinate `j` corresponds to full index `j` when `j < i` and
    /// `j + 1` otherwise (see [`ReducedProblem::full_index`]).
    pub fn reduce(&self, target: usize) -> Result<ReducedProblem<F>> {
        let n = self.dim();
        if n < 2 {
            return Err(Error::DimTooSmall(n));
        }
        if target >= n {
            return Err(Error::OutOfRange(format!("target {target} of {n}")));
        }
        let bhat = (0..n)
            .filter(|&j| j != target)
            .map(|j| self.get(j, target))
            .collect();
        Ok(ReducedProblem {
            target,
            chat: self.mat.without(target),
            bhat,
            cov_ii: self.get(target, target),
        })
    }

    pub fn cast<G: Scalar>(&self) -> CovMatrix<G> {
        CovMatrix {
            mat: self.mat.cast(),
            sample_count: self.sample_count,
        }
    }
}

/// Covariance of `f̃ = (f₁,…,f_{i−1}, g_i, f_{i+1},…,f_n)`: logits of network
/// `f` with channel `i` taken from network `g` on the same samples.
pub fn cross_covariance<F: Scalar>(
    f: &LogitMatrix<F>,
    g: &LogitMatrix<F>,
    target: usize,
) -> Result<CovMatrix<F>> {
    if f.rows() != g.rows() {
        return Err(Error::DimMismatch {
            expected: f.rows(),
            found: g.rows(),
        });
    }
    if f.cols() != g.cols() {
        return Err(Error::DimMismatch {
            expected: f.cols(),
            found: g.cols(),
        });
    }
    if target >= f.cols() {
        return Err(Error::OutOfRange(format!("target {target} of {}", f.cols())));
    }
    let tilde = f.with_column(target, &g.column(target))?;
    CovMatrix::from_logits(&tilde)
}

/// The unconstrained `(n−1)`-dimensional problem for one target category.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProblem<F> {
    pub target: usize,
    /// `Cov` without row and column `target`.
    pub chat: SymmetricMatrix<F>,
    /// Column `target` of `Cov` without its diagonal entry.
    pub bhat: Vec<F>,
    pub cov_ii: F,
}

impl<F: Scalar> ReducedProblem<F> {
    /// Size of the full problem.
    pub fn n(&self) -> usize {
        self.bhat.len() + 1
    }

    /// Reduced coordinate `j` → category index.
    #[inline]
    pub fn full_index(&self, j: usize) -> usize {
        if j < self.target {
            j
        } else {
            j + 1
        }
    }

    /// Category index → reduced coordinate (`None` for the target).
    #[inline]
    pub fn reduced_index(&self, full: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match full.cmp(&self.target) {
            Less => Some(full),
            Equal => None,
            Greater => Some(full - 1),
        }
    }

    /// Reassembles the full covariance matrix.
    pub fn reembed(&self) -> SymmetricMatrix<F> {
        SymmetricMatrix::from_upper(self.n(), |a, b| {
            match (self.reduced_index(a), self.reduced_index(b)) {
                (None, None) => self.cov_ii,
                (None, Some(j)) | (Some(j), None) => self.bhat[j],
                (Some(x), Some(y)) => self.chat.get(x, y),
            }
        })
        .expect("finite entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(rows: &[&[f64]]) -> LogitMatrix<f64> {
        LogitMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn tri_index_is_row_major_upper() {
        let n = 4;
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                assert_eq!(tri_index(n, i, j), k);
                k += 1;
            }
        }
    }

    #[test]
    fn single_row_outer_product() {
        let mut acc = CovAccumulator::new(2);
        acc.accumulate(&lm(&[&[3.0, -2.0]])).unwrap();
        let s = acc.sum_outer();
        assert_eq!(s.as_slice(), &[9.0, -6.0, -6.0, 4.0]);
        assert_eq!(acc.count(), 1);
    }

    #[test]
    fn identity_rows() {
        let mut acc = CovAccumulator::new(2);
        acc.accumulate(&lm(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(acc.sum_outer(), SymmetricMatrix::identity(2));
        assert_eq!(acc.count(), 2);
        let c = acc.finalize().unwrap();
        assert_eq!(c.mat.as_slice(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn merge_matches_sequential_on_exact_data() {
        let a = lm(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]]);
        let b = lm(&[&[4.0, -2.0, 0.25], &[0.0, 1.0, -3.0], &[2.0, 2.0, 2.0]]);
        let mut seq = CovAccumulator::new(3);
        seq.accumulate(&a).unwrap();
        seq.accumulate(&b).unwrap();
        let mut left = CovAccumulator::new(3);
        left.accumulate(&a).unwrap();
        let mut right = CovAccumulator::new(3);
        right.accumulate(&b).unwrap();
        left.merge(&right).unwrap();
        assert_eq!(left.sum_outer(), seq.sum_outer());
        assert_eq!(left.count(), seq.count());
    }

    #[test]
    fn dimension_mismatch() {
        let mut acc = CovAccumulator::<f64>::new(3);
        assert!(matches!(
            acc.accumulate(&lm(&[&[1.0, 2.0]])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn empty_finalize_errors() {
        assert!(matches!(
            CovAccumulator::<f64>::new(2).finalize(),
            Err(Error::EmptyAccumulator)
        ));
    }

    #[test]
    fn rank_one_and_duplicated_dataset() {
        let c = CovMatrix::from_logits(&lm(&[&[1.0, 1.0]])).unwrap();
        assert_eq!(c.mat.as_slice(), &[1.0; 4]);

        let base = lm(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let dup = lm(&[&[1.0, 2.0], &[1.0, 2.0], &[3.0, -1.0], &[3.0, -1.0]]);
        assert_eq!(
            CovMatrix::from_logits(&base).unwrap().mat,
            CovMatrix::from_logits(&dup).unwrap().mat
        );
    }

    #[test]
    fn cross_covariance_cases() {
        let f = lm(&[&[1.0, 2.0, 0.5], &[-1.0, 0.3, 2.0], &[0.7, -0.2, 1.1]]);
        let within = CovMatrix::from_logits(&f).unwrap();
        assert_eq!(cross_covariance(&f, &f, 1).unwrap(), within);

        let doubled = f.with_column(1, &f.column(1).iter().map(|x| 2.0 * x).collect::<Vec<_>>()).unwrap();
        let t = cross_covariance(&f, &doubled, 1).unwrap();
        assert!((t.get(1, 1) - 4.0 * within.get(1, 1)).abs() < 1e-12);
        for j in [0, 2] {
            assert!((t.get(1, j) - 2.0 * within.get(1, j)).abs() < 1e-12);
            assert_eq!(t.get(j, j), within.get(j, j));
        }

        let zeroed = f.with_column(1, &[0.0; 3]).unwrap();
        let t = cross_covariance(&f, &zeroed, 1).unwrap();
        for j in 0..3 {
            assert_eq!(t.get(1, j), 0.0);
            assert_eq!(t.get(j, 1), 0.0);
        }
    }

    #[test]
    fn cross_covariance_shape_mismatch() {
        let f = lm(&[&[1.0, 2.0]]);
        let g = lm(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert!(matches!(cross_covariance(&f, &g, 0), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn reduce_cases() {
        let c = CovMatrix::new(SymmetricMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap(), 1).unwrap();
        let rp = c.reduce(0).unwrap();
        assert_eq!(rp.chat.as_slice(), &[1.0]);
        assert_eq!(rp.bhat, vec![1.0]);
        assert_eq!(rp.cov_ii, 1.0);

        let c = CovMatrix::new(SymmetricMatrix::diagonal(&[2.0, 3.0]), 1).unwrap();
        let rp = c.reduce(0).unwrap();
        assert_eq!((rp.chat.as_slice(), rp.bhat.as_slice(), rp.cov_ii), (&[3.0][..], &[0.0][..], 2.0));

        let m = SymmetricMatrix::new(3, vec![1.0, 0.9, 0.0, 0.9, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let c = CovMatrix::new(m.clone(), 1).unwrap();
        let rp = c.reduce(0).unwrap();
        assert_eq!(rp.chat, SymmetricMatrix::identity(2));
        assert_eq!(rp.bhat, vec![0.9, 0.0]);
        assert_eq!(rp.reembed(), m);
        for t in 0..3 {
            assert_eq!(c.reduce(t).unwrap().reembed(), m);
        }
    }

    #[test]
    fn reduce_too_small() {
        let c = CovMatrix::new(SymmetricMatrix::diagonal(&[2.0]), 1).unwrap();
        assert!(matches!(c.reduce(0), Err(Error::DimTooSmall(1))));
    }

    #[test]
    fn index_map_skips_target() {
        let c = CovMatrix::new(SymmetricMatrix::<f64>::identity(4), 1).unwrap();
        let rp = c.reduce(1).unwrap();
        let fulls: Vec<_> = (0..3).map(|j| rp.full_index(j)).collect();
        assert_eq!(fulls, vec![0, 2, 3]);
        assert_eq!(rp.reduced_index(1), None);
        assert_eq!(rp.reduced_index(3), Some(2));
    }

    #[test]
    fn labels_validated() {
        let m = lm(&[&[1.0, 2.0]]);
        assert!(matches!(m.clone().with_labels(vec![2]), Err(Error::InvalidLabels(_))));
        assert!(m.clone().with_labels(vec![1]).is_ok());
        assert!(matches!(m.with_names(vec!["a".into()]), Err(Error::DimMismatch { .. })));
    }
}
