//! Applying a dependency to logits and measuring what the replacement costs.

mod extension;
mod graph;
mod report;

pub use extension::{
    fit_extension, loss_and_grad, ExtensionConfig, ExtensionFit, ExtensionMatrix,
};
pub use graph::emit_graph;
pub use report::{
    emit_report, from_json, to_canonical_json, Certificates, Coefficient, DependencyReport, MarkovEntry,
    ModelIds, PathPoint, PathReport,
};

use serde::{Deserialize, Serialize};

use crate::covariance::LogitMatrix;
use crate::covlasso::DependencySolution;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Replacement quality for one dependency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean `|f_i − Σ_{j≠i} θ_j f_j|`.
    pub abs_err: f64,
    /// `abs_err / mean|f_i|`, in percent.
    pub rel_err: f64,
    /// Top-1 accuracy with the target logit replaced.
    pub acc: f64,
    /// Top-1 accuracy of the original logits.
    pub ori_acc: f64,
    /// `acc` restricted to samples labeled with the target.
    pub pos_acc: Option<f64>,
    pub ori_pos_acc: Option<f64>,
    pub samples: usize,
    pub pos_samples: usize,
}

fn check_dims<F: Scalar>(l: &LogitMatrix<F>, sol: &DependencySolution<F>) -> Result<()> {
    if l.cols() != sol.n() {
        return Err(Error::DimMismatch {
            expected: sol.n(),
            found: l.cols(),
        });
    }
    Ok(())
}

fn combination<F: Scalar>(l: &LogitMatrix<F>, sol: &DependencySolution<F>, r: usize) -> F {
    let row = l.row(r);
    sol.support.iter().map(|&j| sol.theta[j] * row[j]).sum()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Copies `l` with column `target` replaced by `Σ_{j≠target} θ_j·column_j`.
pub fn replace_logit<F: Scalar>(
    l: &LogitMatrix<F>,
    sol: &DependencySolution<F>,
) -> Result<LogitMatrix<F>> {
    check_dims(l, sol)?;
    let col: Vec<F> = (0..l.rows()).map(|r| combination(l, sol, r)).collect();
    l.with_column(sol.target, &col)
}

/// Prediction error and top-1 accuracy before and after replacement.
pub fn evaluate<F: Scalar>(l: &LogitMatrix<F>, sol: &DependencySolution<F>) -> Result<EvalMetrics> {
    check_dims(l, sol)?;
    let labels = l.labels().ok_or(Error::MissingLabels)?;
    let i = sol.target;
    let mut abs_sum = 0.0;
    let mut target_sum = 0.0;
    let (mut hit, mut ori_hit, mut pos, mut pos_hit, mut ori_pos_hit) = (0usize, 0, 0, 0, 0);
    let mut replaced = vec![F::zero(); l.cols()];
    for r in 0..l.rows() {
        let row = l.row(r);
        let pred = combination(l, sol, r);
        abs_sum += (row[i] - pred).abs().as_f64();
        target_sum += row[i].abs().as_f64();
        replaced.copy_from_slice(row);
        replaced[i] = pred;
        let y = labels[r] as usize;
        let a = argmax(&replaced) == y;
        let o = argmax(row) == y;
        hit += a as usize;
        ori_hit += o as usize;
        if y == i {
            pos += 1;
            pos_hit += a as usize;
            ori_pos_hit += o as usize;
        }
    }
    let n = l.rows() as f64;
    let abs_err = abs_sum / n;
    let mean_target = target_sum / n;
    let rel_err = if mean_target > 0.0 {
        100.0 * abs_err / mean_target
    } else if abs_err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let frac = |k: usize, of: usize| (of > 0).then(|| k as f64 / of as f64);
    Ok(EvalMetrics {
        abs_err,
        rel_err,
        acc: hit as f64 / n,
        ori_acc: ori_hit as f64 / n,
        pos_acc: frac(pos_hit, pos),
        ori_pos_acc: frac(ori_pos_hit, pos),
        samples: l.rows(),
        pos_samples: pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn sol(target: usize, theta: Vec<f64>) -> DependencySolution<f64> {
        let support: BTreeSet<usize> = (0..theta.len())
            .filter(|&j| j != target && theta[j] != 0.0)
            .collect();
        DependencySolution {
            target,
            theta,
            lambda: 1.0,
            pred_error: 0.0,
            support,
            converged: true,
            kkt_max_violation: 0.0,
            dual: None,
            iterations: 0,
        }
    }

    fn dup_logits() -> LogitMatrix<f64> {
        LogitMatrix::from_rows(&[vec![1.0, 1.0, 0.5], vec![-2.0, -2.0, 3.0], vec![0.3, 0.3, 0.1]])
            .unwrap()
            .with_labels(vec![0, 2, 1])
            .unwrap()
    }

    #[test]
    fn duplicate_replacement_is_identity() {
        let l = dup_logits();
        let s = sol(0, vec![-1.0, 1.0, 0.0]);
        assert_eq!(replace_logit(&l, &s).unwrap(), l);
        let m = evaluate(&l, &s).unwrap();
        assert_eq!(m.abs_err, 0.0);
        assert_eq!(m.acc, m.ori_acc);
        assert_eq!(m.pos_samples, 1);
    }

    #[test]
    fn empty_support_zeroes_target() {
        let l = dup_logits();
        let out = replace_logit(&l, &sol(1, vec![0.0, -1.0, 0.0])).unwrap();
        assert_eq!(out.column(1), vec![0.0; 3]);
        assert_eq!(out.column(0), l.column(0));
    }

    #[test]
    fn scaled_combination() {
        let l = LogitMatrix::from_rows(&[vec![2.0, 4.0]]).unwrap();
        let out = replace_logit(&l, &sol(0, vec![-1.0, 0.5])).unwrap();
        assert_eq!(out.row(0), &[2.0, 4.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn metrics_by_hand() {
        let l = LogitMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]])
            .unwrap()
            .with_labels(vec![1, 0])
            .unwrap();
        // predict f_0 ≈ 0.5·f_1: rows become (1, 2) and (0.5, 1)
        let m = evaluate(&l, &sol(0, vec![-1.0, 0.5])).unwrap();
        assert!((m.abs_err - 1.25).abs() < 1e-15);
        assert!((m.rel_err - 62.5).abs() < 1e-12);
        assert_eq!((m.acc, m.ori_acc), (0.5, 1.0));
        assert_eq!((m.pos_acc, m.ori_pos_acc), (Some(0.0), Some(1.0)));
    }

    #[test]
    fn missing_labels_and_dims() {
        let l = LogitMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(evaluate(&l, &sol(0, vec![-1.0, 0.5])), Err(Error::MissingLabels)));
        assert!(matches!(
            replace_logit(&l, &sol(0, vec![-1.0, 0.5, 0.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn pos_metrics_absent_without_target_labels() {
        let l = dup_logits().with_labels(vec![0, 2, 0]).unwrap();
        let m = evaluate(&l, &sol(1, vec![1.0, -1.0, 0.0])).unwrap();
        assert_eq!(m.pos_samples, 0);
        assert!(m.pos_acc.is_none() && m.ori_pos_acc.is_none());
    }
}
