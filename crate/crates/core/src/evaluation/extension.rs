use crate::covariance::{CovMatrix, LogitMatrix};
use crate::error::{Error, Result};
use crate::linalg::eigendecompose;
use crate::scalar::Scalar;

/// Linear map from `n1` base logits to `n2` new-category logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionMatrix<F> {
    pub base_n1: usize,
    pub new_n2: usize,
    /// Row-major `n1 × n2`.
    pub theta_big: Vec<F>,
}

impl<F: Scalar> ExtensionMatrix<F> {
    pub fn zeros(base_n1: usize, new_n2: usize) -> Self {
        Self {
            base_n1,
            new_n2,
            theta_big: vec![F::zero(); base_n1 * new_n2],
        }
    }

    pub fn get(&self, a: usize, b: usize) -> F {
        self.theta_big[a * self.new_n2 + b]
    }

    /// Logits of the new categories for one base row.
    pub fn project(&self, base_row: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.new_n2];
        for (a, &f) in base_row.iter().enumerate() {
            let coeffs = &self.theta_big[a * self.new_n2..(a + 1) * self.new_n2];
            for (o, &t) in out.iter_mut().zip(coeffs) {
                *o += f * t;
            }
        }
        out
    }

    /// `[f_base, f_base·Θ]` for every sample; labels are carried over.
    pub fn apply(&self, base: &LogitMatrix<F>) -> Result<LogitMatrix<F>> {
        if base.cols() != self.base_n1 {
            return Err(Error::DimMismatch {
                expected: self.base_n1,
                found: base.cols(),
            });
        }
        let total = self.base_n1 + self.new_n2;
        let mut data = Vec::with_capacity(base.rows() * total);
        for r in 0..base.rows() {
            data.extend_from_slice(base.row(r));
            data.extend(self.project(base.row(r)));
        }
        let out = LogitMatrix::new(base.rows(), total, data)?;
        match base.labels() {
            Some(l) => out.with_labels(l.to_vec()),
            None => Ok(out),
        }
    }
}

/// Gradient-descent settings. The effective step is `step / L`, with `L`
/// the Lipschitz constant of the loss gradient in `Θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionConfig {
    pub step: f64,
    pub epochs: usize,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            epochs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionFit<F> {
    pub matrix: ExtensionMatrix<F>,
    pub loss: F,
    /// Loss at `Θ = 0` followed by the loss after every epoch.
    pub history: Vec<F>,
    /// Whether the loss never increased.
    pub monotone: bool,
    pub step_size: F,
}

fn labels_for<F: Scalar>(base: &LogitMatrix<F>, n2: usize) -> Result<&[u32]> {
    let labels = base.labels().ok_or(Error::MissingLabels)?;
    let total = base.cols() + n2;
    if let Some(&bad) = labels.iter().find(|&&y| y as usize >= total) {
        return Err(Error::InvalidLabels(format!(
            "label {bad} out of range for {total} categories"
        )));
    }
    Ok(labels)
}

/// Mean softmax cross-entropy of `[f, fΘ]` and its gradient with respect
/// to `Θ` (row-major, same layout as `theta_big`).
pub fn loss_and_grad<F: Scalar>(
    base: &LogitMatrix<F>,
    labels: &[u32],
    ext: &ExtensionMatrix<F>,
) -> Result<(F, Vec<F>)> {
    let (n1, n2) = (ext.base_n1, ext.new_n2);
    if base.cols() != n1 {
        return Err(Error::DimMismatch {
            expected: n1,
            found: base.cols(),
        });
    }
    if labels.len() != base.rows() {
        return Err(Error::DimMismatch {
            expected: base.rows(),
            found: labels.len(),
        });
    }
    let mut loss = F::zero();
    let mut grad = vec![F::zero(); n1 * n2];
    let mut z = vec![F::zero(); n1 + n2];
    for (r, &y) in labels.iter().enumerate() {
        let f = base.row(r);
        z[..n1].copy_from_slice(f);
        z[n1..].copy_from_slice(&ext.project(f));
        let m = z.iter().copied().fold(F::neg_infinity(), F::max);
        let denom: F = z.iter().map(|&v| (v - m).exp()).sum();
        let y = y as usize;
        loss += denom.ln() + m - z[y];
        for b in 0..n2 {
            let mut d = (z[n1 + b] - m).exp() / denom;
            if y == n1 + b {
                d -= F::one();
            }
            for (a, &fa) in f.iter().enumerate() {
                grad[a * n2 + b] += fa * d;
            }
        }
    }
    let n = F::from_usize(base.rows()).expect("row count fits");
    for g in &mut grad {
        *g /= n;
    }
    Ok((loss / n, grad))
}

/// Fits `Θ` by full-batch gradient descent from zero, keeping the base
/// logits fixed. `base` must carry labels over `n1 + n2` categories.
pub fn fit_extension<F: Scalar>(
    base: &LogitMatrix<F>,
    n2: usize,
    config: &ExtensionConfig,
) -> Result<ExtensionFit<F>> {
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {}", config.step)));
    }
    let labels = labels_for(base, n2)?;
    let n1 = base.cols();
    let mut ext = ExtensionMatrix::zeros(n1, n2);
    let (mut loss, mut grad) = loss_and_grad(base, labels, &ext)?;
    let mut history = vec![loss];
    if n2 == 0 {
        return Ok(ExtensionFit {
            matrix: ext,
            loss,
            history,
            monotone: true,
            step_size: F::zero(),
        });
    }

    // Each sample's logit Hessian is bounded by I/2, so the gradient in Θ is
    // Lipschitz with constant λ_max(E[f fᵀ]) / 2.
    let second_moment = CovMatrix::from_logits(base)?;
    let lipschitz = eigendecompose(&second_moment.mat)?.max_eigenvalue() * F::half();
    let step = if lipschitz > F::zero() {
        F::lit(config.step) / lipschitz
    } else {
        F::lit(config.step)
    };

    let slack = F::tol(1e-12);
    let mut monotone = true;
    for epoch in 0..config.epochs {
        for (t, g) in ext.theta_big.iter_mut().zip(&grad) {
            *t -= step * *g;
        }
        let (next, g) = loss_and_grad(base, labels, &ext)?;
        if !next.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if next > loss + slack * loss.abs().max(F::one()) {
            monotone = false;
        }
        loss = next;
        grad = g;
        history.push(loss);
    }
    Ok(ExtensionFit {
        matrix: ext,
        loss,
        history,
        monotone,
        step_size: step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LogitMatrix<f64> {
        LogitMatrix::from_rows(&[
            vec![1.0, -0.5],
            vec![-0.2, 2.0],
            vec![0.7, 0.1],
            vec![-1.0, -1.0],
        ])
        .unwrap()
        .with_extended_labels(vec![2, 1, 0, 2], 3)
        .unwrap()
    }

    #[test]
    fn no_new_categories() {
        let b = toy().with_labels(vec![0, 1, 0, 1]).unwrap();
        let fit = fit_extension(&b, 0, &ExtensionConfig::default()).unwrap();
        assert!(fit.matrix.theta_big.is_empty());
        assert_eq!(fit.matrix.apply(&b).unwrap(), b);
    }

    #[test]
    fn zero_theta_loss() {
        let b = toy();
        let ext = ExtensionMatrix::zeros(2, 1);
        let (loss, _) = loss_and_grad(&b, b.labels().unwrap(), &ext).unwrap();
        let oracle: f64 = (0..4)
            .map(|r| {
                let z = [b.get(r, 0), b.get(r, 1), 0.0];
                let y = b.labels().unwrap()[r] as usize;
                z.iter().map(|v| v.exp()).sum::<f64>().ln() - z[y]
            })
            .sum::<f64>()
            / 4.0;
        assert!((loss - oracle).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let b = toy().with_extended_labels(vec![2, 3, 0, 2], 4).unwrap();
        let labels = b.labels().unwrap();
        let mut ext = ExtensionMatrix::zeros(2, 2);
        ext.theta_big = vec![0.3, -0.7, 1.1, 0.2];
        let (_, g) = loss_and_grad(&b, labels, &ext).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut p = ext.clone();
            p.theta_big[k] += h;
            let mut m = ext.clone();
            m.theta_big[k] -= h;
            let fd = (loss_and_grad(&b, labels, &p).unwrap().0 - loss_and_grad(&b, labels, &m).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn loss_decreases() {
        let fit = fit_extension(&toy(), 1, &ExtensionConfig { step: 0.5, epochs: 50 }).unwrap();
        assert!(fit.monotone);
        assert!(fit.loss < fit.history[0]);
    }

    #[test]
    fn label_errors() {
        let plain = LogitMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            fit_extension(&plain, 1, &ExtensionConfig::default()),
            Err(Error::MissingLabels)
        ));
        let b = toy().with_extended_labels(vec![0, 1, 5, 2], 6).unwrap();
        assert!(matches!(
            fit_extension(&b, 1, &ExtensionConfig::default()),
            Err(Error::InvalidLabels(_))
        ));
    }
}
