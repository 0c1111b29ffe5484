//! Synthetic logits with planted sparse dependencies.
//!
//! # Generator
//!
//! All randomness comes from SplitMix64:
//!
//! ```text
//! state ← state + 0x9E3779B97F4A7C15
//! z ← (state ⊕ (state ≫ 30)) · 0xBF58476D1CE4E5B9
//! z ← (z ⊕ (z ≫ 27)) · 0x94D049BB133111EB
//! return z ⊕ (z ≫ 31)
//! ```
//!
//! with wrapping arithmetic. A uniform in `[0, 1)` is `(next ≫ 11)·2⁻⁵³`.
//!
//! Each (matrix, column) pair draws from its own stream, seeded with
//! `mix(mix(seed ⊕ tag) ⊕ column)` where `mix(x)` is the first output of a
//! generator started at state `x`. Tags: 1 mixing weights (column = category),
//! 2 latent factors (column = latent dimension), 3 planted noise (column 0),
//! 4 extension weights (column = new category).
//!
//! Normals use the Marsaglia polar method: draw `u = 2U₁ − 1` then
//! `v = 2U₂ − 1`, reject unless `0 < s = u² + v² < 1`, and return
//! `u·m` followed by `v·m` with `m = √(−2 ln s / s)`. The second value is
//! cached and served by the next call.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::covariance::LogitMatrix;
use crate::covlasso::DependencySolution;
use crate::error::{Error, Result};
use crate::evaluation::argmax;
use crate::scalar::Scalar;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub const TAG_WEIGHTS: u64 = 1;
pub const TAG_LATENT: u64 = 2;
pub const TAG_NOISE: u64 = 3;
pub const TAG_EXTENSION: u64 = 4;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare: None,
        }
    }

    /// Independent stream for column `column` of the matrix tagged `tag`.
    pub fn stream(seed: u64, tag: u64, column: u64) -> Self {
        let mix = |x: u64| SplitMix64::new(x).next_u64();
        Self::new(mix(mix(seed ^ tag) ^ column))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }
}

/// A planted dependency `f_target = Σ_j θ*_j f_j + σ·noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub target: usize,
    pub coefficients: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Categories.
    pub n: usize,
    pub samples: usize,
    pub latent_rank: usize,
    pub noise_sigma: f64,
    pub planted: Option<Planted>,
    pub seed: u64,
}

/// Ground truth of a planted instance; written as the sidecar of a
/// generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub target: usize,
    pub support: BTreeSet<usize>,
    pub coefficients: BTreeMap<usize, f64>,
    pub noise_sigma: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n == 0 || self.samples == 0 {
            return bad(format!("empty shape {}x{}", self.samples, self.n));
        }
        if self.latent_rank == 0 || self.latent_rank > self.n {
            return bad(format!("latent rank {} outside [1, {}]", self.latent_rank, self.n));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be finite and nonnegative", self.noise_sigma));
        }
        if let Some(p) = &self.planted {
            if p.target >= self.n {
                return bad(format!("planted target {} of {}", p.target, self.n));
            }
            for (&j, &t) in &p.coefficients {
                if j >= self.n {
                    return bad(format!("planted index {j} of {}", self.n));
                }
                if j == p.target {
                    return bad(format!("target {j} cannot explain itself"));
                }
                if t == 0.0 || !t.is_finite() {
                    return bad(format!("planted coefficient {t} for {j} must be finite and nonzero"));
                }
            }
        }
        Ok(())
    }
}

/// Standard normal `rows × cols` matrix, column `c` drawn from stream
/// `(tag, c)`. Stored row-major.
fn normal_matrix(seed: u64, tag: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for c in 0..cols {
        let mut rng = SplitMix64::stream(seed, tag, c as u64);
        for r in 0..rows {
            out[r * cols + c] = rng.next_normal();
        }
    }
    out
}

/// Draws `Z` (`samples × r`) and `W` (`n × r`, scaled by `1/√r`) and returns
/// `Z·Wᵀ` row-major.
fn latent_logits(seed: u64, samples: usize, n: usize, r: usize) -> Vec<f64> {
    let z = normal_matrix(seed, TAG_LATENT, samples, r);
    let mut w = vec![0.0; n * r];
    let scale = 1.0 / (r as f64).sqrt();
    for j in 0..n {
        let mut rng = SplitMix64::stream(seed, TAG_WEIGHTS, j as u64);
        for k in 0..r {
            w[j * r + k] = scale * rng.next_normal();
        }
    }
    let mut out = vec![0.0; samples * n];
    for s in 0..samples {
        let zs = &z[s * r..(s + 1) * r];
        for j in 0..n {
            out[s * n + j] = zs.iter().zip(&w[j * r..(j + 1) * r]).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// Generates logits and, if a dependency is planted, its ground truth.
/// Labels are the argmax of the logits before noise is added.
pub fn generate(spec: &SyntheticSpec) -> Result<(LogitMatrix<f64>, Option<PlantedTruth>)> {
    spec.validate()?;
    let (n, samples) = (spec.n, spec.samples);
    let mut data = latent_logits(spec.seed, samples, n, spec.latent_rank);
    let mut noise = SplitMix64::stream(spec.seed, TAG_NOISE, 0);
    let mut labels = Vec::with_capacity(samples);
    for s in 0..samples {
        let row = &mut data[s * n..(s + 1) * n];
        if let Some(p) = &spec.planted {
            row[p.target] = p.coefficients.iter().map(|(&j, &t)| t * row[j]).sum();
        }
        labels.push(argmax(row) as u32);
        if let Some(p) = &spec.planted {
            if spec.noise_sigma > 0.0 {
                row[p.target] += spec.noise_sigma * noise.next_normal();
            }
        }
    }
    let m = LogitMatrix::new(samples, n, data)?.with_labels(labels)?;
    let truth = spec.planted.as_ref().map(|p| PlantedTruth {
        target: p.target,
        support: p.coefficients.keys().copied().collect(),
        coefficients: p.coefficients.clone(),
        noise_sigma: spec.noise_sigma,
    });
    Ok((m, truth))
}

/// Precision and recall of a recovered support. Empty recovered support has
/// precision 1; empty truth has recall 1.
pub fn verify_recovery<F: Scalar>(
    sol: &DependencySolution<F>,
    truth: &PlantedTruth,
) -> Result<(f64, f64)> {
    if sol.target != truth.target {
        return Err(Error::InvalidInput(format!(
            "solution target {} differs from planted target {}",
            sol.target, truth.target
        )));
    }
    if let Some(&j) = truth.support.iter().find(|&&j| j >= sol.n()) {
        return Err(Error::InvalidInput(format!(
            "planted index {j} outside solution of size {}",
            sol.n()
        )));
    }
    let hits = sol.support.intersection(&truth.support).count() as f64;
    let precision = if sol.support.is_empty() {
        1.0
    } else {
        hits / sol.support.len() as f64
    };
    let recall = if truth.support.is_empty() {
        1.0
    } else {
        hits / truth.support.len() as f64
    };
    Ok((precision, recall))
}

/// Base logits for extension fitting whose labels also range over new
/// categories defined as linear maps of the base logits.
///
/// `new_maps[b]` lists `(base index, coefficient)` pairs for new category
/// `n1 + b`. When `new_maps` is empty, `n2` random maps are drawn from stream
/// tag 4 instead. Labels are the argmax over all `n1 + n2` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionDataset {
    pub base: LogitMatrix<f64>,
    /// The new-category logits implied by the maps, row-major `N × n2`.
    pub new_logits: Vec<f64>,
    pub n2: usize,
    /// Row-major `n1 × n2` map used to build the new categories.
    pub true_map: Vec<f64>,
}

pub fn extension_dataset(
    spec: &SyntheticSpec,
    n2: usize,
    new_maps: &[Vec<(usize, f64)>],
) -> Result<ExtensionDataset> {
    let (base, _) = generate(&SyntheticSpec {
        planted: None,
        ..spec.clone()
    })?;
    let n1 = spec.n;
    let mut true_map = vec![0.0; n1 * n2];
    if new_maps.is_empty() {
        let scale = 1.0 / (n1 as f64).sqrt();
        for b in 0..n2 {
            let mut rng = SplitMix64::stream(spec.seed, TAG_EXTENSION, b as u64);
            for a in 0..n1 {
                true_map[a * n2 + b] = scale * rng.next_normal();
            }
        }
    } else {
        if new_maps.len() != n2 {
            return Err(Error::InvalidSpec(format!(
                "{} maps given for {n2} new categories",
                new_maps.len()
            )));
        }
        for (b, map) in new_maps.iter().enumerate() {
            for &(a, t) in map {
                if a >= n1 {
                    return Err(Error::InvalidSpec(format!("base index {a} of {n1}")));
                }
                true_map[a * n2 + b] += t;
            }
        }
    }
    let samples = base.rows();
    let mut new_logits = vec![0.0; samples * n2];
    let mut labels = Vec::with_capacity(samples);
    let mut all = vec![0.0; n1 + n2];
    for s in 0..samples {
        let row = base.row(s);
        for b in 0..n2 {
            new_logits[s * n2 + b] = (0..n1).map(|a| row[a] * true_map[a * n2 + b]).sum();
        }
        all[..n1].copy_from_slice(row);
        all[n1..].copy_from_slice(&new_logits[s * n2..(s + 1) * n2]);
        labels.push(argmax(&all) as u32);
    }
    let base = LogitMatrix::new(samples, n1, base.as_slice().to_vec())?
        .with_extended_labels(labels, n1 + n2)?;
    Ok(ExtensionDataset {
        base,
        new_logits,
        n2,
        true_map,
    })
}
