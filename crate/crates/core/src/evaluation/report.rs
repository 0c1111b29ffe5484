use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::EvalMetrics;
use crate::covlasso::DependencySolution;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub index: usize,
    pub name: String,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovEntry {
    pub epsilon: f64,
    pub delta: f64,
    pub expected_sq_error: f64,
    pub holds: bool,
    pub chebyshev_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub kkt_max_violation: f64,
    pub duality_gap: Option<f64>,
    pub dual_feasibility_violation: Option<f64>,
    pub markov: Option<MarkovEntry>,
}

/// Which network produced the logits. `secondary` is set when the target
/// channel was taken from a different network than the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIds {
    pub primary: String,
    pub secondary: Option<String>,
}

/// Self-describing record of one solved dependency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyReport {
    pub target: usize,
    pub target_name: String,
    pub lambda: f64,
    pub coefficients: Vec<Coefficient>,
    pub pred_error: f64,
    pub cov_ii: f64,
    pub converged: bool,
    pub iterations: usize,
    pub certificates: Certificates,
    pub metrics: Option<EvalMetrics>,
    pub models: Option<ModelIds>,
}

impl DependencyReport {
    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub support: Vec<usize>,
    pub support_size: usize,
    pub pred_error: f64,
    pub converged: bool,
    pub kkt_max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub target: usize,
    pub lambda_max: f64,
    pub points: Vec<PathPoint>,
    /// Prediction error never increased as `λ` decreased.
    pub monotone: bool,
    pub slope_bound_passed: Option<bool>,
    pub slope_bound_min_margin: Option<f64>,
}

impl PathReport {
    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json(text)
    }
}

fn name_of(names: Option<&[String]>, j: usize) -> String {
    names
        .and_then(|n| n.get(j).cloned())
        .unwrap_or_else(|| j.to_string())
}

/// Builds the report for `sol`. Missing names fall back to indices.
pub fn emit_report<F: Scalar>(
    sol: &DependencySolution<F>,
    cov_ii: F,
    names: Option<&[String]>,
    metrics: Option<EvalMetrics>,
) -> DependencyReport {
    DependencyReport {
        target: sol.target,
        target_name: name_of(names, sol.target),
        lambda: sol.lambda.as_f64(),
        coefficients: sol
            .coefficients()
            .into_iter()
            .map(|(index, t)| Coefficient {
                index,
                name: name_of(names, index),
                theta: t.as_f64(),
            })
            .collect(),
        pred_error: sol.pred_error.as_f64(),
        cov_ii: cov_ii.as_f64(),
        converged: sol.converged,
        iterations: sol.iterations,
        certificates: Certificates {
            kkt_max_violation: sol.kkt_max_violation.as_f64(),
            duality_gap: sol.dual.as_ref().map(|d| d.gap.as_f64()),
            dual_feasibility_violation: sol.dual.as_ref().map(|d| d.feasibility_violation.as_f64()),
            markov: None,
        },
        metrics,
        models: None,
    }
}

/// Pretty JSON whose floats are always written in scientific notation with
/// 17 significant digits, which round-trips every `f64` exactly.
struct CanonicalFormatter {
    pretty: PrettyFormatter<'static>,
}

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

/// Deterministic JSON: keys sorted, fixed float formatting, trailing
/// newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    // Going through `Value` sorts every object's keys.
    let tree = serde_json::to_value(value).expect("report types serialize");
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        CanonicalFormatter {
            pretty: PrettyFormatter::with_indent(b"  "),
        },
    );
    tree.serialize(&mut ser).expect("writing to memory");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("report: {e}")))
}
