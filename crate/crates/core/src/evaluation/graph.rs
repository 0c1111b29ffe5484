use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::DependencyReport;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders reports as a Graphviz `digraph`.
///
/// Nodes are categories, ordered by index and labeled with their names.
/// Each coefficient becomes an edge from the target to the contributing
/// category, ordered by `(target, source)`. The signed coefficient is carried
/// in `coef` and `label`; `weight` holds its magnitude since layout engines
/// reject negative weights.
///
/// ```text
/// digraph dependencies {
///   n0 [label="cat"];
///   n1 [label="dog"];
///   n0 -> n1 [coef=5.0000000000000000e-1, label="0.5", weight=5.0000000000000000e-1];
/// }
/// ```
pub fn emit_graph(reports: &[DependencyReport]) -> String {
    let mut nodes: BTreeMap<usize, String> = BTreeMap::new();
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in reports {
        nodes.entry(r.target).or_insert_with(|| r.target_name.clone());
        for c in &r.coefficients {
            nodes.entry(c.index).or_insert_with(|| c.name.clone());
            edges.insert((r.target, c.index), c.theta);
        }
    }
    let touched: BTreeSet<usize> = edges.keys().flat_map(|&(a, b)| [a, b]).collect();
    let mut out = String::from("digraph dependencies {\n");
    for (i, name) in &nodes {
        let _ = write!(out, "  n{i} [label={}", quote(name));
        if !touched.contains(i) {
            out.push_str(", shape=box");
        }
        out.push_str("];\n");
    }
    for ((i, j), w) in &edges {
        let _ = writeln!(
            out,
            "  n{i} -> n{j} [coef={w:.16e}, label={}, weight={:.16e}];",
            quote(&format!("{w}")),
            w.abs()
        );
    }
    out.push_str("}\n");
    out
}
