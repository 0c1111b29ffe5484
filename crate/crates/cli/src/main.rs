//! `ndep`: find and apply sparse linear dependencies among classifier
//! logits.
//!
//! Every command prints a `key=value` summary on standard output.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 2    | usage error, unreadable or malformed input           |
//! | 3    | the solver did not converge (outputs still written)  |
//! | 4    | numerical degeneracy: eigenvalue flooring with `--strict`, degenerate target, divergence |
//!
//! `ND_EIG_FLOOR` overrides the relative eigenvalue floor (default `1e-12`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ndep::analysis::{certify_dependency, redundancy_with_floor, verify_slope_bound_with, Screener};
use ndep::covariance::{cross_covariance, CovMatrix, LogitMatrix};
use ndep::covlasso::{
    auto_grid, embed, lambda_max, solution_path, solve, DependencySolution, SUPPORT_THRESHOLD,
};
use ndep::evaluation::{
    emit_graph, emit_report, evaluate, fit_extension, to_canonical_json, DependencyReport,
    ExtensionConfig, MarkovEntry, ModelIds, PathPoint, PathReport,
};
use ndep::format::{load_cov, load_logits, save_cov, save_logits, write_csv};
use ndep::linalg::{eigendecompose, SqrtFactor, DEFAULT_RELATIVE_FLOOR};
use ndep::synthetic::{generate, Planted, SyntheticSpec};
use ndep::Error;

#[derive(Parser)]
#[command(name = "ndep", version, about = "Sparse linear dependencies among classifier logits")]
struct Cli {
    /// Treat eigenvalue flooring as an error (exit code 4).
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accumulate the second-moment matrix of a logit file.
    Cov(CovArgs),
    /// Solve for the dependency of one category at one penalty.
    Solve(SolveArgs),
    /// Sweep a penalty grid with warm starts.
    Path(PathArgs),
    /// Report categories that can be ruled out before solving.
    Screen(ScreenArgs),
    /// Minimum achievable prediction error per category.
    Redundancy(RedundancyArgs),
    /// Evaluate a solved dependency on labeled logits.
    Eval(EvalArgs),
    /// Fit a linear map from base logits to new categories.
    FitExtension(FitExtensionArgs),
    /// Generate synthetic logits, optionally with a planted dependency.
    Synth(SynthArgs),
    /// Render dependency reports as a Graphviz digraph.
    Graph(GraphArgs),
    /// Second-moment matrix with one channel taken from another network.
    CrossCov(CrossCovArgs),
}

#[derive(Args)]
struct CovArgs {
    /// Logit file (binary, or CSV when the name ends in `.csv`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// CSV column holding integer labels.
    #[arg(long)]
    labels_col: Option<usize>,
    /// Worker threads for accumulation.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    cov: PathBuf,
    #[arg(long)]
    target: usize,
    /// Penalty. Note `λ` here multiplies `‖θ‖₁` directly; a least-squares
    /// lasso penalty `α` with objective `‖·‖²/(2N) + α‖θ‖₁` corresponds to
    /// `λ = 2α`.
    #[arg(long)]
    lambda: f64,
    /// Labeled logits to evaluate the dependency on.
    #[arg(long)]
    logits: Option<PathBuf>,
    #[arg(long)]
    labels_col: Option<usize>,
    /// Tolerance for a probability certificate `Pr(|residual| < ε) > 1 − δ`.
    #[arg(long, requires = "delta")]
    epsilon: Option<f64>,
    #[arg(long, requires = "epsilon")]
    delta: Option<f64>,
    /// Model identifier recorded in the report.
    #[arg(long)]
    model: Option<String>,
    /// Identifier of the model that supplied the target channel.
    #[arg(long)]
    target_model: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PathArgs {
    #[arg(long)]
    cov: PathBuf,
    #[arg(long)]
    target: usize,
    /// Comma-separated, non-increasing penalties.
    #[arg(long, conflicts_with = "auto_grid", required_unless_present = "auto_grid")]
    lambda_grid: Option<String>,
    /// Number of log-spaced penalties from `λ_max` down to `λ_max/1000`.
    #[arg(long)]
    auto_grid: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScreenArgs {
    #[arg(long)]
    cov: PathBuf,
    #[arg(long)]
    target: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RedundancyArgs {
    #[arg(long)]
    cov: PathBuf,
    /// Single category; all categories when omitted.
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    logits: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    labels_col: Option<usize>,
    /// Where to write the report with metrics attached.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitExtensionArgs {
    /// Base logits whose labels also cover the new categories.
    #[arg(long)]
    logits: PathBuf,
    #[arg(long)]
    labels_col: Option<usize>,
    /// Number of new categories.
    #[arg(long)]
    n2: usize,
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    samples: usize,
    /// Latent rank; defaults to `n`.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Category overwritten by the planted combination.
    #[arg(long, requires = "plant")]
    target: Option<usize>,
    /// Planted coefficients as `j:θ,k:θ`.
    #[arg(long, requires = "target")]
    plant: Option<String>,
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth sidecar (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write CSV instead of the binary format.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct GraphArgs {
    /// Dependency reports to merge.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CrossCovArgs {
    #[arg(long)]
    f: PathBuf,
    #[arg(long)]
    g: PathBuf,
    #[arg(long)]
    target: usize,
    #[arg(long)]
    labels_col: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    NotConverged(String),
    Degenerate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Degenerate(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::NotConverged(m) | Failure::Degenerate(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NotConverged { .. } => Failure::NotConverged(msg),
            Error::SingularMatrix(_) | Error::DegenerateTarget { .. } | Error::Diverged { .. } => {
                Failure::Degenerate(msg)
            }
            _ => Failure::Usage(msg),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    strict: bool,
    floor: f64,
}

impl Ctx {
    fn check_floor(&self, floored: bool, what: &str) -> Outcome {
        if floored && self.strict {
            return Err(Failure::Degenerate(format!(
                "{what} has eigenvalues below the relative floor {}",
                self.floor
            )));
        }
        Ok(())
    }

    fn sqrt_factor(&self, m: &ndep::SymmetricMatrix<f64>) -> Result<SqrtFactor<f64>, Failure> {
        let eig = eigendecompose(m)?;
        let floor = eig.relative_floor(self.floor);
        Ok(SqrtFactor::new(eig, floor)?)
    }
}

fn kv(key: &str, value: impl Display) {
    println!("{key}={value}");
}

/// Floats in summaries use the shortest round-trip form, switching to
/// exponent notation for very large or small magnitudes.
fn kf(key: &str, value: f64) {
    println!("{key}={value:?}");
}

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: ndep::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        if let Failure::Usage(m) = &mut f {
            *m = format!("{}: {m}", path.display());
        }
        f
    })
}

fn check_target(target: usize, n: usize) -> Outcome {
    if target >= n {
        return Err(Failure::Usage(format!("target {target} out of range for {n} categories")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Outcome {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Failure::Usage(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn cmd_cov(ctx: &Ctx, a: &CovArgs) -> Outcome {
    let logits = with_path(&a.input, load_logits(&a.input, a.labels_col))?;
    let cov = CovMatrix::from_logits_sharded(&logits, a.threads.max(1))?;
    with_path(&a.output, save_cov(&a.output, &cov))?;
    let eig = eigendecompose(&cov.mat)?;
    let floored = eig.needs_floor(eig.relative_floor(ctx.floor));
    kv("n", cov.dim());
    kv("samples", cov.sample_count);
    kf("min_eigenvalue", eig.min_eigenvalue());
    kf("max_eigenvalue", eig.max_eigenvalue());
    kv("floored", floored);
    ctx.check_floor(floored, "covariance")
}

fn cmd_solve(ctx: &Ctx, a: &SolveArgs) -> Outcome {
    check_lambda(a.lambda)?;
    let cov = with_path(&a.cov, load_cov(&a.cov))?;
    check_target(a.target, cov.dim())?;
    let rp = cov.reduce(a.target)?;
    let factor = ctx.sqrt_factor(&rp.chat)?;
    ctx.check_floor(factor.floored(), "reduced covariance")?;
    let rs = solve(&rp, a.lambda, None)?;
    let sol = embed(&rs, &rp)?.with_dual(&rp, &factor)?;

    let mut names = None;
    let mut metrics = None;
    if let Some(path) = &a.logits {
        let logits = with_path(path, load_logits(path, a.labels_col))?;
        if logits.cols() != cov.dim() {
            return Err(Failure::Usage(format!(
                "{}: {} categories, covariance has {}",
                path.display(),
                logits.cols(),
                cov.dim()
            )));
        }
        if logits.labels().is_some() {
            metrics = Some(evaluate(&logits, &sol)?);
        }
        names = logits.names().map(<[String]>::to_vec);
    }
    let mut report = emit_report(&sol, rp.cov_ii, names.as_deref(), metrics);
    if let (Some(eps), Some(delta)) = (a.epsilon, a.delta) {
        let c = certify_dependency(&sol, eps, delta)?;
        report.certificates.markov = Some(MarkovEntry {
            epsilon: c.epsilon,
            delta: c.delta,
            expected_sq_error: c.expected_sq_error,
            holds: c.holds,
            chebyshev_holds: c.chebyshev_holds,
        });
    }
    if let Some(primary) = &a.model {
        report.models = Some(ModelIds {
            primary: primary.clone(),
            secondary: a.target_model.clone(),
        });
    }
    write(&a.output, report.to_json())?;

    kv("target", a.target);
    kf("lambda", a.lambda);
    kf("lambda_max", lambda_max(&rp));
    kv("support_size", sol.support.len());
    kv("support", join(&sol.support));
    kf("pred_error", sol.pred_error);
    kv("converged", sol.converged);
    kv("iterations", sol.iterations);
    kf("kkt_max_violation", sol.kkt_max_violation);
    if let Some(d) = &sol.dual {
        kf("duality_gap", d.gap);
    }
    if let Some(m) = &report.metrics {
        print_metrics(m);
    }
    if let Some(m) = &report.certificates.markov {
        kv("markov_holds", m.holds);
        kv("chebyshev_holds", m.chebyshev_holds);
    }
    if !sol.converged {
        return Err(Failure::NotConverged(format!(
            "solver stopped after {} sweeps without meeting the optimality tolerance",
            sol.iterations
        )));
    }
    Ok(())
}

fn print_metrics(m: &ndep::evaluation::EvalMetrics) {
    kf("abs_err", m.abs_err);
    kf("rel_err", m.rel_err);
    kf("acc", m.acc);
    kf("ori_acc", m.ori_acc);
    if let (Some(p), Some(o)) = (m.pos_acc, m.ori_pos_acc) {
        kf("pos_acc", p);
        kf("ori_pos_acc", o);
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad lambda {s:?} in grid")))
        })
        .collect()
}

fn cmd_path(ctx: &Ctx, a: &PathArgs) -> Outcome {
    let cov = with_path(&a.cov, load_cov(&a.cov))?;
    check_target(a.target, cov.dim())?;
    let rp = cov.reduce(a.target)?;
    let lmax = lambda_max(&rp);
    let grid = match (&a.lambda_grid, a.auto_grid) {
        (Some(g), _) => parse_grid(g)?,
        (None, Some(0)) => return Err(Failure::Usage("auto grid needs at least one point".into())),
        (None, Some(k)) => {
            if !(lmax > 0.0) {
                return Err(Failure::Usage("lambda_max is zero; no automatic grid exists".into()));
            }
            auto_grid(lmax, k)
        }
        (None, None) => unreachable!("clap requires one grid option"),
    };
    let path = solution_path(&rp, &grid)?;
    let factor = ctx.sqrt_factor(&rp.chat)?;
    ctx.check_floor(factor.floored(), "reduced covariance")?;

    let within = grid.iter().all(|&l| l <= lmax * (1.0 + 1e-12));
    let slope = if path.all_converged() && within && grid.len() > 1 {
        let screener = Screener::with_factor(&rp, &factor)?;
        Some(verify_slope_bound_with(&rp, &path, &screener)?)
    } else {
        None
    };
    let points: Vec<PathPoint> = path
        .solutions
        .iter()
        .zip(&path.errors)
        .map(|(s, &e)| {
            let support: Vec<usize> = s
                .theta_hat
                .iter()
                .enumerate()
                .filter(|(_, t)| t.abs() > SUPPORT_THRESHOLD)
                .map(|(j, _)| rp.full_index(j))
                .collect();
            let kkt = embed(s, &rp).map(|d| d.kkt_max_violation).unwrap_or(f64::NAN);
            PathPoint {
                lambda: s.lambda,
                support_size: support.len(),
                support,
                pred_error: e,
                converged: s.converged,
                kkt_max_violation: kkt,
            }
        })
        .collect();
    let min_margin = slope
        .as_ref()
        .map(|v| v.pairs.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min));
    let report = PathReport {
        target: a.target,
        lambda_max: lmax,
        points,
        monotone: path.monotone,
        slope_bound_passed: slope.as_ref().map(|v| v.passed),
        slope_bound_min_margin: min_margin.filter(|m| m.is_finite()),
    };
    write(&a.output, report.to_json())?;

    kv("target", a.target);
    kf("lambda_max", lmax);
    kv("points", report.points.len());
    kv("errors", join(path.errors.iter().map(|e| format!("{e:?}"))));
    kv("support_sizes", join(report.points.iter().map(|p| p.support_size)));
    kv("monotone", path.monotone);
    match &slope {
        Some(v) => kv("slope_bound", if v.passed { "pass" } else { "fail" }),
        None => kv("slope_bound", "skipped"),
    }
    if !path.all_converged() {
        return Err(Failure::NotConverged("some path points did not converge".into()));
    }
    Ok(())
}

fn cmd_screen(ctx: &Ctx, a: &ScreenArgs) -> Outcome {
    check_lambda(a.lambda)?;
    let cov = with_path(&a.cov, load_cov(&a.cov))?;
    check_target(a.target, cov.dim())?;
    let rp = cov.reduce(a.target)?;
    let factor = ctx.sqrt_factor(&rp.chat)?;
    ctx.check_floor(factor.floored(), "reduced covariance")?;
    let report = Screener::with_factor(&rp, &factor)?.at(a.lambda)?;

    if let Some(out) = &a.output {
        let entries: Vec<Value> = report
            .per_j
            .iter()
            .map(|e| {
                json!({
                    "index": e.index,
                    "cov_abs": e.cov_abs,
                    "ratio": e.ratio,
                    "theorem3_rhs": e.theorem3_rhs,
                    "theorem3_zero": e.theorem3_zero,
                    "conjecture_zero": e.conjecture_zero,
                })
            })
            .collect();
        let doc = json!({
            "target": report.target,
            "lambda": report.lambda,
            "lambda_max": report.lambda_max,
            "ainv_b_norm": report.ainv_b_norm,
            "conservative": report.conservative,
            "theorem3_zero": report.theorem3_zero,
            "conjecture_zero": report.conjecture_zero,
            "entries": entries,
        });
        write(out, to_canonical_json(&doc))?;
    }
    kv("target", a.target);
    kf("lambda", a.lambda);
    kf("lambda_max", report.lambda_max);
    kv("theorem3_zero", join(&report.theorem3_zero));
    kv("conjecture_zero", join(&report.conjecture_zero));
    kv("conservative", report.conservative);
    Ok(())
}

fn cmd_redundancy(ctx: &Ctx, a: &RedundancyArgs) -> Outcome {
    let cov = with_path(&a.cov, load_cov(&a.cov))?;
    let targets: Vec<usize> = match a.target {
        Some(t) => {
            check_target(t, cov.dim())?;
            vec![t]
        }
        None => (0..cov.dim()).collect(),
    };
    let mut rows = Vec::new();
    let mut any_floored = false;
    for &t in &targets {
        let r = redundancy_with_floor(&cov, t, ctx.floor)?;
        any_floored |= r.floored;
        println!(
            "target={t} err0={:?} log_det_ratio={:?} eigen_sum={:?} relative={:?} floored={}",
            r.err0, r.log_det_ratio, r.eigen_sum, r.relative, r.floored
        );
        rows.push(json!({
            "target": t,
            "err0": r.err0,
            "log_det_ratio": r.log_det_ratio,
            "eigen_sum": r.eigen_sum,
            "relative": r.relative,
            "cov_ii": r.cov_ii,
            "floored": r.floored,
        }));
    }
    if let Some(out) = &a.output {
        write(out, to_canonical_json(&json!({ "targets": rows })))?;
    }
    ctx.check_floor(any_floored, "covariance")
}

fn solution_from_report(r: &DependencyReport, n: usize) -> Result<DependencySolution<f64>, Failure> {
    check_target(r.target, n)?;
    let mut theta = vec![0.0; n];
    theta[r.target] = -1.0;
    let mut support = BTreeSet::new();
    for c in &r.coefficients {
        if c.index >= n || c.index == r.target {
            return Err(Failure::Usage(format!(
                "report coefficient index {} invalid for {n} categories",
                c.index
            )));
        }
        theta[c.index] = c.theta;
        support.insert(c.index);
    }
    Ok(DependencySolution {
        target: r.target,
        theta,
        lambda: r.lambda,
        pred_error: r.pred_error,
        support,
        converged: r.converged,
        kkt_max_violation: r.certificates.kkt_max_violation,
        dual: None,
        iterations: r.iterations,
    })
}

fn cmd_eval(_ctx: &Ctx, a: &EvalArgs) -> Outcome {
    let mut report = with_path(&a.report, DependencyReport::from_json(&read_text(&a.report)?))?;
    let logits = with_path(&a.logits, load_logits(&a.logits, a.labels_col))?;
    let sol = solution_from_report(&report, logits.cols())?;
    let m = evaluate(&logits, &sol)?;
    print_metrics(&m);
    kf("acc_drop", m.ori_acc - m.acc);
    report.metrics = Some(m);
    if let Some(out) = &a.output {
        write(out, report.to_json())?;
    }
    Ok(())
}

fn cmd_fit_extension(_ctx: &Ctx, a: &FitExtensionArgs) -> Outcome {
    let base = with_path(&a.logits, load_logits(&a.logits, a.labels_col))?;
    let config = ExtensionConfig {
        step: a.step,
        epochs: a.epochs,
    };
    let fit = fit_extension(&base, a.n2, &config)?;
    let all = fit.matrix.apply(&base)?;
    let labels = all.labels().unwrap_or_default();
    let n1 = base.cols();
    let (mut new_total, mut new_hit) = (0usize, 0usize);
    for (r, &y) in labels.iter().enumerate() {
        if y as usize >= n1 {
            new_total += 1;
            new_hit += (ndep::evaluation::argmax(all.row(r)) == y as usize) as usize;
        }
    }
    let doc = json!({
        "base_n1": fit.matrix.base_n1,
        "new_n2": fit.matrix.new_n2,
        "theta_big": fit.matrix.theta_big,
        "loss": fit.loss,
        "initial_loss": fit.history[0],
        "epochs": a.epochs,
        "step": a.step,
        "monotone": fit.monotone,
    });
    write(&a.output, to_canonical_json(&doc))?;
    kf("initial_loss", fit.history[0]);
    kf("loss", fit.loss);
    kv("monotone", fit.monotone);
    if new_total > 0 {
        kf("new_category_acc", new_hit as f64 / new_total as f64);
    }
    Ok(())
}

fn parse_plant(text: &str) -> Result<BTreeMap<usize, f64>, Failure> {
    let mut out = BTreeMap::new();
    for part in text.split(',') {
        let (j, t) = part
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("bad plant entry {part:?}, expected j:theta")))?;
        let j: usize = j
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad plant index {j:?}")))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad plant coefficient {t:?}")))?;
        out.insert(j, t);
    }
    Ok(out)
}

fn cmd_synth(_ctx: &Ctx, a: &SynthArgs) -> Outcome {
    let planted = match (a.target, &a.plant) {
        (Some(target), Some(p)) => Some(Planted {
            target,
            coefficients: parse_plant(p)?,
        }),
        _ => None,
    };
    let spec = SyntheticSpec {
        n: a.n,
        samples: a.samples,
        latent_rank: a.rank.unwrap_or(a.n),
        noise_sigma: a.noise,
        planted,
        seed: a.seed,
    };
    let (logits, truth) = generate(&spec)?;
    if a.csv {
        write(&a.output, write_csv(&logits))?;
    } else {
        with_path(&a.output, save_logits(&a.output, &logits))?;
    }
    if let (Some(path), Some(t)) = (&a.truth, &truth) {
        write(path, to_canonical_json(t))?;
    }
    kv("n", a.n);
    kv("samples", a.samples);
    kv("seed", a.seed);
    if let Some(t) = &truth {
        kv("target", t.target);
        kv("support", join(&t.support));
    }
    Ok(())
}

fn cmd_graph(_ctx: &Ctx, a: &GraphArgs) -> Outcome {
    let mut reports = Vec::with_capacity(a.reports.len());
    for p in &a.reports {
        reports.push(with_path(p, DependencyReport::from_json(&read_text(p)?))?);
    }
    let text = emit_graph(&reports);
    match &a.output {
        Some(out) => write(out, &text)?,
        None => print!("{text}"),
    }
    kv("reports", reports.len());
    kv("edges", reports.iter().map(|r| r.coefficients.len()).sum::<usize>());
    Ok(())
}

fn cmd_cross_cov(ctx: &Ctx, a: &CrossCovArgs) -> Outcome {
    let f: LogitMatrix<f64> = with_path(&a.f, load_logits(&a.f, a.labels_col))?;
    let g: LogitMatrix<f64> = with_path(&a.g, load_logits(&a.g, a.labels_col))?;
    check_target(a.target, f.cols())?;
    let cov = cross_covariance(&f, &g, a.target)?;
    with_path(&a.output, save_cov(&a.output, &cov))?;
    let eig = eigendecompose(&cov.mat)?;
    let floored = eig.needs_floor(eig.relative_floor(ctx.floor));
    kv("n", cov.dim());
    kv("samples", cov.sample_count);
    kv("target", a.target);
    kv("floored", floored);
    ctx.check_floor(floored, "covariance")
}

fn relative_floor() -> Result<f64, Failure> {
    match std::env::var("ND_EIG_FLOOR") {
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
            _ => Err(Failure::Usage(format!("ND_EIG_FLOOR must be a nonnegative number, got {s:?}"))),
        },
        Err(_) => Ok(DEFAULT_RELATIVE_FLOOR),
    }
}

fn run(cli: &Cli) -> Outcome {
    let ctx = Ctx {
        strict: cli.strict,
        floor: relative_floor()?,
    };
    match &cli.command {
        Command::Cov(a) => cmd_cov(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Path(a) => cmd_path(&ctx, a),
        Command::Screen(a) => cmd_screen(&ctx, a),
        Command::Redundancy(a) => cmd_redundancy(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::FitExtension(a) => cmd_fit_extension(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Graph(a) => cmd_graph(&ctx, a),
        Command::CrossCov(a) => cmd_cross_cov(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ndep: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
