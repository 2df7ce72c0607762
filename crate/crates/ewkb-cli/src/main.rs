//! Batch front end for the `ewkb` library: load a model, run one analysis,
//! write deterministic artifacts. Every run drops a `run_manifest.toml` next
//! to its outputs echoing the command, the model source, and every parameter
//! after defaults were resolved, so an artifact directory is reproducible
//! from the manifest alone. All files are written atomically (temp sibling +
//! rename) and identical invocations produce byte-identical output.
//!
//! Exit codes: 0 success, 1 usage, 2 model or method validation, 3 solver
//! failure, 4 unresolved Stokes-graph degeneracy. Stderr carries warnings and
//! diagnostics; stdout carries exactly one summary line per successful run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ewkb::analytic::Rectangle;
use ewkb::connection::{self, ConnectionError, TransitionReport};
use ewkb::integrate::{self, IntegrateError, SolverConfig};
use ewkb::model::{self, ModelError, ModelSpec};
use ewkb::stokes::{self, EpsilonPolicy, StokesError};
use ewkb_cli::{parse_override, parse_vary, VarySpec};
use rayon::prelude::*;

const METHODS: [&str; 5] = ["ewkb", "ddp", "gddp", "perturbative", "numeric"];

#[derive(Parser)]
#[command(
    name = "ewkb",
    version,
    about = "Exact-WKB analysis of polynomial multilevel sweep models",
    long_about = "Exact-WKB analysis of polynomial multilevel sweep models: turning points, \
                  Stokes graphs, and transition probabilities by five back ends (exact-WKB \
                  connection product, DDP and generalized-DDP formulas, first-order \
                  perturbation theory, direct integration).\n\n\
                  Set EWKB_WORKERS to bound the number of worker threads used for sweeps."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the complex turning points of a model and export them as CSV.
    #[command(after_help = "Output files:\n  \
        turning_points.csv  columns pair_i,pair_j,re,im,order: the colliding adjacent level \
        pair (0 = highest level), the complex location, and the discriminant zero order \
        (1 = simple).\n  \
        run_manifest.toml   command, model source, resolved parameters, output list.")]
    TurningPoints(TurningPointsArgs),
    /// Trace the Stokes graph and export it as CSV plus a rendered SVG.
    #[command(after_help = "Output files:\n  \
        stokes_graph.csv    columns line_id,re_t,im_t,dominant_level: one row per traced \
        vertex; line_id groups vertices into polylines, dominant_level is the level whose \
        exponential dominates on that line.\n  \
        stokes_graph.svg    presentational rendering of the same data; the CSV is canonical.\n  \
        turning_points.csv  as for the turning-points command.\n  \
        run_manifest.toml   command, model source, resolved parameters, output list.")]
    StokesGraph(StokesGraphArgs),
    /// Compute one transition (or survival) probability and write a report.
    #[command(after_help = "Output files:\n  \
        transition.toml     method, levels, eta, probability, amplitude, and per-step \
        diagnostics (crossing times, coefficient and prefactor moduli).\n  \
        run_manifest.toml   command, model source, resolved parameters, output list.")]
    Transition(TransitionArgs),
    /// Sweep one parameter over a grid and tabulate probabilities per method.
    #[command(after_help = "Output files:\n  \
        sweep.csv           columns param,value,method,probability,error: one row per grid \
        point per method, grid-major then method-major, deterministic order. A point that \
        fails leaves probability = nan and puts the reason in error; the sweep still \
        exits 0.\n  \
        run_manifest.toml   command, model source, resolved parameters, output list.")]
    Sweep(SweepArgs),
}

/// Model selection shared by every subcommand: a TOML file or a built-in
/// family, plus parameter overrides applied after loading.
#[derive(Args)]
struct ModelArgs {
    /// Model description file (TOML); exactly one of --model/--builtin.
    #[arg(long, value_name = "PATH", conflicts_with = "builtin")]
    model: Option<PathBuf>,
    /// Built-in family (nlzsm or lzsm3) at its documented defaults.
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
    /// Override one model parameter (repeatable), e.g. --param n=3.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_override)]
    params: Vec<(String, f64)>,
    /// Override the sweep-rate parameter eta.
    #[arg(long, value_name = "ETA")]
    eta: Option<f64>,
    /// Override the degeneracy-breaking perturbation strength epsilon.
    #[arg(long, value_name = "EPS")]
    epsilon: Option<f64>,
}

/// Complex search window; unset edges fall back to the model's default
/// window (half-width 8 sweep-time units about the origin).
#[derive(Args)]
struct WindowArgs {
    /// Left edge of the search window.
    #[arg(long, value_name = "RE")]
    re_min: Option<f64>,
    /// Right edge of the search window.
    #[arg(long, value_name = "RE")]
    re_max: Option<f64>,
    /// Lower edge of the search window.
    #[arg(long, value_name = "IM")]
    im_min: Option<f64>,
    /// Upper edge of the search window.
    #[arg(long, value_name = "IM")]
    im_max: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for the artifacts and the run manifest (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TurningPointsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct StokesGraphArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// On a degenerate graph, retry with |epsilon| in {0.01, 0.05} instead
    /// of exiting with code 4.
    #[arg(long)]
    auto_epsilon: bool,
    /// Use negative epsilon; the graph changes, probabilities must not.
    #[arg(long)]
    flip_epsilon: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TransitionArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Probability back end.
    #[arg(long, value_parser = METHODS)]
    method: String,
    #[command(flatten)]
    levels: LevelArgs,
    #[command(flatten)]
    interval: IntervalArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Grid specification param=lo:hi:steps (steps = point count, ends
    /// inclusive), e.g. --vary d23=0.1:1.0:10.
    #[arg(long, value_name = "PARAM=LO:HI:STEPS", value_parser = parse_vary)]
    vary: VarySpec,
    /// Comma-separated list of back ends to run at every grid point.
    #[arg(long, value_delimiter = ',', required = true, value_parser = METHODS)]
    methods: Vec<String>,
    #[command(flatten)]
    levels: LevelArgs,
    #[command(flatten)]
    interval: IntervalArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct LevelArgs {
    /// Initial adiabatic level at t0 (0 = highest level).
    #[arg(long, default_value_t = 0)]
    from: usize,
    /// Final adiabatic level at t1.
    #[arg(long, default_value_t = 1)]
    to: usize,
}

#[derive(Args)]
struct IntervalArgs {
    /// Left end of the time window (default: -20 sweep-time units).
    #[arg(long, value_name = "T", allow_hyphen_values = true)]
    t0: Option<f64>,
    /// Right end of the time window (default: +20 sweep-time units).
    #[arg(long, value_name = "T", allow_hyphen_values = true)]
    t1: Option<f64>,
    /// Relative tolerance (method=numeric only).
    #[arg(long, default_value_t = 1e-10)]
    rel_tol: f64,
    /// Absolute tolerance (method=numeric only).
    #[arg(long, default_value_t = 1e-12)]
    abs_tol: f64,
}

impl WindowArgs {
    fn resolve(&self, model: &ModelSpec) -> Rectangle {
        let d = stokes::default_window(model);
        Rectangle::new(
            self.re_min.unwrap_or(d.re_min),
            self.re_max.unwrap_or(d.re_max),
            self.im_min.unwrap_or(d.im_min),
            self.im_max.unwrap_or(d.im_max),
        )
    }

    fn is_all_default(&self) -> bool {
        self.re_min.is_none() && self.re_max.is_none() && self.im_min.is_none() && self.im_max.is_none()
    }
}

impl IntervalArgs {
    /// Resolved endpoints: 20 characteristic sweep times on each side unless
    /// overridden.
    fn resolve(&self, model: &ModelSpec) -> (f64, f64) {
        let half = 20.0 * model.sweep_scale();
        (self.t0.unwrap_or(-half), self.t1.unwrap_or(half))
    }
}

/// A classified failure: message to stderr, code to the shell.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
    fn validation(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
    fn solver(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
    fn degeneracy(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<StokesError> for Failure {
    fn from(e: StokesError) -> Self {
        match e {
            StokesError::UnresolvedDegeneracy { .. } => Failure::degeneracy(e.to_string()),
            StokesError::WindowTouchesAxis { .. } | StokesError::Model(_) => {
                Failure::validation(e.to_string())
            }
            other => Failure::solver(other.to_string()),
        }
    }
}

impl From<ConnectionError> for Failure {
    fn from(e: ConnectionError) -> Self {
        match e {
            ConnectionError::NotTwoLevel(_)
            | ConnectionError::BadLevel { .. }
            | ConnectionError::BadInterval { .. }
            | ConnectionError::UnknownMethod(_)
            | ConnectionError::Model(_) => Failure::validation(e.to_string()),
            // A degenerate graph inside the ewkb back end keeps its own code.
            ConnectionError::Stokes(s) => Failure::from(s),
            other => Failure::solver(other.to_string()),
        }
    }
}

impl From<IntegrateError> for Failure {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::BadLevel { .. }
            | IntegrateError::BadInterval { .. }
            | IntegrateError::BadTolerance { .. }
            | IntegrateError::NotNormalized(_)
            | IntegrateError::Model(_) => Failure::validation(e.to_string()),
            other => Failure::solver(other.to_string()),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_worker_pool();
    let outcome = match &cli.command {
        Command::TurningPoints(a) => run_turning_points(a),
        Command::StokesGraph(a) => run_stokes_graph(a),
        Command::Transition(a) => run_transition(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match outcome {
        Ok(summary) => println!("{summary}"),
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

/// Honor EWKB_WORKERS if set; a bad value is a warning, not an error.
fn init_worker_pool() {
    let Ok(raw) = std::env::var("EWKB_WORKERS") else { return };
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring EWKB_WORKERS={raw:?} (want a positive integer)"),
    }
}

// ---------------------------------------------------------------------------
// subcommands

fn run_turning_points(args: &TurningPointsArgs) -> Result<String, Failure> {
    let (spec, source) = load_model(&args.model)?;
    let window = args.window.resolve(&spec);
    let points = stokes::turning_points_both_halves(&spec, window)?;

    let mut parameters = model_parameters(&args.model, &spec);
    insert_window(&mut parameters, window);
    let dir = &args.output.out_dir;
    let csv = dir.join("turning_points.csv");
    prepare_dir(dir)?;
    write_atomic(&csv, &stokes::turning_points_csv(&points))?;
    write_manifest(dir, "turning-points", &source, parameters, &["turning_points.csv"])?;

    Ok(format!(
        "turning-points[{}]: {} points in [{:.4}, {:.4}] x [{:.4}i, {:.4}i] -> {}",
        spec.label(),
        points.len(),
        window.re_min,
        window.re_max,
        window.im_min,
        window.im_max,
        csv.display()
    ))
}

fn run_stokes_graph(args: &StokesGraphArgs) -> Result<String, Failure> {
    let (spec, source) = load_model(&args.model)?;
    let policy = EpsilonPolicy { auto_escalate: args.auto_epsilon, flip_sign: args.flip_epsilon };
    let window = if args.window.is_all_default() {
        None
    } else {
        Some(args.window.resolve(&spec))
    };
    let graph = stokes::build_graph(&spec, window, policy)?;
    for flag in &graph.degeneracy_flags {
        eprintln!("warning: {flag}");
    }
    if !graph.degeneracy_flags.is_empty() {
        return Err(Failure::degeneracy(format!(
            "degenerate Stokes graph at epsilon {:+.3e}; rerun with --auto-epsilon",
            graph.epsilon_used
        )));
    }
    for z in &graph.intersection_flags {
        eprintln!(
            "warning: Stokes lines intersect at {:.4}{:+.4}i (virtual turning point candidate; not connected across)",
            z.re, z.im
        );
    }
    if (graph.epsilon_used - spec.epsilon()).abs() > 1e-14 {
        eprintln!(
            "warning: degeneracy resolved by escalating epsilon to {:+.3e}",
            graph.epsilon_used
        );
    }

    let mut parameters = model_parameters(&args.model, &spec);
    if let Some(w) = window {
        insert_window(&mut parameters, w);
    }
    parameters.insert("auto_epsilon".into(), args.auto_epsilon.into());
    parameters.insert("flip_epsilon".into(), args.flip_epsilon.into());
    parameters.insert("epsilon_used".into(), graph.epsilon_used.into());

    let dir = &args.output.out_dir;
    prepare_dir(dir)?;
    write_atomic(&dir.join("stokes_graph.csv"), &stokes::graph_csv(&graph))?;
    write_atomic(&dir.join("stokes_graph.svg"), &stokes::graph_svg(&graph))?;
    write_atomic(&dir.join("turning_points.csv"), &stokes::turning_points_csv(&graph.turning_points))?;
    write_manifest(
        dir,
        "stokes-graph",
        &source,
        parameters,
        &["stokes_graph.csv", "stokes_graph.svg", "turning_points.csv"],
    )?;

    let mut crossings = String::new();
    for c in &graph.crossings {
        let (i, j) = graph.lines[c.line].pair;
        let _ = write!(crossings, " t={:.4}({i}<->{j})", c.t);
    }
    Ok(format!(
        "stokes-graph[{}]: eps={:+.3e}, {} lines, {} crossings{} -> {}",
        spec.label(),
        graph.epsilon_used,
        graph.lines.len(),
        graph.crossings.len(),
        crossings,
        dir.join("stokes_graph.csv").display()
    ))
}

fn run_transition(args: &TransitionArgs) -> Result<String, Failure> {
    let (spec, source) = load_model(&args.model)?;
    let (t0, t1) = args.interval.resolve(&spec);
    let report = dispatch(&spec, &args.method, &args.levels, t0, t1, &args.interval)?;
    for note in &report.diagnostics.notes {
        eprintln!("note: {note}");
    }

    let mut parameters = model_parameters(&args.model, &spec);
    parameters.insert("method".into(), args.method.clone().into());
    insert_run_window(&mut parameters, &args.levels, t0, t1, &args.interval);

    let dir = &args.output.out_dir;
    let path = dir.join("transition.toml");
    prepare_dir(dir)?;
    write_atomic(&path, &report.to_toml())?;
    write_manifest(dir, "transition", &source, parameters, &["transition.toml"])?;

    Ok(format!(
        "transition[{}]: method={} P({}->{}) = {:.6e} -> {}",
        spec.label(),
        report.method,
        report.from_level,
        report.to_level,
        report.probability,
        path.display()
    ))
}

fn run_sweep(args: &SweepArgs) -> Result<String, Failure> {
    let (spec, source) = load_model(&args.model)?;
    let (t0, t1) = args.interval.resolve(&spec);
    let vary = &args.vary;
    // Validate the parameter name once up front; per-point failures later go
    // to the error column instead of aborting.
    spec.with_param(&vary.name, vary.lo)?;

    let values: Vec<f64> = (0..vary.steps)
        .map(|k| {
            if vary.steps == 1 {
                vary.lo
            } else {
                vary.lo + (vary.hi - vary.lo) * k as f64 / (vary.steps - 1) as f64
            }
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|vi| (0..args.methods.len()).map(move |mi| (vi, mi)))
        .collect();
    // Points run concurrently; assembly below is ordered and single-threaded,
    // so reruns are byte-identical.
    let results: Vec<Result<f64, String>> = jobs
        .par_iter()
        .map(|&(vi, mi)| {
            let rebound = spec.with_param(&vary.name, values[vi]).map_err(|e| e.to_string())?;
            dispatch(&rebound, &args.methods[mi], &args.levels, t0, t1, &args.interval)
                .map(|r| r.probability)
                .map_err(|f| f.message)
        })
        .collect();

    let mut csv = String::from("param,value,method,probability,error\n");
    let mut failures = 0usize;
    for (&(vi, mi), result) in jobs.iter().zip(&results) {
        match result {
            Ok(p) => {
                let _ = writeln!(
                    csv,
                    "{},{:.12e},{},{:.12e},",
                    vary.name, values[vi], args.methods[mi], p
                );
            }
            Err(msg) => {
                failures += 1;
                let _ = writeln!(
                    csv,
                    "{},{:.12e},{},nan,{}",
                    vary.name,
                    values[vi],
                    args.methods[mi],
                    sanitize_cell(msg)
                );
            }
        }
    }

    let mut parameters = model_parameters(&args.model, &spec);
    parameters.insert("vary".into(), format!("{}={}:{}:{}", vary.name, vary.lo, vary.hi, vary.steps).into());
    parameters.insert(
        "methods".into(),
        toml::Value::Array(args.methods.iter().map(|m| m.clone().into()).collect()),
    );
    insert_run_window(&mut parameters, &args.levels, t0, t1, &args.interval);

    let dir = &args.output.out_dir;
    let path = dir.join("sweep.csv");
    prepare_dir(dir)?;
    write_atomic(&path, &csv)?;
    write_manifest(dir, "sweep", &source, parameters, &["sweep.csv"])?;

    Ok(format!(
        "sweep[{}]: {} over [{}, {}] x {} points, methods {}, {} failed points -> {}",
        spec.label(),
        vary.name,
        vary.lo,
        vary.hi,
        vary.steps,
        args.methods.join(","),
        failures,
        path.display()
    ))
}

/// Route one probability request to its back end.
fn dispatch(
    spec: &ModelSpec,
    method: &str,
    levels: &LevelArgs,
    t0: f64,
    t1: f64,
    interval: &IntervalArgs,
) -> Result<TransitionReport, Failure> {
    if method == "numeric" {
        let cfg = SolverConfig::new(t0, t1).with_tols(interval.rel_tol, interval.abs_tol);
        Ok(integrate::numeric_transition_probability(spec, levels.from, levels.to, t0, t1, &cfg)?)
    } else {
        Ok(connection::transition_report(spec, method, levels.from, levels.to, t0, t1)?)
    }
}

// ---------------------------------------------------------------------------
// model loading and flag parsing

fn load_model(args: &ModelArgs) -> Result<(ModelSpec, String), Failure> {
    let (mut spec, source) = match (&args.model, &args.builtin) {
        (Some(path), None) => {
            let spec = ModelSpec::from_toml_file(path)
                .map_err(|e| Failure::validation(format!("model file {}: {e}", path.display())))?;
            (spec, path.display().to_string())
        }
        (None, Some(name)) => (model::builtin(name, &BTreeMap::new())?, format!("builtin:{name}")),
        _ => return Err(Failure::usage("exactly one of --model or --builtin is required")),
    };
    for (key, value) in &args.params {
        spec = spec.with_param(key, *value)?;
    }
    if let Some(eta) = args.eta {
        spec = spec.with_eta(eta)?;
    }
    if let Some(eps) = args.epsilon {
        spec = spec.with_epsilon(eps)?;
    }
    Ok((spec, source))
}

/// Error-column cell: single line, comma-free, so the CSV stays naive.
fn sanitize_cell(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ").replace(',', ";")
}

// ---------------------------------------------------------------------------
// artifacts

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::solver(format!("creating {}: {e}", dir.display())))
}

/// Write via a temp sibling and rename, so readers never observe a partial
/// file and interrupted runs leave no half-written artifact under the final
/// name.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let io = std::fs::write(&tmp, contents).and_then(|()| std::fs::rename(&tmp, path));
    io.map_err(|e| Failure::solver(format!("writing {}: {e}", path.display())))
}

/// Echo the model source and the resolved model parameters common to every
/// command.
fn model_parameters(args: &ModelArgs, spec: &ModelSpec) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("label".into(), spec.label().to_string().into());
    t.insert("eta".into(), spec.eta().into());
    t.insert("epsilon".into(), spec.epsilon().into());
    let overrides: Vec<toml::Value> =
        args.params.iter().map(|(k, v)| format!("{k}={v}").into()).collect();
    t.insert("overrides".into(), toml::Value::Array(overrides));
    t
}

fn insert_window(parameters: &mut toml::Table, w: Rectangle) {
    parameters.insert("re_min".into(), w.re_min.into());
    parameters.insert("re_max".into(), w.re_max.into());
    parameters.insert("im_min".into(), w.im_min.into());
    parameters.insert("im_max".into(), w.im_max.into());
}

fn insert_run_window(
    parameters: &mut toml::Table,
    levels: &LevelArgs,
    t0: f64,
    t1: f64,
    interval: &IntervalArgs,
) {
    parameters.insert("from".into(), (levels.from as i64).into());
    parameters.insert("to".into(), (levels.to as i64).into());
    parameters.insert("t0".into(), t0.into());
    parameters.insert("t1".into(), t1.into());
    parameters.insert("rel_tol".into(), interval.rel_tol.into());
    parameters.insert("abs_tol".into(), interval.abs_tol.into());
}

fn write_manifest(
    dir: &Path,
    command: &str,
    source: &str,
    parameters: toml::Table,
    outputs: &[&str],
) -> Result<(), Failure> {
    let mut root = toml::Table::new();
    root.insert("command".into(), command.into());
    root.insert("model".into(), source.into());
    root.insert("seedless".into(), true.into());
    root.insert(
        "outputs".into(),
        toml::Value::Array(outputs.iter().map(|o| o.to_string().into()).collect()),
    );
    root.insert("parameters".into(), toml::Value::Table(parameters));
    let text = toml::to_string_pretty(&root)
        .map_err(|e| Failure::solver(format!("serializing manifest: {e}")))?;
    write_atomic(&dir.join("run_manifest.toml"), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_cells_never_break_the_csv_row() {
        assert_eq!(sanitize_cell("a, b\nc"), "a; b c");
    }

    #[test]
    fn cli_declares_long_flags_only() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                assert!(arg.get_short().is_none(), "--{} has a short alias", arg.get_id());
            }
        }
    }
}
