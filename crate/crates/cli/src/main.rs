//! `lcsvr`: fit, predict, validate and benchmark linearly constrained ν-SVR.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 validation error,
//! 3 solver stopped at the iteration cap.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcsvr_core::experiments::{self, NoiseKind, NoiseSpec, Scenario, ScenarioConfig, Tuning};
use lcsvr_core::gsmo::SolverOptions;
use lcsvr_core::presets::make_constraints;
use lcsvr_core::{
    fit_projected, fit_with_constraints, validate_problem, Execution, FitError, FittedModel,
    Hyperparameters, LinearConstraints, Matrix, ModelKind, PresetKind, ProjectionTarget,
    TrainingSet,
};

#[derive(Parser)]
#[command(name = "lcsvr", version, about = "Linearly constrained nu-SVR")]
struct Cli {
    /// Worker threads for experiment repetitions (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a training CSV (`y,x1..xp`)
    Fit(FitArgs),
    /// Predict with a saved model
    Predict(PredictArgs),
    /// Run a benchmark scenario
    Experiment(ExperimentArgs),
    /// Dump SVR and SSVR solver trajectories on simplex data
    Trajectory(TrajectoryArgs),
    /// Check a problem without solving it
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Svr,
    Nnsvr,
    Ssvr,
    Isvr,
    IsvrDecreasing,
    PSvr,
    Cibersort,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_enum, default_value = "svr")]
    preset: Preset,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Inequality matrix (headerless CSV, k1 x p); replaces the preset
    #[arg(long = "A")]
    a: Option<PathBuf>,
    #[arg(long = "b")]
    b: Option<PathBuf>,
    /// Equality matrix (headerless CSV, k2 x p); replaces the preset
    #[arg(long = "Gamma")]
    gamma: Option<PathBuf>,
    #[arg(long = "d")]
    d: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write the solver trajectory here
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV with header `x1..xp` (a `y` column is ignored)
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    None,
    Gaussian,
    Laplacian,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: Noise,
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed C (with --nu); otherwise cross-validated
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Points per axis of the CV grid (default 10, isotonic 5). C is
    /// log-spaced in [1e-3, 1e3] (isotonic [1, 1e3]), nu linear in [0.05, 1]
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "none")]
    noise: Noise,
    #[arg(long, default_value_t = 30.0)]
    snr: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 25)]
    p: usize,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
}

enum CliError {
    /// I/O or parse failure (exit 1)
    Io(String),
    /// Invalid problem or configuration (exit 2)
    Invalid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Invalid(m) => m,
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<lcsvr_core::ExperimentError> for CliError {
    fn from(e: lcsvr_core::ExperimentError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        configure_pool(j);
    }
    let res = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Trajectory(a) => cmd_trajectory(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_pool(jobs: usize) {
    // Only fails if a global pool already exists, which cannot happen here.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build_global();
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(_jobs: usize) {}

/// `--seed`, unless `LCSVR_SEED` is set.
fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var("LCSVR_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("LCSVR_SEED is not an integer: '{v}'"))),
        Err(_) => Ok(flag),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `contents` to a temporary file next to `path`, then renames it.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        CliError::Io(format!(
            "{}: line {line}: not a number: '{}'",
            path.display(),
            s.trim()
        ))
    })
}

/// Headered CSV as named columns of floats.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| io_err(path, e))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| io_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| io_err(path, e))?;
            let row = rec
                .iter()
                .map(|f| parse_f64(f, path, k + 2))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str, path: &Path) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Io(format!("{}: missing column '{name}'", path.display())))
    }

    /// Number of `x` columns: the header entries other than `y`.
    fn n_features(&self) -> usize {
        self.header.iter().filter(|h| h.as_str() != "y").count()
    }

    fn features(&self, p: usize, path: &Path) -> Result<Matrix> {
        let cols = (1..=p)
            .map(|j| self.column(&format!("x{j}"), path))
            .collect::<Result<Vec<_>>>()?;
        let data = self
            .rows
            .iter()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        Ok(Matrix::from_row_major(self.rows.len(), p, data).expect("row lengths checked by csv"))
    }
}

fn read_training(path: &Path) -> Result<TrainingSet> {
    let t = Table::read(path)?;
    let yc = t.column("y", path)?;
    let p = t.n_features();
    if p == 0 {
        return Err(CliError::Io(format!(
            "{}: missing column 'x1'",
            path.display()
        )));
    }
    let x = t.features(p, path)?;
    let y = t.rows.iter().map(|r| r[yc]).collect();
    Ok(TrainingSet::new(x, y))
}

/// Headerless numeric CSV, one row per record.
fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        out.push(
            rec.iter()
                .filter(|f| !f.is_empty())
                .map(|f| parse_f64(f, path, k + 1))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

fn to_matrix(rows: Vec<Vec<f64>>, p: usize, what: &str) -> Result<Matrix> {
    Matrix::from_rows(&rows, p)
        .ok_or_else(|| CliError::Invalid(format!("{what}: every row must have {p} entries")))
}

fn custom_constraints(a: &ProblemArgs, p: usize) -> Result<Option<LinearConstraints>> {
    if a.a.is_none() && a.gamma.is_none() {
        if a.b.is_some() || a.d.is_some() {
            return Err(CliError::Invalid(
                "--b/--d given without --A/--Gamma".into(),
            ));
        }
        return Ok(None);
    }
    let pair =
        |m: &Option<PathBuf>, v: &Option<PathBuf>, name: &str| -> Result<(Matrix, Vec<f64>)> {
            match (m, v) {
                (None, None) => Ok((Matrix::zeros(0, p), Vec::new())),
                (Some(m), Some(v)) => Ok((
                    to_matrix(read_matrix(m)?, p, name)?,
                    read_matrix(v)?.concat(),
                )),
                _ => Err(CliError::Invalid(format!(
                    "{name} needs both matrix and right-hand side"
                ))),
            }
        };
    let (am, bv) = pair(&a.a, &a.b, "A")?;
    let (gm, dv) = pair(&a.gamma, &a.d, "Gamma")?;
    Ok(Some(LinearConstraints::new(am, bv, gm, dv)))
}

fn hyperparameters(a: &ProblemArgs) -> Hyperparameters {
    let hp = Hyperparameters::new(a.c, a.nu).with_tau(a.tau);
    match a.max_iter {
        Some(m) => hp.with_max_iter(m),
        None => hp,
    }
}

enum Plan {
    Constrained(LinearConstraints, ModelKind),
    Projected(ProjectionTarget),
}

fn plan(a: &ProblemArgs, p: usize) -> Result<Plan> {
    if let Some(lc) = custom_constraints(a, p)? {
        return Ok(Plan::Constrained(lc, ModelKind::Custom));
    }
    let preset = |k: PresetKind| -> Result<Plan> {
        Ok(Plan::Constrained(
            make_constraints(k, p)?,
            ModelKind::Preset(k),
        ))
    };
    match a.preset {
        Preset::Svr => preset(PresetKind::Svr),
        Preset::Nnsvr => preset(PresetKind::Nnsvr),
        Preset::Ssvr => preset(PresetKind::Ssvr),
        Preset::Isvr => preset(PresetKind::Isvr),
        Preset::IsvrDecreasing => preset(PresetKind::IsvrDecreasing),
        Preset::PSvr => Ok(Plan::Projected(ProjectionTarget::PositiveOrthant)),
        Preset::Cibersort => Ok(Plan::Projected(ProjectionTarget::Simplex)),
    }
}

fn check_problem(ts: &TrainingSet, lc: &LinearConstraints, hp: &Hyperparameters) -> Result<()> {
    let v = validate_problem(ts, lc, hp);
    if v.is_empty() {
        return Ok(());
    }
    let msg = v
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ");
    Err(CliError::Invalid(format!("invalid problem: {msg}")))
}

fn cmd_fit(a: FitArgs) -> Result<u8> {
    let ts = read_training(&a.problem.train)?;
    let p = ts.n_features();
    let hp = hyperparameters(&a.problem);
    let options = SolverOptions {
        record_trajectory: a.trajectory.is_some(),
        ..SolverOptions::default()
    };
    let model = match plan(&a.problem, p)? {
        Plan::Constrained(lc, kind) => {
            check_problem(&ts, &lc, &hp)?;
            fit_with_constraints(ts, lc, hp, kind, &options)?
        }
        Plan::Projected(target) => {
            check_problem(&ts, &LinearConstraints::none(p), &hp)?;
            fit_projected(ts, hp, target)?
        }
    };
    let report = model.report.as_ref().expect("fresh fit has a report");
    write_atomic(&a.out, &model.to_text())?;
    if let Some(path) = &a.trajectory {
        write_atomic(path, &report.trajectory_csv())?;
    }

    let mut out = String::new();
    writeln!(out, "kind={}", model.kind.as_str()).unwrap();
    writeln!(out, "iterations={}", report.iterations).unwrap();
    writeln!(out, "termination={}", report.termination.as_str()).unwrap();
    writeln!(out, "final_delta={}", report.final_delta).unwrap();
    writeln!(out, "objective={}", model.dual_objective).unwrap();
    writeln!(out, "intercept={}", model.solution.beta0).unwrap();
    writeln!(out, "epsilon={}", model.solution.epsilon).unwrap();
    writeln!(
        out,
        "degenerate_intercept={}",
        model.solution.degenerate_intercept
    )
    .unwrap();
    writeln!(out, "divergence_suspected={}", report.divergence_suspected).unwrap();
    print!("{out}");
    Ok(if report.converged() { 0 } else { 3 })
}

fn cmd_predict(a: PredictArgs) -> Result<u8> {
    let text = fs::read_to_string(&a.model).map_err(|e| io_err(&a.model, e))?;
    let model = FittedModel::from_text(&text).map_err(|e| io_err(&a.model, e))?;
    let t = Table::read(&a.input)?;
    let p = t.n_features();
    if p != model.n_features() {
        return Err(CliError::Invalid(format!(
            "model has {} features, {} has {p}",
            model.n_features(),
            a.input.display()
        )));
    }
    let x = t.features(p, &a.input)?;
    let yhat = model.predict(&x)?;
    let mut out = String::from("yhat\n");
    for v in &yhat {
        writeln!(out, "{v}").unwrap();
    }
    write_atomic(&a.out, &out)?;
    println!("rows={}", yhat.len());
    Ok(0)
}

fn noise_spec(noise: Noise, snr: f64) -> Option<NoiseSpec> {
    let kind = match noise {
        Noise::None => return None,
        Noise::Gaussian => NoiseKind::Gaussian,
        Noise::Laplacian => NoiseKind::Laplacian,
    };
    Some(NoiseSpec { kind, snr_db: snr })
}

fn execution() -> Execution {
    if cfg!(feature = "parallel") {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_experiment(a: ExperimentArgs) -> Result<u8> {
    let scenario: Scenario = a.scenario.parse().map_err(CliError::Invalid)?;
    let mut cfg = ScenarioConfig::defaults(scenario);
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(p) = a.p {
        cfg.p = p;
        if scenario == Scenario::Isotonic {
            cfg.n = p;
        }
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    cfg.noise = noise_spec(a.noise, a.snr);
    cfg.seed = effective_seed(a.seed)?;
    cfg.tau = a.tau;
    cfg.execution = execution();
    cfg.tuning = match (a.c, a.nu) {
        (Some(c), Some(nu)) => Tuning::Fixed { c, nu },
        (None, None) if scenario == Scenario::Trajectory => cfg.tuning,
        (None, None) => {
            let (c_grid, nu_grid) =
                scenario.cv_grid(a.grid.unwrap_or(scenario.default_grid_size()));
            Tuning::CrossValidated {
                c_grid,
                nu_grid,
                folds: a.folds,
            }
        }
        _ => {
            return Err(CliError::Invalid(
                "--C and --nu must be given together".into(),
            ))
        }
    };
    let hp_check = match &cfg.tuning {
        Tuning::Fixed { c, nu } => Hyperparameters::new(*c, *nu).with_tau(cfg.tau).violations(),
        Tuning::CrossValidated { .. } => Hyperparameters::new(1.0, 0.5)
            .with_tau(cfg.tau)
            .violations(),
    };
    if !hp_check.is_empty() {
        let msg = hp_check
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CliError::Invalid(msg));
    }

    let res = experiments::run_scenario(&cfg)?;
    ensure_dir(&a.out_dir)?;
    let mut files = Vec::new();
    if scenario == Scenario::Trajectory {
        files.extend(res.trajectory_files());
    } else {
        files.push(("results.csv".to_string(), res.results_csv()));
        files.push(("summary.csv".to_string(), res.summary_csv()));
    }
    for (name, body) in &files {
        write_atomic(&a.out_dir.join(name), body)?;
    }
    let mut out = String::new();
    writeln!(out, "scenario={}", scenario.as_str()).unwrap();
    writeln!(out, "seed={}", cfg.seed).unwrap();
    writeln!(out, "files={}", files.len()).unwrap();
    for s in res.summary() {
        writeln!(out, "mean_rmse.{}={}", s.estimator.as_str(), s.mean_rmse).unwrap();
    }
    print!("{out}");
    Ok(0)
}

fn cmd_trajectory(a: TrajectoryArgs) -> Result<u8> {
    let mut cfg = ScenarioConfig::defaults(Scenario::Trajectory);
    cfg.n = a.n;
    cfg.p = a.p;
    cfg.reps = 1;
    cfg.seed = effective_seed(a.seed)?;
    cfg.noise = noise_spec(a.noise, a.snr);
    cfg.tuning = Tuning::Fixed { c: a.c, nu: a.nu };
    cfg.tau = a.tau;
    cfg.execution = Execution::Sequential;
    let hp = Hyperparameters::new(a.c, a.nu).with_tau(a.tau).violations();
    if !hp.is_empty() {
        let msg = hp
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CliError::Invalid(msg));
    }
    let res = experiments::run_scenario(&cfg)?;
    ensure_dir(&a.out_dir)?;
    let mut out = String::new();
    for t in &res.trajectories {
        let name = format!("trajectory_{}.csv", t.estimator.as_str());
        write_atomic(&a.out_dir.join(&name), &t.report.trajectory_csv())?;
        writeln!(
            out,
            "iterations.{}={}",
            t.estimator.as_str(),
            t.report.iterations
        )
        .unwrap();
        writeln!(
            out,
            "termination.{}={}",
            t.estimator.as_str(),
            t.report.termination.as_str()
        )
        .unwrap();
    }
    print!("{out}");
    Ok(0)
}

fn cmd_validate(a: ValidateArgs) -> Result<u8> {
    let ts = read_training(&a.problem.train)?;
    let p = ts.n_features();
    let hp = hyperparameters(&a.problem);
    let lc = match plan(&a.problem, p)? {
        Plan::Constrained(lc, _) => lc,
        Plan::Projected(_) => LinearConstraints::none(p),
    };
    let v = validate_problem(&ts, &lc, &hp);
    let mut out = String::new();
    writeln!(out, "valid={}", v.is_empty()).unwrap();
    for x in &v {
        writeln!(out, "violation={x}").unwrap();
    }
    print!("{out}");
    Ok(if v.is_empty() { 0 } else { 2 })
}
