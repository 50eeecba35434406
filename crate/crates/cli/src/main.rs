//! `hdcce` command-line tool: simulate panels, inspect the spectrum, fit the
//! estimators and run Monte Carlo scenarios.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdcce::diagnostics::{eigen_spike_report, projection_quality, re_condition_sample};
use hdcce::estimators::hd_step;
use hdcce::io::{fmt_f64, read_panel_csv, write_deviations, write_run_diagnostics, write_summary, write_x_csv, write_y_csv};
use hdcce::montecarlo::{run_scenario, summarize, EstimatorKind, Scenario, ScenarioSpec};
use hdcce::solvers::LassoOptions;
use hdcce::spectral::scree_rows;
use hdcce::{
    default_tau, estimate_cce_pooled, estimate_hdcce, estimate_oracle, khat_threshold, ktilde_ratio, simulate_panel,
    spectral_summary, transform_panel, EstimatorOptions, FitReport, HdcceError, LambdaRule, Method, PanelDataset,
    SimulationConfig,
};
use nalgebra::DMatrix;
use serde_json::{json, Value};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(name = "hdcce", version, about = "High-dimensional CCE estimation for panels with interactive fixed effects")]
struct Cli {
    /// Worker threads for Monte Carlo runs (0 = all cores). `HDCCE_THREADS` overrides it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a panel from the simulation design and write y.csv, x.csv, truth.json.
    Simulate(SimulateArgs),
    /// Print the eigenvalue table of the cross-sectional mean covariance.
    Scree(ScreeArgs),
    /// Fit an estimator to a panel and write fit.json and beta.csv.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo scenario and write deviations.csv, summary.csv, meta.json.
    Mc(McArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON configuration file; flags given alongside it override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long = "T", required_unless_present = "config")]
    t: Option<usize>,
    /// Regressors per factor group; p = 3 + 3d.
    #[arg(long, required_unless_present = "config")]
    d: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Comma-separated coefficient vector of length p.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PanelInput {
    /// Response file: one row per unit, one column per period.
    #[arg(long)]
    y: PathBuf,
    /// Regressor file in long format `unit,time,j,value`.
    #[arg(long)]
    x: PathBuf,
}

#[derive(Args)]
struct ScreeArgs {
    #[command(flatten)]
    input: PanelInput,
    /// Threshold share for K-hat: tau = alpha_tau * (largest eigenvalue).
    #[arg(long, default_value_t = 0.05)]
    alpha_tau: f64,
    /// Unexplained-variance share for the variance-ratio count.
    #[arg(long, default_value_t = 0.05)]
    alpha_ratio: f64,
    /// 1-based columns used to form the cross-sectional means.
    #[arg(long, value_delimiter = ',')]
    raw_columns: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lasso,
    Ls,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Hd,
    Oracle,
    Cce,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: PanelInput,
    #[arg(long, value_enum, default_value = "lasso")]
    method: MethodArg,
    /// Factor projection: estimated (hd), true factors (oracle, needs --truth) or classical pooled CCE.
    #[arg(long, value_enum, default_value = "hd")]
    projection: ProjectionArg,
    /// truth.json holding the factor matrix, for --projection oracle.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Fixed penalty; overrides cross-validation.
    #[arg(long, conflicts_with_all = ["cv", "effective_noise"])]
    lambda: Option<f64>,
    /// Number of cross-validation folds (the default penalty rule).
    #[arg(long, default_value_t = 10)]
    cv: usize,
    /// Choose the penalty as this quantile of the simulated effective noise.
    #[arg(long, conflicts_with = "cv")]
    effective_noise: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    nsim: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha_tau: f64,
    /// Use this many factors instead of the threshold count.
    #[arg(long)]
    k: Option<usize>,
    /// 1-based columns used to build the projection.
    #[arg(long, value_delimiter = ',')]
    raw_columns: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Also write diagnostics.csv.
    #[arg(long)]
    diagnostics: bool,
    /// Sampled directions for the restricted-eigenvalue diagnostic.
    #[arg(long, default_value_t = 1000)]
    re_samples: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value = "custom")]
    scenario: String,
    #[arg(long)]
    n: usize,
    #[arg(long = "T")]
    t: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated list of hd_lasso, hd_ls, oracle_lasso, oracle_ls, cce.
    #[arg(long, value_delimiter = ',', default_value = "hd_lasso,oracle_lasso")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha_tau: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Also write per-run diagnostics.csv.
    #[arg(long)]
    diagnostics: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<HdcceError> for Failure {
    fn from(e: HdcceError) -> Self {
        let msg = e.to_string();
        match e {
            HdcceError::InvalidConfig(_) | HdcceError::NotPositiveDefinite { .. } => Self::Config(msg),
            HdcceError::Dimension(_) | HdcceError::NonFinite { .. } | HdcceError::NonFiniteInput(_) | HdcceError::Data(_) => {
                Self::Data(msg)
            }
            HdcceError::ZeroSpectrum | HdcceError::Numerical(_) => Self::Numeric(msg),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn config_err(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{context}: {e}"))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| config_err(&path.display().to_string(), e))
}

fn finish(mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|e| config_err("write", e))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> CliResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| config_err(name, e))?;
    writeln!(w).map_err(|e| config_err(name, e))?;
    finish(w)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| config_err(&dir.display().to_string(), e))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn read_panel(input: &PanelInput) -> CliResult<PanelDataset> {
    let open = |p: &Path| File::open(p).map_err(|e| config_err(&p.display().to_string(), e));
    Ok(read_panel_csv(open(&input.y)?, open(&input.x)?)?)
}

fn zero_based(cols: &Option<Vec<usize>>) -> CliResult<Option<Vec<usize>>> {
    match cols {
        None => Ok(None),
        Some(c) if c.contains(&0) => Err(Failure::Config("column indices are 1-based".into())),
        Some(c) => Ok(Some(c.iter().map(|&j| j - 1).collect())),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
            serde_json::from_str::<SimulationConfig>(&text).map_err(|e| config_err("config", e))?
        }
        None => SimulationConfig::new(
            args.n.expect("required by clap"),
            args.t.expect("required by clap"),
            args.d.expect("required by clap"),
            DEFAULT_SEED,
        ),
    };
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(t) = args.t {
        config.t = t;
    }
    if let Some(d) = args.d {
        config.d = d;
    }
    if let Some(rho) = args.rho {
        config.rho = rho;
    }
    if let Some(beta) = &args.beta {
        config.beta = Some(beta.clone());
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (panel, truth) = simulate_panel(&config)?;
    ensure_dir(&args.out)?;
    let mut w = create(&args.out, "y.csv")?;
    write_y_csv(&panel, &mut w)?;
    finish(w)?;
    let mut w = create(&args.out, "x.csv")?;
    write_x_csv(&panel, &mut w)?;
    finish(w)?;
    let truth_json = json!({
        "config": config,
        "p": config.p(),
        "beta": config.beta_vec(),
        "factors": matrix_rows(&truth.factors),
        "gamma": matrix_rows(&truth.gamma),
        "loadings": truth.loadings.iter().map(matrix_rows).collect::<Vec<_>>(),
    });
    write_json(&args.out, "truth.json", &truth_json)?;
    log::info!("wrote n = {}, T = {}, p = {} panel to {}", panel.n, panel.t, panel.p, args.out.display());
    Ok(())
}

fn cmd_scree(args: &ScreeArgs) -> CliResult<()> {
    let panel = read_panel(&args.input)?;
    let mut xbar = panel.cross_sectional_means();
    if let Some(cols) = zero_based(&args.raw_columns)? {
        if cols.iter().any(|&c| c >= panel.p) {
            return Err(Failure::Config(format!("raw columns must lie in 1..{}", panel.p)));
        }
        xbar = xbar.select_columns(&cols);
    }
    let s = spectral_summary(&xbar)?;
    let ev = s.eigvals.as_slice();
    let tau = default_tau(ev, args.alpha_tau)?;
    let k_hat = khat_threshold(ev, tau);
    let k_tilde = ktilde_ratio(ev, args.alpha_ratio)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let out = |e: std::io::Error| config_err("stdout", e);
    writeln!(w, "k,eigval,share,cumshare").map_err(out)?;
    for (k, v, share, cum) in scree_rows(ev) {
        writeln!(w, "{k},{},{},{}", fmt_f64(v), fmt_f64(share), fmt_f64(cum)).map_err(out)?;
    }
    eprintln!("k_hat = {k_hat} (tau = {tau:e}, alpha_tau = {}); k_tilde = {k_tilde} (alpha = {})", args.alpha_tau, args.alpha_ratio);
    Ok(())
}

fn read_factors(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Data(format!("truth file: {e}")))?;
    let rows: Vec<Vec<f64>> = serde_json::from_value(v["factors"].clone())
        .map_err(|e| Failure::Data(format!("truth file has no factor matrix: {e}")))?;
    let t = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if t == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Failure::Data("factor matrix in truth file is empty or ragged".into()));
    }
    Ok(DMatrix::from_fn(t, k, |i, j| rows[i][j]))
}

fn estimator_options(args: &EstimateArgs) -> CliResult<EstimatorOptions> {
    let method = match args.method {
        MethodArg::Ls => Method::LeastSquares,
        MethodArg::Lasso => Method::Lasso {
            lambda_rule: match (args.lambda, args.effective_noise) {
                (Some(lambda), _) => LambdaRule::Fixed { lambda },
                (None, Some(q)) => LambdaRule::EffectiveNoise { q, nsim: args.nsim, noise_sd: args.noise_sd },
                (None, None) => LambdaRule::Cv { folds: args.cv },
            },
        },
    };
    Ok(EstimatorOptions {
        method,
        alpha_tau: args.alpha_tau,
        k_override: args.k,
        raw_columns: zero_based(&args.raw_columns)?,
        seed: args.seed.unwrap_or(DEFAULT_SEED),
        lasso: LassoOptions { tol: args.tol, max_iter: args.max_iter, ..Default::default() },
    })
}

/// `metric,value` rows describing the estimated projection and design.
fn diagnostic_rows(panel: &PanelDataset, opts: &EstimatorOptions, fit: &FitReport, samples: usize) -> CliResult<Vec<(String, f64)>> {
    let step = hd_step(panel, opts.alpha_tau, opts.k_override, opts.raw_columns.as_deref())?;
    let mut rows = vec![("k_hat".to_string(), step.k_hat as f64)];
    for (k, v) in step.spectral.eigvals.iter().take(5).enumerate() {
        rows.push((format!("eigval_{}", k + 1), *v));
    }
    if let Ok(spike) = eigen_spike_report(step.spectral.eigvals.as_slice(), step.k_hat) {
        rows.push(("gap_ratio".into(), spike.gap_ratio));
        rows.push(("head_over_p".into(), spike.head_over_p));
    }
    let q = projection_quality(&step.projection, &DMatrix::zeros(panel.t, 0));
    rows.push(("projection_sym_err".into(), q.sym_err));
    rows.push(("projection_idem_err".into(), q.idem_err));
    let tp = transform_panel(&step.projection, panel)?;
    let index_set: Vec<usize> =
        if fit.active_set.is_empty() { (0..panel.p.min(3)).collect() } else { fit.active_set.clone() };
    let re = re_condition_sample(&tp.x, &index_set, samples, opts.seed)?;
    rows.push(("re_index_set_size".into(), index_set.len() as f64));
    // Sampled, so an upper bound on the true constant, not a certificate.
    rows.push(("re_phi_sampled_min".into(), re.phi_lower));
    Ok(rows)
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let panel = read_panel(&args.input)?;
    let opts = estimator_options(args)?;
    let fit = match args.projection {
        ProjectionArg::Hd => estimate_hdcce(&panel, &opts)?,
        ProjectionArg::Oracle => {
            let path = args.truth.as_ref().ok_or_else(|| Failure::Config("--projection oracle needs --truth".into()))?;
            estimate_oracle(&panel, &read_factors(path)?, &opts)?
        }
        ProjectionArg::Cce => estimate_cce_pooled(&panel)?,
    };
    ensure_dir(&args.out)?;
    let fit_json = json!({
        "beta_hat": fit.beta_hat,
        "method": fit.method,
        "k_used": fit.k_used,
        "lambda_used": fit.lambda_used,
        "projection_kind": fit.projection_kind,
        "active_set": fit.active_set.iter().map(|j| j + 1).collect::<Vec<_>>(),
        "objective": fit.objective,
        "diagnostics": fit.diagnostics,
        "options": {
            "method": opts.method,
            "alpha_tau": opts.alpha_tau,
            "k_override": opts.k_override,
            "raw_columns": args.raw_columns,
            "seed": opts.seed,
            "tol": opts.lasso.tol,
            "max_iter": opts.lasso.max_iter,
        },
        "n": panel.n,
        "T": panel.t,
        "p": panel.p,
    });
    write_json(&args.out, "fit.json", &fit_json)?;
    let mut w = create(&args.out, "beta.csv")?;
    let io = |e: std::io::Error| config_err("beta.csv", e);
    writeln!(w, "j,beta_hat").map_err(io)?;
    for (j, b) in fit.beta_hat.iter().enumerate() {
        writeln!(w, "{},{}", j + 1, fmt_f64(*b)).map_err(io)?;
    }
    finish(w)?;
    if args.diagnostics {
        let rows = diagnostic_rows(&panel, &opts, &fit, args.re_samples)?;
        let mut w = create(&args.out, "diagnostics.csv")?;
        let io = |e: std::io::Error| config_err("diagnostics.csv", e);
        writeln!(w, "metric,value").map_err(io)?;
        for (name, v) in rows {
            writeln!(w, "{name},{}", fmt_f64(v)).map_err(io)?;
        }
        finish(w)?;
    }
    for warning in &fit.diagnostics.warnings {
        log::warn!("{warning}");
    }
    if !fit.diagnostics.converged {
        return Err(Failure::Numeric("solver did not converge; results written but unreliable".into()));
    }
    Ok(())
}

fn cmd_mc(args: &McArgs, threads: usize) -> CliResult<()> {
    let label: Scenario = args.scenario.parse()?;
    let estimators = args.estimators.iter().map(|s| s.parse::<EstimatorKind>()).collect::<Result<Vec<_>, _>>()?;
    let mut spec = ScenarioSpec::new(label, args.n, args.t, args.p, estimators, args.runs, args.seed.unwrap_or(DEFAULT_SEED));
    spec.rho = args.rho;
    spec.alpha_tau = args.alpha_tau;
    spec.cv_folds = args.folds;
    spec.lasso_tol = args.tol;
    spec.lasso_max_iter = args.max_iter;
    let report = run_scenario(&spec)?;
    let table = summarize(&report);
    ensure_dir(&args.out)?;
    let mut w = create(&args.out, "deviations.csv")?;
    write_deviations(&report, &mut w)?;
    finish(w)?;
    let mut w = create(&args.out, "summary.csv")?;
    write_summary(&table, &mut w)?;
    finish(w)?;
    if args.diagnostics {
        let mut w = create(&args.out, "diagnostics.csv")?;
        write_run_diagnostics(&report, &mut w)?;
        finish(w)?;
    }
    let errors: Vec<Value> = report
        .runs
        .iter()
        .flat_map(|r| {
            r.fits.iter().zip(&spec.estimators).filter_map(move |(f, e)| {
                f.as_ref().err().map(|msg| json!({ "run": r.run, "estimator": e.name(), "error": msg }))
            })
        })
        .collect();
    let meta = json!({
        "spec": spec,
        "coordinates": report.coordinates,
        "excluded": spec.estimators.iter().map(|&e| (e.name().to_string(), json!(report.n_excluded(e)))).collect::<serde_json::Map<_, _>>(),
        "errors": errors,
        "threads": threads,
        "quantile_type": 7,
        "versions": { "hdcce": env!("CARGO_PKG_VERSION") },
    });
    write_json(&args.out, "meta.json", &meta)?;
    Ok(())
}

fn thread_count(flag: usize) -> CliResult<usize> {
    match std::env::var("HDCCE_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Config(format!("HDCCE_THREADS = '{v}' is not a count"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = thread_count(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| config_err("thread pool", e))?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Scree(a) => cmd_scree(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Mc(a) => cmd_mc(a, threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hdcce: {f}");
            ExitCode::from(f.code())
        }
    }
}
