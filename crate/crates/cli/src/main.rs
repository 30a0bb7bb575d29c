use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use epkr::centers::{CenterOptions, CenterStrategy};
use epkr::data::{gen_toy, load_csv, load_features, normalize_ball, rmse, Dataset};
use epkr::diagnostics::{eig_battery, norm_battery, EigBattery, NormBattery, DEFAULT_NORM_SLACK};
use epkr::estimators::{FitOptions, Model, Variant};
use epkr::experiment::{
    cv_degree, degree_sweep, lambda_sweep, log_log_slope, size_sweep, toy_table, write_reports_csv,
    write_sweep_csv, LambdaGridKind, MethodSpec, SweepRow, ToyConfig,
};
use epkr::rng::derive_seed;
use epkr::selection::{
    fit_candidate, holdout_select, kfold_cv, linear_grid, log_grid, Params, SelectionConfig, SelectionGrid,
    DEFAULT_HOLDOUT_FRACTION,
};
use epkr::{Error, ErrorKind};

const THREADS_ENV: &str = "EPKR_THREADS";

#[derive(Parser)]
#[command(name = "epkr", version, about = "Polynomial kernel regression with fundamental-system centers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write it as JSON.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Run the toy comparison table.
    ToyTable(ToyTableArgs),
    /// Test error against λ, the degree s, or the sample size m.
    Sweep(SweepArgs),
    /// Eigenvalue-bound and norm-equivalence batteries.
    Diagnostics(DiagArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectMode {
    Cv,
    Holdout,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Linear,
    Log,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepVar {
    Lambda,
    S,
    M,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_str(s).map_err(|e| e.to_string())
}

fn parse_lambda_grid(s: &str) -> Result<LambdaGridKind, String> {
    match s {
        "log" => Ok(LambdaGridKind::Log),
        "arithmetic" => Ok(LambdaGridKind::Arithmetic),
        other => Err(format!("unknown λ grid {other:?}; expected log or arithmetic")),
    }
}

fn parse_strategy(s: &str) -> Result<CenterStrategy, String> {
    CenterStrategy::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct FitArgs {
    /// Generate toy data: sample count and noise variance.
    #[arg(long, num_args = 2, value_names = ["M", "SIGMA2"], conflicts_with = "data")]
    toy: Option<Vec<String>>,
    /// CSV with inputs followed by the target column.
    #[arg(long, required_unless_present = "toy")]
    data: Option<PathBuf>,
    /// First CSV row is a header.
    #[arg(long)]
    header: bool,
    /// Keep file inputs as they are instead of mapping them into the unit ball.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, value_parser = parse_variant)]
    method: Variant,
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Choose parameters by cross-validation or hold-out instead of fixing them.
    #[arg(long, value_enum)]
    select: Option<SelectMode>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_HOLDOUT_FRACTION)]
    split: f64,
    #[arg(long, value_parser = parse_lambda_grid, default_value = "log")]
    lambda_grid: LambdaGridKind,
    #[arg(long, value_parser = parse_strategy, default_value = "uniform")]
    centers: CenterStrategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accept unverified centers and n > m.
    #[arg(long)]
    force: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with d input columns and an optional target column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    no_clip: bool,
    /// Predictions CSV; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ToyArgs {
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    test_m: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma2: f64,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, value_parser = parse_lambda_grid, default_value = "log")]
    lambda_grid: LambdaGridKind,
}

impl ToyArgs {
    fn config(&self) -> ToyConfig {
        ToyConfig {
            m_train: self.m,
            m_test: self.test_m,
            sigma_sq: self.sigma2,
            replicates: self.replicates,
            folds: self.folds,
            seed: self.seed,
            lambda_grid: self.lambda_grid,
        }
    }
}

#[derive(Args)]
struct ToyTableArgs {
    #[command(flatten)]
    toy: ToyArgs,
    /// Comma-separated subset of gkr, pkr, epkr, epkr1, epkrf, epkrg.
    #[arg(long, value_delimiter = ',', default_value = "gkr,pkr,epkr,epkr1")]
    methods: Vec<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    variable: SweepVar,
    #[command(flatten)]
    toy: ToyArgs,
    /// Defaults to cbr-epkr for λ and epkr otherwise.
    #[arg(long, value_parser = parse_variant)]
    method: Option<Variant>,
    /// Fixed degree for λ-sweeps; chosen by cross-validation when absent.
    #[arg(long)]
    s: Option<u32>,
    /// Fixed width for GKR λ-sweeps.
    #[arg(long)]
    delta: Option<f64>,
    /// Explicit grid values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "linear")]
    grid: GridKind,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 50)]
    max_s: u32,
    #[arg(long, default_value_t = 4)]
    smoothness: u32,
    #[arg(long, value_parser = parse_strategy, default_value = "uniform")]
    centers: CenterStrategy,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    /// One eigenvalue battery, e.g. `--eig d=2 s=2 seeds=100`.
    #[arg(long, num_args = 1..)]
    eig: Option<Vec<String>>,
    /// One norm-equivalence battery, e.g. `--norm-equiv s=2 m=600`.
    #[arg(long, num_args = 1..)]
    norm_equiv: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_NORM_SLACK)]
    slack: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    kind: ErrorKind,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    fn code(&self) -> u8 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code())
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::ToyTable(a) => cmd_toy_table(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Diagnostics(a) => cmd_diagnostics(&a),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => write_output(p, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::data(format!("cannot write output: {e}"))),
    }
}

fn load_training(a: &FitArgs) -> CliResult<(Dataset, Option<epkr::data::NormalizationRecord>)> {
    if let Some(toy) = &a.toy {
        let m: usize = toy[0]
            .parse()
            .map_err(|_| Failure::usage(format!("--toy sample count must be an integer, got {:?}", toy[0])))?;
        let sigma_sq: f64 = toy[1]
            .parse()
            .map_err(|_| Failure::usage(format!("--toy noise variance must be a number, got {:?}", toy[1])))?;
        return Ok((gen_toy(m, sigma_sq, a.seed)?, None));
    }
    let path = a.data.as_ref().ok_or_else(|| Failure::usage("either --toy or --data is required"))?;
    let data = load_csv(path, a.header)?;
    if a.no_normalize {
        Ok((data, None))
    } else {
        let (data, rec) = normalize_ball(&data)?;
        Ok((data, Some(rec)))
    }
}

fn fixed_params(a: &FitArgs) -> CliResult<Params> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| Failure::usage(format!("--{flag} is required for {}", a.method)));
    let need_s = || a.s.ok_or_else(|| Failure::usage(format!("--s is required for {}", a.method)));
    Ok(match a.method {
        Variant::Epkr => Params::poly(need_s()?, 0.0),
        Variant::CbrEpkr => Params::poly(need_s()?, need(a.lambda, "lambda")?),
        Variant::Pkr => Params::poly(need_s()?, a.lambda.unwrap_or(0.0)),
        Variant::Gkr => Params::gauss(need(a.delta, "delta")?, a.lambda.unwrap_or(0.0)),
    })
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let (data, normalization) = load_training(a)?;
    let cfg = SelectionConfig {
        centers: CenterOptions::with_strategy(a.centers),
        fit: FitOptions {
            force: a.force,
            ..FitOptions::default()
        },
        ..SelectionConfig::new(a.method)
    };
    let (mut model, params) = match a.select {
        None => {
            let params = fixed_params(a)?;
            let (model, _) = fit_candidate(&data, &params, &cfg, derive_seed(a.seed, &[1]))?;
            (model, params)
        }
        Some(mode) => {
            let mut grid = SelectionGrid::defaults(a.method, data.len(), data.dim())?;
            if a.method != Variant::Epkr {
                grid.lambda_values = a.lambda_grid.values();
            }
            let seed = derive_seed(a.seed, &[2]);
            let sel = match mode {
                SelectMode::Cv => kfold_cv(&data, &grid, &cfg, a.folds, seed)?,
                SelectMode::Holdout => holdout_select(&data, &grid, &cfg, a.split, seed)?,
            };
            (sel.model, sel.params)
        }
    };
    model.normalization = normalization;
    let train = rmse(&model.predict_many(data.inputs(), true)?, data.targets())?;
    let json = serde_json::to_string_pretty(&model).map_err(|e| Failure::numerical(e.to_string()))?;
    write_output(&a.output, json.as_bytes())?;
    println!("method: {}", a.method);
    println!("params: {}", describe(&params));
    println!("TrainRMSE: {train}");
    Ok(())
}

fn describe(p: &Params) -> String {
    let mut parts = Vec::new();
    if let Some(s) = p.s {
        parts.push(format!("s={s}"));
    }
    if let Some(d) = p.delta {
        parts.push(format!("delta={d}"));
    }
    parts.push(format!("lambda={}", p.lambda));
    parts.join(" ")
}

fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.model)
        .map_err(|e| Failure::data(format!("cannot read model {}: {e}", a.model.display())))?;
    let model: Model = serde_json::from_str(&text)
        .map_err(|e| Failure::data(format!("corrupt model file {}: {e}", a.model.display())))?;
    if model.coefficients.len() != model.basis.len() {
        return Err(Failure::data(format!(
            "corrupt model file {}: {} coefficients for {} basis points",
            a.model.display(),
            model.coefficients.len(),
            model.basis.len()
        )));
    }
    let (inputs, targets) = load_features(&a.data, a.header, model.dim())?;
    let inputs = match &model.normalization {
        Some(rec) => rec.apply_points(&inputs)?,
        None => inputs,
    };
    let pred = model.predict_many(&inputs, !a.no_clip)?;
    let mut out = String::from("prediction\n");
    for p in &pred {
        out.push_str(&format!("{p}\n"));
    }
    emit(a.output.as_deref(), out.as_bytes())?;
    if let Some(y) = targets {
        let line = format!("TestRMSE: {}", rmse(&pred, &y)?);
        if a.output.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn method_spec(name: &str) -> CliResult<MethodSpec> {
    let spec = match name.trim().to_ascii_lowercase().as_str() {
        "gkr" => MethodSpec::new("GKR", Variant::Gkr, CenterStrategy::Uniform),
        "pkr" => MethodSpec::new("PKR", Variant::Pkr, CenterStrategy::Uniform),
        "epkr" => MethodSpec::new("EPKR", Variant::Epkr, CenterStrategy::Uniform),
        "epkr1" => MethodSpec::new("EPKR1", Variant::Epkr, CenterStrategy::FirstSamples),
        "epkrf" => MethodSpec::new("EPKRF", Variant::Epkr, CenterStrategy::Equispaced),
        "epkrg" => MethodSpec::new("EPKRG", Variant::Epkr, CenterStrategy::Gaussian),
        other => return Err(Failure::usage(format!("unknown method {other:?}"))),
    };
    Ok(spec)
}

fn cmd_toy_table(a: &ToyTableArgs) -> CliResult<()> {
    let methods = a.methods.iter().map(|m| method_spec(m)).collect::<CliResult<Vec<_>>>()?;
    let results = toy_table(&methods, &a.toy.config())?;
    for r in &results {
        let fit = r.outcomes.iter().map(|o| o.fit_seconds).sum::<f64>() / r.outcomes.len() as f64;
        eprintln!(
            "{}: test_rmse={:.6} train_seconds={:.3} fit_seconds={:.4}",
            r.report.method, r.report.test_rmse, r.report.train_seconds, fit
        );
    }
    let reports: Vec<_> = results.into_iter().map(|r| r.report).collect();
    let mut buf = Vec::new();
    write_reports_csv(&mut buf, &reports)?;
    emit(a.output.as_deref(), &buf)
}

fn sweep_grid(a: &SweepArgs, lo: f64, hi: f64) -> CliResult<Vec<f64>> {
    if let Some(v) = &a.values {
        return Ok(v.clone());
    }
    Ok(match a.grid {
        GridKind::Linear => linear_grid(lo, hi, a.count)?,
        GridKind::Log => log_grid(lo, hi, a.count)?,
    })
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let cfg = a.toy.config();
    let rows: Vec<SweepRow> = match a.variable {
        SweepVar::Lambda => {
            let variant = a.method.unwrap_or(Variant::CbrEpkr);
            let param = match variant {
                Variant::Gkr => a.delta.ok_or_else(|| Failure::usage("--delta is required for a gkr sweep"))?,
                _ => f64::from(match a.s {
                    Some(s) => s,
                    None => cv_degree(&cfg)?,
                }),
            };
            let spec = MethodSpec::new(&variant.name().to_ascii_uppercase(), variant, a.centers);
            lambda_sweep(&spec, param, &sweep_grid(a, 1e-5, 1.0)?, &cfg)?
        }
        SweepVar::S => {
            let variant = a.method.unwrap_or(Variant::Epkr);
            if variant != Variant::Epkr {
                return Err(Failure::usage("degree sweeps support epkr only"));
            }
            let degrees: Vec<u32> = match &a.values {
                Some(v) => v.iter().map(|&x| x as u32).collect(),
                None => (1..=a.max_s).collect(),
            };
            let label = match a.centers {
                CenterStrategy::Uniform => "EPKR",
                CenterStrategy::FirstSamples => "EPKR1",
                CenterStrategy::Equispaced => "EPKRF",
                CenterStrategy::Gaussian => "EPKRG",
            };
            degree_sweep(&MethodSpec::new(label, Variant::Epkr, a.centers), &degrees, &cfg)?
        }
        SweepVar::M => {
            let sizes: Vec<usize> = match &a.values {
                Some(v) => v.iter().map(|&x| x as usize).collect(),
                None => vec![250, 500, 1000, 2000, 4000],
            };
            let rows = size_sweep(&sizes, a.smoothness, &cfg)?;
            let m: Vec<f64> = rows.iter().map(|r| r.value).collect();
            let rmse_slope = log_log_slope(&m, &rows.iter().map(|r| r.test_rmse).collect::<Vec<_>>())?;
            let mse_slope = log_log_slope(&m, &rows.iter().map(|r| r.test_mse).collect::<Vec<_>>())?;
            eprintln!("rmse_slope={rmse_slope:.4} mse_slope={mse_slope:.4}");
            rows
        }
    };
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows)?;
    emit(a.output.as_deref(), &buf)
}

#[derive(Serialize)]
struct DiagReport {
    eig: Vec<EigBattery>,
    norm_equiv: Vec<NormBattery>,
    pass: bool,
}

fn key_values(tokens: &[String], allowed: &[&str]) -> CliResult<Vec<(String, u64)>> {
    tokens
        .iter()
        .flat_map(|t| t.split(',').filter(|p| !p.is_empty()).map(str::to_string).collect::<Vec<_>>())
        .map(|t| {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("expected key=value, got {t:?}")))?;
            if !allowed.contains(&k) {
                return Err(Failure::usage(format!("unknown key {k:?}; expected one of {}", allowed.join(", "))));
            }
            let v: u64 = v
                .parse()
                .map_err(|_| Failure::usage(format!("{k} must be a non-negative integer, got {v:?}")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn lookup(kv: &[(String, u64)], key: &str) -> Option<u64> {
    kv.iter().rev().find(|(k, _)| k == key).map(|(_, v)| *v)
}

fn cmd_diagnostics(a: &DiagArgs) -> CliResult<()> {
    let mut eig_cases: Vec<(usize, u32, usize)> = Vec::new();
    let mut norm_cases: Vec<(u32, Option<usize>, usize)> = Vec::new();
    if let Some(tokens) = &a.eig {
        let kv = key_values(tokens, &["d", "s", "seeds"])?;
        let d = lookup(&kv, "d").ok_or_else(|| Failure::usage("--eig needs d=<dimension>"))?;
        let s = lookup(&kv, "s").ok_or_else(|| Failure::usage("--eig needs s=<degree>"))?;
        eig_cases.push((d as usize, s as u32, lookup(&kv, "seeds").unwrap_or(100) as usize));
    }
    if let Some(tokens) = &a.norm_equiv {
        let kv = key_values(tokens, &["s", "m", "seeds"])?;
        let s = lookup(&kv, "s").ok_or_else(|| Failure::usage("--norm-equiv needs s=<degree>"))?;
        norm_cases.push((s as u32, lookup(&kv, "m").map(|m| m as usize), lookup(&kv, "seeds").unwrap_or(100) as usize));
    }
    if a.eig.is_none() && a.norm_equiv.is_none() {
        for d in [2, 3] {
            for s in 1..=3 {
                eig_cases.push((d, s, 100));
            }
        }
        for s in 1..=3 {
            norm_cases.push((s, None, 100));
        }
    }
    let eig = eig_cases
        .iter()
        .map(|&(d, s, seeds)| eig_battery(s, d, seeds, a.seed))
        .collect::<epkr::Result<Vec<_>>>()?;
    let norm_equiv = norm_cases
        .iter()
        .map(|&(s, m, seeds)| {
            let m = match m {
                Some(m) => m,
                None => 100 * (s as usize + 1),
            };
            norm_battery(s, m, seeds, a.seed, a.slack)
        })
        .collect::<epkr::Result<Vec<_>>>()?;
    let mut failing = Vec::new();
    for b in &eig {
        if !b.pass {
            failing.push(format!("eig d={} s={} ({} of {} seeds violate)", b.d, b.s, b.violations, b.seeds));
        }
    }
    for b in &norm_equiv {
        if !b.pass {
            failing.push(format!(
                "norm-equiv s={} m={} (pass fraction {:.2}, mean ratio {:.3})",
                b.s, b.m, b.pass_fraction, b.mean_ratio
            ));
        }
    }
    let report = DiagReport {
        pass: failing.is_empty(),
        eig,
        norm_equiv,
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::numerical(e.to_string()))?;
    json.push('\n');
    emit(a.output.as_deref(), json.as_bytes())?;
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure::numerical(format!("invariant failures: {}", failing.join("; "))))
    }
}
