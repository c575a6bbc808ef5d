//! `knotroot` command-line front end.
//!
//! Every command writes its report to the supplied writer and returns the
//! process exit code: 0 on success, 2 for bad flags or design files, 3 when
//! input data cannot be ingested and 4 when the computation fails. Errors are
//! reported on the error writer as a single JSON object.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use knotroot::adf::{variance_profile, LagRule, DEFAULT_BANDWIDTH};
use knotroot::bootstrap::{run_bootstrap_kind, BootstrapConfig, Multiplier, PStar, QRule};
use knotroot::data::{read_csv, RowSelection};
use knotroot::knot::{tau_breve_statistic, tau_statistic, KMax, StatisticKind, TestConfig, TestResult};
use knotroot::limit::{asymptotic_decision, load_or_simulate, simulate_limit_null, write_table, LimitSimConfig, LimitTable, HEADLINE_PROBS};
use knotroot::linalg::{lstsq, Matrix};
use knotroot::sim::{parse_design, run_mc, McOptions, DESK_PRESET, FULL_GRID};
use knotroot::{DetrendSpec, Error, Series};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INGEST: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

/// Schema tag of the JSON test report.
pub const TEST_SCHEMA: &str = "knotroot.test/1";

#[derive(Debug, Parser)]
#[command(name = "knotroot", version, about = "Adaptive-Lasso activation-knot unit root tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a CSV column for a unit root.
    Test(TestArgs),
    /// Run a Monte Carlo design and write rejection-rate tables.
    Simulate(SimulateArgs),
    /// Simulate the null limit distribution and write a critical-value table.
    Limitsim(LimitArgs),
    /// Export the estimated variance profile of a CSV column.
    Varprofile(VarProfileArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Det {
    None,
    Constant,
    Trend,
}

impl From<Det> for DetrendSpec {
    fn from(d: Det) -> Self {
        match d {
            Det::None => DetrendSpec::None,
            Det::Constant => DetrendSpec::Constant,
            Det::Trend => DetrendSpec::Trend,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq)]
pub enum TestKind {
    Tau,
    TauBreve,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq)]
pub enum MethodArg {
    Asymptotic,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq)]
pub enum OutFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MultiplierArg {
    Gaussian,
    Rademacher,
    Mammen,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LagArg {
    Rsmaic,
    Maic,
}

/// Column selection shared by `test` and `varprofile`.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Numeric column to analyse.
    #[arg(long)]
    pub column: String,
    /// First row of the subsample: a zero-based row index, or a label of
    /// `--date-column` when that flag is given.
    #[arg(long)]
    pub from: Option<String>,
    /// Last row of the subsample (inclusive), same conventions as `--from`.
    #[arg(long)]
    pub to: Option<String>,
    /// Label column used to resolve `--from` and `--to`.
    #[arg(long)]
    pub date_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "constant")]
    pub det: Det,
    #[arg(long, value_enum, default_value = "tau")]
    pub test: TestKind,
    #[arg(long, value_enum, default_value = "bootstrap")]
    pub method: MethodArg,
    /// Bootstrap replications.
    #[arg(long = "B", default_value_t = 4999)]
    pub b: usize,
    /// Recolouring lag order: auto (same as p), 0, or an integer.
    #[arg(long, default_value = "auto")]
    pub q: String,
    /// Lag order of bootstrap samples: auto (re-selected) or an integer.
    #[arg(long, default_value = "auto")]
    pub p_star: String,
    /// Maximum lag order: auto or an integer.
    #[arg(long, default_value = "auto")]
    pub kmax: String,
    #[arg(long, value_enum, default_value = "rsmaic")]
    pub lag: LagArg,
    /// Fix the lag order instead of selecting it.
    #[arg(long)]
    pub fixed_lag: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub multiplier: MultiplierArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Nominal level of the reported decision.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma2: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub out: OutFormat,
    /// Directory for cached limit tables (asymptotic method).
    #[arg(long)]
    pub limit_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub limit_steps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub limit_reps: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Design file (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    pub design: Option<PathBuf>,
    /// Built-in design: `desk` or `full`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Directory receiving `report.csv` and `report.md`.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Per-cell result cache; defaults to `<out-dir>/cells`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Directory for cached limit tables; defaults to `<out-dir>/limit`.
    #[arg(long)]
    pub limit_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long, value_enum, default_value = "constant")]
    pub det: Det,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Non-centrality of the Ornstein-Uhlenbeck limit (0 for critical values).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VarProfileArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure carrying the exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    fn ingest(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_INGEST,
            kind: "ingestion",
            message: e.to_string(),
        }
    }

    fn compute(e: &Error) -> Self {
        CliError {
            code: EXIT_COMPUTE,
            kind: "computation",
            message: e.to_string(),
        }
    }

    fn output(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_COMPUTE,
            kind: "output",
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind, "message": self.message, "exit_code": self.code }
        })
        .to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name) and run the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = writeln!(err, "{}", CliError::usage(e.to_string().trim_end()).to_json());
            return EXIT_USAGE;
        }
    };
    let outcome = match &cli.command {
        Command::Test(a) => cmd_test(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Limitsim(a) => cmd_limitsim(a, out),
        Command::Varprofile(a) => cmd_varprofile(a, out),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.code
        }
    }
}

fn parse_auto(flag: &str, v: &str) -> CliResult<Option<usize>> {
    if v == "auto" {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| CliError::usage(format!("--{flag} expects `auto` or a non-negative integer, got `{v}`")))
}

/// Read the selected column, applying the subsample.
pub fn load_series(a: &InputArgs) -> CliResult<(Series, usize)> {
    let table = read_csv(&a.input).map_err(CliError::ingest)?;
    let selection = match &a.date_column {
        Some(col) => RowSelection::Labels {
            column: col.clone(),
            from: a.from.clone(),
            to: a.to.clone(),
        },
        None => {
            let idx = |flag: &str, v: &Option<String>| -> CliResult<Option<usize>> {
                v.as_deref()
                    .map(|s| {
                        s.parse().map_err(|_| {
                            CliError::usage(format!("--{flag} expects a row index unless --date-column is given"))
                        })
                    })
                    .transpose()
            };
            RowSelection::Range {
                from: idx("from", &a.from)?,
                to: idx("to", &a.to)?,
            }
        }
    };
    let sub = table.subsample(&selection).map_err(CliError::ingest)?;
    let series = sub.series(&a.column).map_err(CliError::ingest)?;
    Ok((series, sub.n_rows()))
}

#[derive(Serialize)]
struct InputEcho<'a> {
    path: String,
    column: &'a str,
    from: Option<&'a str>,
    to: Option<&'a str>,
    date_column: Option<&'a str>,
    observations: usize,
}

#[derive(Serialize)]
struct ConfigEcho {
    detrend: DetrendSpec,
    test: &'static str,
    method: &'static str,
    gamma1: f64,
    gamma2: f64,
    lag: LagRule,
    kmax: String,
    level: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    limit: Option<LimitSimConfig>,
}

#[derive(Serialize)]
struct Decision {
    level: f64,
    critical_value: f64,
    reject: bool,
}

#[derive(Serialize)]
struct TestReport<'a> {
    schema: &'static str,
    input: InputEcho<'a>,
    config: ConfigEcho,
    result: TestResult,
    decision: Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_replicates: Option<usize>,
}

fn limit_table(cfg: &LimitSimConfig, cache: Option<&Path>) -> knotroot::Result<LimitTable> {
    match cache {
        Some(dir) => load_or_simulate(dir, cfg),
        None => simulate_limit_null(cfg),
    }
}

/// The empirical pipeline: ingest, compute the statistic, attach a p-value
/// from the bootstrap or the limit table, and report.
pub fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::usage("--level must lie in (0, 1)"));
    }
    let k_max = parse_auto("kmax", &a.kmax)?.map_or(KMax::Auto, KMax::Fixed);
    let q = match parse_auto("q", &a.q)? {
        None => QRule::Auto,
        Some(0) => QRule::Zero,
        Some(k) => QRule::Fixed(k),
    };
    let p_star = parse_auto("p-star", &a.p_star)?.map_or(PStar::Auto, PStar::Fixed);
    let lag = match (a.fixed_lag, a.lag) {
        (Some(k), _) => LagRule::Fixed(k),
        (None, LagArg::Maic) => LagRule::Maic,
        (None, LagArg::Rsmaic) => LagRule::Rsmaic {
            bandwidth: DEFAULT_BANDWIDTH,
        },
    };
    let (series, observations) = load_series(&a.input)?;
    let cfg = TestConfig {
        detrend: a.det.into(),
        gamma1: a.gamma1,
        gamma2: a.gamma2,
        lag,
        k_max,
        enrichment: None,
    };
    let kind = match a.test {
        TestKind::Tau => StatisticKind::Tau,
        TestKind::TauBreve => StatisticKind::TauBreve,
    };
    let multiplier = match a.multiplier {
        MultiplierArg::Gaussian => Multiplier::Gaussian,
        MultiplierArg::Rademacher => Multiplier::Rademacher,
        MultiplierArg::Mammen => Multiplier::Mammen,
    };

    let (result, decision, bootstrap, limit, failed) = match a.method {
        MethodArg::Bootstrap => {
            let bs = BootstrapConfig {
                b: a.b,
                q,
                p_star,
                multiplier,
                seed: a.seed,
                alpha: a.level,
                scale_bootstrap_sigma: true,
            };
            let res = run_bootstrap_kind(&series, &cfg, &bs, kind).map_err(|e| CliError::compute(&e))?;
            let decision = Decision {
                level: a.level,
                critical_value: res.cv,
                reject: res.reject,
            };
            (res.observed, decision, Some(bs), None, Some(res.failed))
        }
        MethodArg::Asymptotic => {
            let mut result = match kind {
                StatisticKind::Tau => tau_statistic(&series, &cfg),
                StatisticKind::TauBreve => tau_breve_statistic(&series, &cfg),
            }
            .map_err(|e| CliError::compute(&e))?;
            let lcfg = LimitSimConfig {
                steps: a.limit_steps,
                reps: a.limit_reps,
                detrend: cfg.detrend,
                c: 0.0,
                seed: a.seed,
            };
            let table = limit_table(&lcfg, a.limit_cache.as_deref()).map_err(|e| CliError::compute(&e))?;
            let d = asymptotic_decision(&result, a.level, &table).map_err(|e| CliError::compute(&e))?;
            result.p_value = Some(d.p_value);
            for u in HEADLINE_PROBS {
                result
                    .critical_values
                    .insert(format!("{}", round_level(1.0 - u)), table.quantile(u));
            }
            result.critical_values.insert(format!("{}", a.level), d.critical_value);
            result.provenance.seed = Some(a.seed);
            let decision = Decision {
                level: a.level,
                critical_value: d.critical_value,
                reject: d.reject,
            };
            (result, decision, None, Some(lcfg), None)
        }
    };

    let kmax_label = match k_max {
        KMax::Auto => "auto".to_string(),
        KMax::Fixed(k) => k.to_string(),
    };
    let report = TestReport {
        schema: TEST_SCHEMA,
        input: InputEcho {
            path: a.input.input.display().to_string(),
            column: &a.input.column,
            from: a.input.from.as_deref(),
            to: a.input.to.as_deref(),
            date_column: a.input.date_column.as_deref(),
            observations,
        },
        config: ConfigEcho {
            detrend: cfg.detrend,
            test: kind.as_str(),
            method: match a.method {
                MethodArg::Asymptotic => "asymptotic",
                MethodArg::Bootstrap => "bootstrap",
            },
            gamma1: a.gamma1,
            gamma2: a.gamma2,
            lag,
            kmax: kmax_label,
            level: a.level,
            bootstrap,
            limit,
        },
        result,
        decision,
        failed_replicates: failed,
    };
    write_test_report(&report, a.out, out).map_err(CliError::output)
}

/// `1 - u` without representation noise, e.g. `0.05` rather than `0.050000000000000044`.
fn round_level(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn write_test_report(r: &TestReport, format: OutFormat, out: &mut dyn Write) -> std::io::Result<()> {
    let res = &r.result;
    let p = res.p_value.map(|v| v.to_string()).unwrap_or_default();
    match format {
        OutFormat::Json => {
            let text = serde_json::to_string_pretty(r).map_err(std::io::Error::other)?;
            writeln!(out, "{text}")
        }
        OutFormat::Csv => {
            writeln!(
                out,
                "column,observations,detrend,test,method,statistic,p_value,critical_value,level,reject,lag_p,k_max,q,B,seed"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.input.column,
                r.input.observations,
                res.detrend,
                res.kind.as_str(),
                r.config.method,
                res.statistic,
                p,
                r.decision.critical_value,
                r.decision.level,
                r.decision.reject,
                res.lag_p,
                res.k_max,
                res.provenance.q.map(|v| v.to_string()).unwrap_or_default(),
                res.provenance.b.map(|v| v.to_string()).unwrap_or_default(),
                res.provenance.seed.map(|v| v.to_string()).unwrap_or_default(),
            )
        }
        OutFormat::Text => {
            writeln!(out, "column        {} ({} observations)", r.input.column, r.input.observations)?;
            writeln!(out, "test          {} [{}], detrend {}", res.kind.as_str(), r.config.method, res.detrend)?;
            writeln!(out, "statistic     {}", res.statistic)?;
            writeln!(out, "p-value       {p}")?;
            writeln!(
                out,
                "decision      {} at level {} (critical value {})",
                if r.decision.reject { "reject" } else { "do not reject" },
                r.decision.level,
                r.decision.critical_value
            )?;
            writeln!(out, "lag order     p = {} (k_max = {})", res.lag_p, res.k_max)?;
            if let Some(b) = res.provenance.b {
                writeln!(
                    out,
                    "bootstrap     B = {b}, q = {}, seed = {}",
                    res.provenance.q.unwrap_or_default(),
                    res.provenance.seed.unwrap_or_default()
                )?;
            }
            Ok(())
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let text = match (&a.design, a.preset.as_deref()) {
        (Some(path), _) => std::fs::read_to_string(path).map_err(CliError::ingest)?,
        (None, Some("desk")) => DESK_PRESET.to_string(),
        (None, Some("full")) => FULL_GRID.to_string(),
        (None, Some(other)) => return Err(CliError::usage(format!("unknown preset `{other}`"))),
        (None, None) => return Err(CliError::usage("give --design or --preset")),
    };
    let design = parse_design(&text).map_err(|e| CliError::usage(e.to_string()))?;
    let opts = McOptions {
        cell_cache: Some(a.cache.clone().unwrap_or_else(|| a.out_dir.join("cells"))),
        limit_cache: Some(a.limit_cache.clone().unwrap_or_else(|| a.out_dir.join("limit"))),
        ..McOptions::default()
    };
    let report = run_mc(&design, &opts).map_err(|e| CliError::compute(&e))?;
    std::fs::create_dir_all(&a.out_dir).map_err(CliError::output)?;
    let csv_path = a.out_dir.join("report.csv");
    let md_path = a.out_dir.join("report.md");
    std::fs::write(&csv_path, report.to_csv()).map_err(CliError::output)?;
    std::fs::write(&md_path, report.to_markdown()).map_err(CliError::output)?;
    writeln!(out, "{}", csv_path.display()).map_err(CliError::output)?;
    writeln!(out, "{}", md_path.display()).map_err(CliError::output)?;
    Ok(())
}

pub fn cmd_limitsim(a: &LimitArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = LimitSimConfig {
        steps: a.steps,
        reps: a.reps,
        detrend: a.det.into(),
        c: a.c,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let table = simulate_limit_null(&cfg).map_err(|e| CliError::compute(&e))?;
    std::fs::write(&a.out, write_table(&table)).map_err(CliError::output)?;
    let headline: BTreeMap<String, f64> = table
        .headline()
        .into_iter()
        .map(|(u, q)| (format!("{u}"), q))
        .collect();
    let summary = serde_json::json!({
        "table": a.out.display().to_string(),
        "hash": format!("{:016x}", cfg.hash()),
        "config": cfg,
        "quantiles": headline,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&summary).map_err(CliError::output)?).map_err(CliError::output)
}

/// Residuals of `y_t = a + b y_{t-1} + u_t` by OLS.
pub fn ar1_residuals(y: &[f64]) -> knotroot::Result<Vec<f64>> {
    let n = y.len() - 1;
    let mut x = Matrix::zeros(n, 2);
    for t in 1..=n {
        x.set(t - 1, 0, 1.0);
        x.set(t - 1, 1, y[t - 1]);
    }
    let beta = lstsq(&x, &y[1..])?;
    Ok((1..=n).map(|t| y[t] - beta[0] - beta[1] * y[t - 1]).collect())
}

pub fn cmd_varprofile(a: &VarProfileArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.points < 2 {
        return Err(CliError::usage("--points must be at least 2"));
    }
    let (series, _) = load_series(&a.input)?;
    if series.len() < 4 {
        return Err(CliError::ingest(Error::SeriesTooShort {
            need: 4,
            got: series.len(),
        }));
    }
    let resid = ar1_residuals(series.values()).map_err(|e| CliError::compute(&e))?;
    let profile = variance_profile(&resid).map_err(|e| CliError::compute(&e))?;
    let mut csv = String::from("s,eta_hat,reference\n");
    for (s, eta) in profile.grid(a.points) {
        csv.push_str(&format!("{s},{eta},{s}\n"));
    }
    match &a.out {
        Some(path) => std::fs::write(path, csv).map_err(CliError::output),
        None => out.write_all(csv.as_bytes()).map_err(CliError::output),
    }
}
