//! `varflex` command-line driver.
//!
//! Exit codes: 0 success, 1 output or internal failure, 2 parse or domain
//! error, 3 insufficient data, 4 solver failure, 5 validation failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use varflex::forecast::{self, ErrorModel, ForecastError};
use varflex::montecarlo::{McCase, McConfig, McError, McReport, Sampling};
use varflex::network::NetworkError;
use varflex::opf::{OpfError, VoltageLimits};
use varflex::powerflow::{solve_pf, PfError};
use varflex::report::{render_svg, InputRecord, RunManifest};
use varflex::sweep::{self, DerConfig, DispatchFile, Profiles, RegionStatus, SweepError, SweepOptions, TableRow};
use varflex::{load_network, NetworkModel, Phase};

const THREADS_ENV: &str = "VARFLEX_THREADS";

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        Self::usage(format!("network: {e}"))
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        let code = match e {
            ForecastError::InsufficientData { .. } | ForecastError::EmptyAfterCleaning => 3,
            _ => 2,
        };
        Self::new(code, e.to_string())
    }
}

impl From<OpfError> for CliError {
    fn from(e: OpfError) -> Self {
        let code = match e {
            OpfError::Solver(_) | OpfError::PostCheck(_) => 4,
            _ => 2,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Forecast(inner) => inner.into(),
            SweepError::Opf(inner) => inner.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Forecast(inner) => inner.into(),
            McError::Opf(inner) => inner.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<PfError> for CliError {
    fn from(e: PfError) -> Self {
        let code = if matches!(e, PfError::NotConverged { .. }) { 4 } else { 2 };
        Self::new(code, e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "varflex",
    version,
    about = "Reactive-power flexibility regions of distribution feeders under solar uncertainty"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the binned forecast-error model from hourly history.
    FitErrors(FitErrorsArgs),
    /// Flexibility regions for 24 hours at each probability level.
    Sweep(SweepArgs),
    /// Monte Carlo check of dispatches against the inverter chance constraint.
    Validate(ValidateArgs),
    /// Nonlinear power flow for one set of injections.
    Pf(PfArgs),
    /// Re-render the band plot from a sweep table.
    Plot(PlotArgs),
}

#[derive(Args, Serialize)]
struct FitErrorsArgs {
    /// Hourly history CSV (timestamp,forecast_kw,actual_kw,capacity_kw).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_count: Option<usize>,
    /// Error-model JSON to write.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Manifest of an earlier run; flags given here take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitErrorsParams {
    history: PathBuf,
    bins: usize,
    min_count: usize,
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<PathBuf>,
    /// 24-hour profile CSV (hour,load_mult,solar_forecast_norm).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    profiles: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    error_model: Option<PathBuf>,
    /// DER placement JSON; equal units at every loaded node-phase when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    der_config: Option<PathBuf>,
    /// Comma-separated probability levels.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    v_lo: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    v_hi: Option<f64>,
    /// Table CSV to write.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    svg: Option<PathBuf>,
    /// Per (hour, level) dispatch detail JSON to write.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dispatch: Option<PathBuf>,
    /// Solve hours one after another.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    serial: bool,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepParams {
    network: PathBuf,
    profiles: PathBuf,
    error_model: PathBuf,
    der_config: Option<PathBuf>,
    levels: Vec<f64>,
    v_lo: f64,
    v_hi: f64,
    out: PathBuf,
    svg: Option<PathBuf>,
    dispatch: Option<PathBuf>,
    serial: bool,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    /// Dispatch JSON written by `sweep --dispatch`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dispatch: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    error_model: Option<PathBuf>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Risk level for every checked record; defaults to 1 - P of each record.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    /// Only check records at this probability level.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<f64>,
    /// Only check these hours (comma-separated).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    hours: Option<Vec<u32>>,
    /// Re-solve the nonlinear power flow per sample and count voltage violations.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    check_voltages: bool,
    /// Draw errors independently per DER instead of one shared draw per sample.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    independent: bool,
    /// Reports JSON to write; stdout when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValidateParams {
    dispatch: PathBuf,
    network: PathBuf,
    error_model: PathBuf,
    n: usize,
    seed: u64,
    alpha: Option<f64>,
    probability: Option<f64>,
    hours: Option<Vec<u32>>,
    check_voltages: bool,
    independent: bool,
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PfArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    load_mult: f64,
    /// Generation CSV (bus,phase,p_kw,q_kvar); none when omitted.
    #[arg(long)]
    injections: Option<PathBuf>,
    #[arg(long, default_value_t = varflex::powerflow::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = varflex::powerflow::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Voltage CSV to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Table CSV written by `sweep`.
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Defaults, then manifest parameters, then explicit flags.
fn resolve<A: Serialize, P: DeserializeOwned>(
    command: &str,
    defaults: Value,
    args: &A,
    config: Option<&Path>,
) -> CliResult<P> {
    let mut merged: Map<String, Value> = match defaults {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let manifest = RunManifest::from_json_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        if manifest.command != command {
            return Err(CliError::usage(format!(
                "config {} was written by `{}`, not `{command}`",
                path.display(),
                manifest.command
            )));
        }
        merged.extend(manifest.params);
    }
    if let Value::Object(flags) = serde_json::to_value(args).expect("arguments serialize") {
        merged.extend(flags);
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::usage(format!("missing or invalid parameter: {e}")))
}

fn params_map<P: Serialize>(params: &P) -> BTreeMap<String, Value> {
    match serde_json::to_value(params).expect("parameters serialize") {
        Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

fn hash_input(manifest: &mut RunManifest, name: &str, path: &Path) -> CliResult<()> {
    let rec =
        InputRecord::hash_file(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    manifest.inputs.insert(name.into(), rec);
    Ok(())
}

fn write_output(manifest: &mut RunManifest, name: &str, path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::new(1, format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::new(1, format!("cannot write {}: {e}", path.display())))?;
    manifest.outputs.insert(
        name.into(),
        InputRecord { path: path.display().to_string(), sha256: varflex::report::sha256_hex(text.as_bytes()) },
    );
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_manifest(manifest: &RunManifest, primary: &Path) -> CliResult<()> {
    let path = RunManifest::path_for(primary);
    std::fs::write(&path, manifest.to_json_string())
        .map_err(|e| CliError::new(1, format!("cannot write {}: {e}", path.display())))
}

fn cmd_fit_errors(args: &FitErrorsArgs) -> CliResult<()> {
    let defaults = serde_json::json!({ "bins": forecast::DEFAULT_BINS, "min_count": forecast::DEFAULT_MIN_COUNT });
    let p: FitErrorsParams = resolve("fit-errors", defaults, args, args.config.as_deref())?;
    let mut manifest = RunManifest::new("fit-errors");
    hash_input(&mut manifest, "history", &p.history)?;
    manifest.params = params_map(&p);

    let records = forecast::read_history_csv(&p.history)?;
    let pairs = forecast::clean_and_normalize(&records)?;
    let model = forecast::fit_error_model(&pairs, p.bins, p.min_count)?;
    print!("{}", model.summary());
    write_output(&mut manifest, "error_model", &p.out, &model.to_json_string())?;
    write_manifest(&manifest, &p.out)
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let defaults = serde_json::json!({
        "der_config": null,
        "levels": sweep::DEFAULT_P_LEVELS,
        "v_lo": VoltageLimits::default().v_lo,
        "v_hi": VoltageLimits::default().v_hi,
        "svg": null,
        "dispatch": null,
        "serial": false,
    });
    let p: SweepParams = resolve("sweep", defaults, args, args.config.as_deref())?;
    sweep::validate_levels(&p.levels)?;
    if !(p.v_lo > 0.0 && p.v_lo < p.v_hi) {
        return Err(CliError::usage(format!(
            "voltage limits must satisfy 0 < v_lo < v_hi, got {} and {}",
            p.v_lo, p.v_hi
        )));
    }
    let mut manifest = RunManifest::new("sweep");
    hash_input(&mut manifest, "network", &p.network)?;
    hash_input(&mut manifest, "profiles", &p.profiles)?;
    hash_input(&mut manifest, "error_model", &p.error_model)?;
    if let Some(path) = &p.der_config {
        hash_input(&mut manifest, "der_config", path)?;
    }
    manifest.params = params_map(&p);

    let net = load_network(&p.network)?;
    let profiles = Profiles::load(&p.profiles)?;
    let model = ErrorModel::load(&p.error_model)?;
    let der_config = match &p.der_config {
        Some(path) => DerConfig::load(path)?,
        None => DerConfig::default(),
    };
    let ders = der_config.build(&net, &profiles)?;
    log::info!("{} DERs, {} node-phases", ders.len(), net.n_node_phases());

    let opts = SweepOptions { limits: VoltageLimits { v_lo: p.v_lo, v_hi: p.v_hi }, parallel: !p.serial };
    let entries = sweep::sweep(&net, &model, &profiles, &ders, &p.levels, opts)?;
    let rows: Vec<TableRow> = entries.iter().map(TableRow::from).collect();
    write_output(&mut manifest, "table", &p.out, &sweep::write_table_csv(&rows))?;
    if let Some(svg) = &p.svg {
        write_output(&mut manifest, "svg", svg, &render_svg(&rows))?;
    }
    if let Some(path) = &p.dispatch {
        let detail = DispatchFile::from_sweep(&net, &ders, &entries);
        write_output(&mut manifest, "dispatch", path, &detail.to_json_string())?;
    }
    write_manifest(&manifest, &p.out)?;

    let mut failed = 0;
    for e in &entries {
        match e.status {
            RegionStatus::Optimal => {}
            RegionStatus::Infeasible => eprintln!(
                "warning: hour {} P={} infeasible: {}",
                e.hour,
                e.probability,
                e.message.as_deref().unwrap_or("")
            ),
            RegionStatus::SolverFailure => {
                failed += 1;
                eprintln!(
                    "error: hour {} P={} solver failure: {}",
                    e.hour,
                    e.probability,
                    e.message.as_deref().unwrap_or("")
                );
            }
        }
    }
    if failed > 0 {
        return Err(CliError::new(4, format!("{failed} solves failed")));
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    let defaults = serde_json::json!({
        "n": 10_000,
        "seed": 1,
        "alpha": null,
        "probability": null,
        "hours": null,
        "check_voltages": false,
        "independent": false,
        "out": null,
    });
    let p: ValidateParams = resolve("validate", defaults, args, args.config.as_deref())?;
    let mut manifest = RunManifest::new("validate");
    hash_input(&mut manifest, "dispatch", &p.dispatch)?;
    hash_input(&mut manifest, "network", &p.network)?;
    hash_input(&mut manifest, "error_model", &p.error_model)?;
    manifest.params = params_map(&p);

    let net = load_network(&p.network)?;
    let model = ErrorModel::load(&p.error_model)?;
    let detail = DispatchFile::load(&p.dispatch)?;

    let selected: Vec<_> = detail
        .records
        .iter()
        .filter(|r| p.probability.is_none_or(|pr| (r.probability - pr).abs() < 1e-12))
        .filter(|r| p.hours.as_ref().is_none_or(|h| h.contains(&r.hour)))
        .collect();
    if selected.is_empty() {
        return Err(CliError::usage("no dispatch records match the selection"));
    }
    let mut reports: Vec<McReport> = Vec::new();
    for rec in selected {
        let Some(case) = McCase::from_record(rec) else {
            log::warn!("hour {} P={} has no dispatch ({:?}); skipped", rec.hour, rec.probability, rec.status);
            continue;
        };
        let cfg = McConfig {
            n_samples: p.n,
            seed: p.seed,
            alpha: p.alpha.unwrap_or(1.0 - rec.probability),
            check_voltages: p.check_voltages,
            sampling: if p.independent { Sampling::Independent } else { Sampling::Shared },
            limits: VoltageLimits::default(),
        };
        let report = varflex::validate_fr(&case, &net, &model, &cfg)?;
        log::info!(
            "hour {} P={}: rate {} (alpha {} + {})",
            report.hour,
            report.probability,
            report.hardware_violation_rate,
            cfg.alpha,
            report.ci_halfwidth
        );
        reports.push(report);
    }
    let text = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    match &p.out {
        Some(path) => {
            write_output(&mut manifest, "reports", path, &text)?;
            write_manifest(&manifest, path)?;
        }
        None => print!("{text}"),
    }
    let failed: Vec<String> =
        reports.iter().filter(|r| !r.pass).map(|r| format!("{}@{}", r.hour, r.probability)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(5, format!("violation rate above bound for hour@P {}", failed.join(", "))))
    }
}

#[derive(Deserialize)]
struct InjectionRow {
    bus: String,
    phase: Phase,
    p_kw: f64,
    q_kvar: f64,
}

fn read_injections(net: &NetworkModel, path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let n = net.n_node_phases();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    for row in rdr.deserialize::<InjectionRow>() {
        let row = row.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let bus = net.bus_index(&row.bus).ok_or_else(|| CliError::usage(format!("unknown bus {:?}", row.bus)))?;
        let idx = net.node_phase_index(varflex::NodePhase { bus, phase: row.phase }).ok_or_else(|| {
            CliError::usage(format!("bus {:?} has no phase {} (or is the slack)", row.bus, row.phase))
        })?;
        p[idx] += net.to_pu_power(row.p_kw);
        q[idx] += net.to_pu_power(row.q_kvar);
    }
    Ok((p, q))
}

fn cmd_pf(args: &PfArgs) -> CliResult<()> {
    if !(args.load_mult >= 0.0) {
        return Err(CliError::usage(format!("load multiplier {} must be nonnegative", args.load_mult)));
    }
    let net = load_network(&args.network)?.scaled_loads(args.load_mult);
    let (p, q) = match &args.injections {
        Some(path) => read_injections(&net, path)?,
        None => (vec![0.0; net.n_node_phases()], vec![0.0; net.n_node_phases()]),
    };
    let sol = solve_pf(&net, &p, &q, args.tol, args.max_iter)?;
    if !sol.converged {
        return Err(PfError::NotConverged { iterations: sol.iterations, mismatch: sol.max_mismatch }.into());
    }
    let mut text = String::from("bus,phase,v_mag_pu,v_angle_deg\n");
    for np in net.node_phases() {
        let v = sol.v[np.bus][np.phase.index()];
        text.push_str(&format!(
            "{},{},{},{}\n",
            net.buses[np.bus].id,
            np.phase,
            sweep::fmt_sig6(v.norm()),
            sweep::fmt_sig6(v.arg().to_degrees())
        ));
    }
    let s = sol.slack_power(&net);
    let loss = sol.losses(&net);
    eprintln!(
        "converged in {} iterations; substation {} kW {} kVAr; losses {} kW",
        sol.iterations,
        sweep::fmt_sig6(net.from_pu_power(s.re)),
        sweep::fmt_sig6(net.from_pu_power(s.im)),
        sweep::fmt_sig6(net.from_pu_power(loss.re))
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::new(1, format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_plot(args: &PlotArgs) -> CliResult<()> {
    let file = std::fs::File::open(&args.table)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.table.display())))?;
    let rows = sweep::parse_table_csv(file)?;
    std::fs::write(&args.out, render_svg(&rows))
        .map_err(|e| CliError::new(1, format!("cannot write {}: {e}", args.out.display())))
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new(1, format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::FitErrors(a) => cmd_fit_errors(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Pf(a) => cmd_pf(a),
        Command::Plot(a) => cmd_plot(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
