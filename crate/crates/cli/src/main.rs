use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use informed_core::arma::{rolling_fit, MIN_WINDOW};
use informed_core::data::{
    detection_inputs, jsonl_path, load_csv, read_column, synthesize_market_rows, write_market_csv, write_report,
    write_simulation_csv, ReportContext, RunConfig, SimulationSetup,
};
use informed_core::detector::{run_detection_with_vols, Verdict};
use informed_core::market::simulate;
use informed_core::Error;

#[derive(Parser)]
#[command(name = "informed", version, about = "Simulate markets, fit rolling ARMA(1,1) and detect informed trading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the informed/noise order-flow market
    Simulate(SimulateArgs),
    /// Run the rolling-window detector on market data
    Detect(DetectArgs),
    /// Rolling ARMA(1,1) fits of one CSV column
    Fit(FitArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Structural parameter file (key = value)
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write market data rows for the contract in the parameter file
    #[arg(long)]
    market_out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Market data CSV
    #[arg(long)]
    data: PathBuf,
    /// Run configuration (key = value); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Text report path; records go to the same path plus `.jsonl`
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "return")]
    column: String,
    #[arg(long)]
    window: usize,
}

enum Failure {
    /// Bad input or configuration, exit 2.
    Input(String),
    /// Not enough data for the requested window, exit 3.
    Insufficient(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Detect(a) => run_detect(a),
        Command::Fit(a) => run_fit(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Insufficient(m)) => {
            eprintln!("insufficient data: {m}");
            ExitCode::from(3)
        }
    }
}

fn io_failure(path: &std::path::Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn run_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let setup = SimulationSetup::load(&a.params).map_err(|e| io_failure(&a.params, e))?;
    if a.market_out.is_some() && setup.market.is_none() {
        return Err(Failure::Input(
            "--market-out needs option_type, strike, expiry and implied_vol in the parameter file".into(),
        ));
    }
    let market = simulate(&setup.params, a.steps, a.seed, setup.lambda_variant)?;
    let file = File::create(&a.out).map_err(|e| io_failure(&a.out, e))?;
    write_simulation_csv(&market, BufWriter::new(file))?;
    if let (Some(path), Some(opts)) = (&a.market_out, &setup.market) {
        let rows = synthesize_market_rows(&market.log_prices, opts)?;
        let file = File::create(path).map_err(|e| io_failure(path, e))?;
        write_market_csv(&rows, BufWriter::new(file))?;
    }
    Ok(())
}

fn run_detect(a: DetectArgs) -> Result<(), Failure> {
    let config = match &a.config {
        Some(p) => RunConfig::load(p).map_err(|e| io_failure(p, e))?,
        None => RunConfig::default(),
    };
    let data = load_csv(&a.data, config.day_count).map_err(|e| io_failure(&a.data, e))?;
    let inputs = detection_inputs(&data, &config)?;
    let report = run_detection_with_vols(
        &inputs.prices,
        &inputs.deltas,
        inputs.vols.as_deref(),
        &inputs.spec,
        &config.detection_config(),
    )?;
    let ctx = ReportContext {
        config: &config,
        spec: Some(&inputs.spec),
        rows_read: data.rows.len() + data.rejected.len(),
        rejected: &data.rejected,
    };
    write_report(&a.report, &ctx, &report).map_err(|e| io_failure(&a.report, e))?;
    println!(
        "verdict {} (branch {}), sum_rho = {:.6}, sum_delta = {:.6}, {} of {} windows counted",
        report.verdict,
        report.branch,
        report.sum_rho,
        report.sum_delta,
        report.diagnostics.windows_counted,
        report.diagnostics.windows_total
    );
    println!("report: {}, {}", a.report.display(), jsonl_path(&a.report).display());
    if report.verdict == Verdict::Inconclusive && report.diagnostics.windows_total == 0 {
        let reason = report.diagnostics.messages.first().cloned().unwrap_or_default();
        return Err(Failure::Insufficient(reason));
    }
    Ok(())
}

fn run_fit(a: FitArgs) -> Result<(), Failure> {
    if a.window < MIN_WINDOW {
        return Err(Failure::Input(format!("window must be at least {MIN_WINDOW}, got {}", a.window)));
    }
    let series = read_column(&a.data, &a.column).map_err(|e| io_failure(&a.data, e))?;
    if series.len() < a.window + 1 {
        return Err(Failure::Insufficient(format!(
            "{} rows, window {} needs at least {}",
            series.len(),
            a.window,
            a.window + 1
        )));
    }
    let fits = rolling_fit(&series, a.window)?;
    let stdout = io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    let header = [
        "window_start",
        "gamma",
        "rho",
        "delta",
        "sigma_eps2",
        "converged",
        "identification_score",
        "error",
    ];
    let write_err = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(header).map_err(write_err)?;
    for f in &fits {
        let record = match &f.fit {
            Ok(fit) => [
                f.window_start.to_string(),
                fit.params.gamma.to_string(),
                fit.params.rho.to_string(),
                fit.params.delta.to_string(),
                fit.params.sigma_eps2.to_string(),
                fit.converged.to_string(),
                fit.identification_score().to_string(),
                String::new(),
            ],
            Err(e) => [
                f.window_start.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.to_string(),
            ],
        };
        w.write_record(&record).map_err(write_err)?;
    }
    w.flush().map_err(|e| Failure::Input(e.to_string()))?;
    io::stdout().flush().ok();
    Ok(())
}
