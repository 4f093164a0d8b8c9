use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tsaudit::arimax::{ArimaxSpec, Vce};
use tsaudit::audit::{render, run_audit, AuditConfig, AuditReport, Format, Thresholds};
use tsaudit::diagnostics::Presample;
use tsaudit::montecarlo::{spurious_experiment, Process, SimConfig};
use tsaudit::series::DateSpec;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Audit a level-on-level time-series regression for spuriousness.
///
/// Exit codes: 0 audit completed (any verdict), 2 input error,
/// 3 numerical failure or optimizer non-convergence.
#[derive(Parser)]
#[command(name = "tsaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full diagnostic pipeline on two columns of a monthly CSV file.
    Audit(AuditArgs),
    /// Spurious-regression Monte Carlo: regress independent simulated series.
    Simulate(SimArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Response column (e.g. the disapproval series).
    #[arg(long)]
    y: String,
    /// Regressor column (e.g. the prosocial-language series).
    #[arg(long)]
    x: String,
    /// Single date column in YYYY-MM form; overrides --year-col/--month-col.
    #[arg(long)]
    date_col: Option<String>,
    /// Year column for two-column dates.
    #[arg(long, default_value = "A")]
    year_col: String,
    /// Month column (1-12) for two-column dates.
    #[arg(long, default_value = "B")]
    month_col: String,
    /// Do not linearly interpolate gaps in the regressor.
    #[arg(long)]
    no_interpolate: bool,
    /// Lags for Durbin's alternative test.
    #[arg(long, default_value_t = 12)]
    durbin_lags: usize,
    /// Lagged differences in the ADF regressions.
    #[arg(long, default_value_t = 12)]
    adf_lags: usize,
    /// Lags in the ACF/PACF correlograms.
    #[arg(long, default_value_t = 20)]
    acf_lags: usize,
    /// Drop, rather than zero-fill, unavailable lagged residuals in Durbin's test.
    #[arg(long)]
    durbin_drop_rows: bool,
    /// Standard errors for the ARMAX fit.
    #[arg(long, value_enum, default_value_t = VceArg::Robust)]
    vce: VceArg,
    /// Levels Durbin test must reject below this for a spurious verdict.
    #[arg(long, default_value_t = 0.01)]
    durbin_alpha: f64,
    /// Levels ADF tests must fail to reject at this level for a spurious verdict.
    #[arg(long, default_value_t = 0.10)]
    adf_alpha: f64,
    /// Significance level for slope tests.
    #[arg(long, default_value_t = 0.05)]
    beta_alpha: f64,
    /// Output directory.
    #[arg(long, default_value = "tsaudit-out")]
    out: PathBuf,
    /// Comma-separated output formats: json, md, svg. Empty writes nothing.
    #[arg(long, default_value = "json,md,svg")]
    format: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum VceArg {
    Robust,
    Classical,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcessArg {
    RandomWalk,
    WhiteNoise,
    Ar1,
    Arma11,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = ProcessArg::RandomWalk)]
    process: ProcessArg,
    /// Series length.
    #[arg(long, default_value_t = 229)]
    n: usize,
    /// Replications.
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Innovation standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// AR coefficient for ar1 and arma11.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// MA coefficient for arma11.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Regress first differences instead of levels.
    #[arg(long)]
    differenced: bool,
    /// Output directory for summary.json; prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-replication statistics to replications.csv.
    #[arg(long)]
    csv: bool,
}

fn parse_formats(s: &str) -> Result<Vec<Format>, tsaudit::Error> {
    s.split(',').filter(|f| !f.trim().is_empty()).map(str::parse).collect()
}

fn write_report(report: &AuditReport, formats: &[Format], out: &std::path::Path) -> bool {
    match render(report, formats, out) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            true
        }
        Err(e) => {
            eprintln!("error: {e}");
            false
        }
    }
}

fn audit(a: AuditArgs) -> ExitCode {
    let formats = match parse_formats(&a.format) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let mut cfg = AuditConfig::new(&a.input, &a.y, &a.x);
    cfg.date = match a.date_col {
        Some(c) => DateSpec::iso(c),
        None => DateSpec::two_column(a.year_col, a.month_col),
    };
    cfg.interpolate = !a.no_interpolate;
    cfg.durbin_lags = a.durbin_lags;
    cfg.adf_lags = a.adf_lags;
    cfg.acf_lags = a.acf_lags;
    cfg.presample = if a.durbin_drop_rows { Presample::DropRows } else { Presample::ZeroFill };
    cfg.arimax = ArimaxSpec {
        vce: match a.vce {
            VceArg::Robust => Vce::Robust,
            VceArg::Classical => Vce::Classical,
        },
        ..ArimaxSpec::default()
    };
    cfg.thresholds = Thresholds { durbin_alpha: a.durbin_alpha, adf_alpha: a.adf_alpha, beta_alpha: a.beta_alpha };

    match run_audit(&cfg) {
        Ok(report) => {
            if !write_report(&report, &formats, &a.out) {
                return ExitCode::from(EXIT_INPUT);
            }
            println!("verdict: {}", report.verdict);
            if report.nonconverged() {
                eprintln!("warning: ARMAX optimizer did not converge");
                return ExitCode::from(EXIT_NUMERICAL);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            write_report(&e.partial, &formats, &a.out);
            ExitCode::from(if e.source.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
        }
    }
}

fn simulate(a: SimArgs) -> ExitCode {
    let process = match a.process {
        ProcessArg::RandomWalk => Process::RandomWalk,
        ProcessArg::WhiteNoise => Process::WhiteNoise,
        ProcessArg::Ar1 => Process::Ar1 { rho: a.rho },
        ProcessArg::Arma11 => Process::Arma11 { rho: a.rho, theta: a.theta },
    };
    let cfg = SimConfig { n: a.n, reps: a.reps, seed: a.seed, process, sigma: a.sigma, differenced: a.differenced };
    let exp = match spurious_experiment(&cfg) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let json = serde_json::to_string_pretty(&exp.summary).expect("summary serializes") + "\n";
    let Some(dir) = a.out else {
        print!("{json}");
        return ExitCode::SUCCESS;
    };
    let result = (|| -> std::io::Result<()> {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("summary.json"), &json)?;
        if a.csv {
            let csv = exp.records_csv().map_err(std::io::Error::other)?;
            std::fs::write(dir.join("replications.csv"), csv)?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            println!("rejection rate: {}", exp.summary.rejection_rate);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Audit(a) => audit(a),
        Command::Simulate(a) => simulate(a),
    }
}
