use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcc_mpc::bench::bench_enumeration;
use dcc_mpc::harness::{log_metrics, MetricOptions};
use dcc_mpc::{compare, Error, RunLog, Scenario};

/// Closed-loop simulation of MPC on a five-level diode-clamped inverter.
#[derive(Parser)]
#[command(name = "dcc-mpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log.
    Run {
        scenario: PathBuf,
        /// Where to write the run log (default: <scenario stem>.csv).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write the report as CSV.
        #[arg(long)]
        report_csv: Option<PathBuf>,
    },
    /// Run several scenarios and tabulate them side by side.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long)]
        report_csv: Option<PathBuf>,
        /// Directory that receives one run log per scenario.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Time controller steps on randomised inputs.
    Bench {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Iterations for the exhaustive engines.
        #[arg(long, default_value_t = 3)]
        exhaustive_iters: usize,
    },
    /// Recompute metrics from a saved run log.
    Metrics {
        runlog: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        fundamental: f64,
        #[arg(long, default_value_t = 2)]
        warmup_periods: usize,
        #[arg(long, default_value_t = 1000)]
        max_order: usize,
        #[arg(long, default_value_t = 1.0)]
        band: f64,
    },
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn save_log(log: &RunLog, path: &Path) -> Result<(), Error> {
    let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    log.write_csv(std::io::BufWriter::new(file))
}

fn run(path: &Path, out: Option<PathBuf>, report_csv: Option<PathBuf>) -> Result<bool, Error> {
    let scenario = Scenario::from_path(path)?;
    let (report, logs) = compare(std::slice::from_ref(&scenario));
    print!("{}", report.to_text());
    if let Some(log) = &logs[0] {
        let out = out.unwrap_or_else(|| path.with_extension("csv"));
        save_log(log, &out)?;
        println!("log written to {}", out.display());
    }
    if let Some(p) = report_csv {
        write(&p, &report.to_csv()?)?;
    }
    Ok(report.failures() == 0)
}

fn run_many(paths: &[PathBuf], report_csv: Option<PathBuf>, log_dir: Option<PathBuf>) -> Result<bool, Error> {
    let mut scenarios = Vec::with_capacity(paths.len());
    let mut unreadable = Vec::new();
    for p in paths {
        match Scenario::from_path(p) {
            Ok(s) => scenarios.push(s),
            Err(e) => unreadable.push(format!("{}: {e}", p.display())),
        }
    }
    for msg in &unreadable {
        eprintln!("error: {msg}");
    }
    let (report, logs) = compare(&scenarios);
    print!("{}", report.to_text());
    if let Some(dir) = log_dir {
        fs::create_dir_all(&dir)?;
        for (s, log) in scenarios.iter().zip(&logs) {
            if let Some(log) = log {
                save_log(log, &dir.join(format!("{}.csv", s.name)))?;
            }
        }
    }
    if let Some(p) = report_csv {
        write(&p, &report.to_csv()?)?;
    }
    Ok(unreadable.is_empty() && report.failures() == 0)
}

fn execute(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::Run {
            scenario,
            out,
            report_csv,
        } => run(&scenario, out, report_csv),
        Command::Compare {
            scenarios,
            report_csv,
            log_dir,
        } => run_many(&scenarios, report_csv, log_dir),
        Command::Bench {
            scenario,
            iters,
            exhaustive_iters,
        } => {
            let s = Scenario::from_path(&scenario)?;
            let report = bench_enumeration(&s, iters, exhaustive_iters)?;
            print!("{}", report.to_text());
            Ok(true)
        }
        Command::Metrics {
            runlog,
            fundamental,
            warmup_periods,
            max_order,
            band,
        } => {
            let file = fs::File::open(&runlog).map_err(|e| Error::Io(format!("{}: {e}", runlog.display())))?;
            let log = RunLog::read_csv(std::io::BufReader::new(file))?;
            let opts = MetricOptions {
                fundamental_hz: fundamental,
                warmup_periods,
                max_order,
                band,
            };
            let m = log_metrics(&log, &opts)?;
            if let Some(thd) = m.thd {
                println!(
                    "thd_pct        {:.4} {:.4} {:.4} (mean {:.4})",
                    100.0 * thd[0],
                    100.0 * thd[1],
                    100.0 * thd[2],
                    100.0 * m.thd_mean.unwrap_or(f64::NAN)
                );
            } else {
                println!("thd_pct        -");
            }
            match m.commutations_per_period {
                Some(c) => println!("comm_per_period {c:.2}"),
                None => println!("comm_per_period -"),
            }
            println!("tracking_rms_A {:.6}", m.tracking_rms);
            println!("periods        {}", m.analysed_periods);
            let b = &m.balance;
            println!("vd_max_abs_V   {:.6} {:.6} {:.6}", b.max_abs[0], b.max_abs[1], b.max_abs[2]);
            println!(
                "vd_end_abs_V   {:.6} {:.6} {:.6}",
                b.terminal_abs[0], b.terminal_abs[1], b.terminal_abs[2]
            );
            match b.time_to_band {
                Some(t) => println!("time_to_band_s {t:.6}"),
                None => println!("time_to_band_s -"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
