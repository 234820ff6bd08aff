//! `tpa-cavity`: stationary analysis, stochastic ensembles, analytic
//! solvers and the verification suite from the command line.
//!
//! Exit codes: 0 success, 1 usage/domain error, 2 verification failure.

mod config;
mod csv;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use tpa_cavity::analytic::{self, Verdict};
use tpa_cavity::model::to_coefficient_system;
use tpa_cavity::oracle;
use tpa_cavity::sde::{self, NoiseStream};
use tpa_cavity::stationary::{self, CubicMode, StationaryPoint};

use config::{CubicFlag, Flags, MethodFlag, ModeFlags, RunConfig, SweepSpec, SweepTarget};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] tpa_cavity::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "tpa-cavity", version, about = "Two-photon-loss cavity: positive-P SDEs, stationary points, analytic solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Parallel {
    /// Worker threads for ensemble runs (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary points, residuals and linear stability.
    Stationary {
        #[command(flatten)]
        flags: Flags,
        #[arg(long, value_enum)]
        cubic: Option<CubicFlag>,
    },
    /// Euler-Maruyama ensemble; writes ensemble statistics CSV.
    Simulate {
        #[command(flatten)]
        flags: Flags,
        #[command(flatten)]
        parallel: Parallel,
        /// Also write one trajectory to this file.
        #[arg(long)]
        traj_out: Option<PathBuf>,
        /// Stream index of the trajectory written by --traj-out.
        #[arg(long, default_value_t = 0)]
        traj_index: u64,
    },
    /// Closed-form solution with defect certificate; writes analytic CSV.
    Analytic {
        #[command(flatten)]
        flags: Flags,
        #[arg(long, value_enum)]
        method: Option<MethodFlag>,
    },
    /// Runs the invariant and oracle suite.
    Verify {
        /// Skip the two large Monte Carlo checks.
        #[arg(long)]
        quick: bool,
    },
    /// Repeats `stationary` or `simulate` over `name=start:end:count`.
    Sweep {
        #[command(flatten)]
        flags: Flags,
        #[command(flatten)]
        parallel: Parallel,
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, value_enum)]
        target: Option<SweepTarget>,
        #[arg(long, value_enum)]
        cubic: Option<CubicFlag>,
    },
}

fn banner(command: &str, cfg: &RunConfig) {
    eprintln!("tpa-cavity {command}: {cfg}");
}

/// Opens `path` for writing, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn complex(z: Complex64) -> String {
    format!("{:.10}{:+.10}i", z.re, z.im)
}

fn print_point(out: &mut impl Write, p: &StationaryPoint) -> io::Result<()> {
    writeln!(
        out,
        "  alpha = {}  beta* = {}  residual = {:.3e}  {:?}  eigenvalues = [{}, {}]",
        complex(p.point.alpha),
        complex(p.point.beta_star),
        p.residual,
        p.classification,
        complex(p.eigenvalues[0]),
        complex(p.eigenvalues[1]),
    )
}

fn cubic_mode(flag: CubicFlag) -> CubicMode {
    match flag {
        CubicFlag::Paper => CubicMode::AsPublished,
        CubicFlag::Derived => CubicMode::SelfConsistent,
    }
}

fn stationary_report(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let analysis = stationary::stationary_points(&cfg.params()?, cubic_mode(cfg.cubic))?;
    writeln!(out, "accepted ({}):", analysis.accepted.len())?;
    for p in &analysis.accepted {
        print_point(out, p)?;
    }
    writeln!(out, "rejected ({}):", analysis.rejected.len())?;
    for p in &analysis.rejected {
        print_point(out, p)?;
    }
    Ok(())
}

fn run_stationary(cfg: &RunConfig) -> Result<(), CliError> {
    banner("stationary", cfg);
    let mut out = sink(cfg.out.as_deref())?;
    stationary_report(cfg, &mut out)?;
    out.flush()?;
    Ok(())
}

fn simulate_to(cfg: &RunConfig, threads: Option<usize>, path: Option<&Path>) -> Result<sde::EnsembleStats, CliError> {
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let init = cfg.init();
    let stats = with_threads(threads, || sde::simulate_ensemble(&params, init, grid, cfg.n_traj, cfg.seed))?;
    let mut out = sink(path)?;
    csv::write_ensemble(&mut out, &cfg.to_string(), &stats)?;
    out.flush()?;
    if stats.n_truncated > 0 {
        eprintln!("warning: {} of {} trajectories truncated", stats.n_truncated, stats.n_traj);
    }
    Ok(stats)
}

fn run_simulate(cfg: &RunConfig, threads: Option<usize>, traj_out: Option<&Path>, traj_index: u64) -> Result<(), CliError> {
    banner("simulate", cfg);
    if let Some(path) = traj_out {
        let traj = sde::simulate_trajectory(
            &cfg.params()?,
            cfg.init(),
            cfg.grid()?,
            NoiseStream::new(cfg.seed, traj_index),
        );
        let mut out = BufWriter::new(File::create(path)?);
        csv::write_trajectory(&mut out, &format!("{cfg} traj_index={traj_index}"), &traj)?;
        out.flush()?;
        if let Some(t) = traj.truncated_at {
            eprintln!("warning: trajectory {traj_index} truncated at t = {t}");
        }
    }
    simulate_to(cfg, threads, cfg.out.as_deref())?;
    Ok(())
}

fn run_analytic(cfg: &RunConfig) -> Result<(), CliError> {
    banner("analytic", cfg);
    let params = cfg.params()?;
    let coeffs = to_coefficient_system(&params, cfg.grid()?);
    let init = cfg.init();
    let report = match cfg.method {
        MethodFlag::Homogeneous => {
            if params.drive != Complex64::new(0.0, 0.0) {
                return Err(CliError::Usage("method homogeneous needs zero drive (e_re = e_im = 0)".into()));
            }
            analytic::solve_homogeneous(&coeffs, init.alpha, init.beta_star)?
        }
        MethodFlag::Proportional => {
            let report = analytic::solve_proportional(&coeffs, init.alpha)?;
            let y0 = report.y.values[0];
            if (y0 - init.beta_star).norm() > 1e-12 * (1.0 + y0.norm()) {
                return Err(CliError::Usage(format!(
                    "method proportional fixes beta*(t0) = {}; got {}",
                    complex(y0),
                    complex(init.beta_star)
                )));
            }
            report
        }
        MethodFlag::General => analytic::solve_nonhomogeneous_general(&coeffs, init.alpha, init.beta_star)?,
    };
    let defect = oracle::pointwise_residual(&report.x, &report.y, &coeffs)?;
    let mut out = sink(cfg.out.as_deref())?;
    csv::write_analytic(&mut out, &cfg.to_string(), &report, &defect)?;
    out.flush()?;
    let compat = report.compatibility.map(|c| format!(", compatibility {c:.3e}")).unwrap_or_default();
    eprintln!(
        "method {}: defect {:.3e} (tolerance {:.3e}{compat}) -> {:?}",
        report.method, report.defect, report.tolerance, report.verdict
    );
    match report.verdict {
        Verdict::Verified => Ok(()),
        Verdict::NotASolution => Err(CliError::Verification("candidate is not a solution".into())),
    }
}

fn run_verify(quick: bool) -> Result<(), CliError> {
    eprintln!("tpa-cavity verify: quick={quick}");
    let results = tpa_cavity::verify::run_suite(quick);
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} properties failed", results.len())));
    }
    println!("all {} properties passed", results.len());
    Ok(())
}

fn run_sweep(cfg: &RunConfig, threads: Option<usize>) -> Result<(), CliError> {
    let text = cfg.sweep.as_deref().ok_or_else(|| CliError::Usage("sweep needs --sweep name=start:end:count".into()))?;
    let spec = SweepSpec::parse(text)?;
    let mut points = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let mut point = cfg.clone();
        point.set_numeric(&spec.key, v)?;
        point.validate()?;
        points.push(point);
    }
    banner("sweep", cfg);
    match cfg.target {
        SweepTarget::Stationary => {
            let mut out = sink(cfg.out.as_deref())?;
            for (point, v) in points.iter().zip(&spec.values) {
                writeln!(out, "{}={v}", spec.key)?;
                stationary_report(point, &mut out)?;
            }
            out.flush()?;
        }
        SweepTarget::Simulate => {
            let dir = cfg.out.as_deref().ok_or_else(|| CliError::Usage("sweep --target simulate needs --out <dir>".into()))?;
            std::fs::create_dir_all(dir)?;
            for (i, point) in points.iter().enumerate() {
                let path = dir.join(format!("point_{i:04}.csv"));
                simulate_to(point, threads, Some(&path))?;
                println!("{}={} -> {}", spec.key, spec.values[i], path.display());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stationary { flags, cubic } => {
            run_stationary(&RunConfig::resolve(&flags, &ModeFlags { cubic, ..Default::default() })?)
        }
        Command::Simulate { flags, parallel, traj_out, traj_index } => {
            let cfg = RunConfig::resolve(&flags, &ModeFlags::default())?;
            run_simulate(&cfg, parallel.threads, traj_out.as_deref(), traj_index)
        }
        Command::Analytic { flags, method } => {
            run_analytic(&RunConfig::resolve(&flags, &ModeFlags { method, ..Default::default() })?)
        }
        Command::Verify { quick } => run_verify(quick),
        Command::Sweep { flags, parallel, sweep, target, cubic } => {
            let cfg = RunConfig::resolve(&flags, &ModeFlags { cubic, sweep, target, ..Default::default() })?;
            run_sweep(&cfg, parallel.threads)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
