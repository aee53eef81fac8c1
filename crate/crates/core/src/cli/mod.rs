//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
//! 3 numerical failure, 4 Picard non-convergence under `--strict`.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::closed_loop::{feedback_sets, picard_solve, residual_breakdown, simulate, Trajectory};
use crate::verify::{self, HeatProbeSpec, ProbeReport};
use crate::{Error, Result};
use config::LoadedConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "rdloop",
    version,
    about = "Closed-loop reaction-diffusion simulator"
)]
pub struct Cli {
    /// Worker threads for `sweep` (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Store a state snapshot every `stride` steps (overrides the config).
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-march the closed loop.
    Simulate(RunArgs),
    /// Solve by fixed-point iteration over the whole horizon.
    Picard {
        #[command(flatten)]
        run: RunArgs,
        /// Exit with status 4 when the iteration does not converge.
        #[arg(long)]
        strict: bool,
    },
    /// Defect of the trajectory in `--out` (simulated first if absent).
    Residual(RunArgs),
    /// Run a verification probe.
    Verify {
        probe: Probe,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config's `[probes]` table.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate several configurations in parallel, one output directory each.
    Sweep {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Probe {
    Heat,
    Stability,
    Holder,
    Convergence,
    Bounds,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Invalid(_) | Error::Precondition(_) => EXIT_CONFIG,
        Error::LinearSolver { .. } | Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ! {
    std::process::exit(run(std::env::args_os()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    subcommand: &'a str,
    config: Option<String>,
    config_hash: Option<&'a str>,
    outputs: Vec<String>,
    wall_clock_seconds: f64,
}

fn write_manifest(
    out: &Path,
    subcommand: &str,
    config: Option<(&Path, &LoadedConfig)>,
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let rel = |p: &PathBuf| p.strip_prefix(out).unwrap_or(p).display().to_string();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config: config.map(|(p, _)| p.display().to_string()),
        config_hash: config.map(|(_, c)| c.hash.as_str()),
        outputs: outputs.iter().map(rel).collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    output::write_json(&out.join("manifest.json"), &manifest)
}

fn load(path: &Path, stride: Option<usize>) -> Result<LoadedConfig> {
    let mut cfg = config::load(path)?;
    if let Some(s) = stride {
        if s == 0 {
            return Err(Error::Config("--stride must be at least 1".into()));
        }
        cfg.sim.snapshot_stride = Some(s);
    }
    Ok(cfg)
}

fn trajectory_summary(traj: &Trajectory) -> serde_json::Value {
    json!({
        "steps": traj.times.len().saturating_sub(1),
        "final_time": traj.times.last(),
        "final_kappa": traj.kappa.last(),
        "final_readings": traj.readings.last(),
        "max_abs_state": traj.max_abs_state,
        "selection_violations": traj.selection_violations(),
        "bounds": traj.bounds,
    })
}

fn dispatch(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    match cli.command {
        Command::Simulate(args) => {
            run_simulate(&args.config, &args.out, args.stride, started)?;
            Ok(EXIT_OK)
        }
        Command::Picard { run, strict } => {
            let cfg = load(&run.config, run.stride)?;
            std::fs::create_dir_all(&run.out)?;
            let (traj, report) = picard_solve(&cfg.sim)?;
            let mut outputs = output::write_trajectory(&run.out, &traj)?;
            let iters: Vec<f64> = (1..=report.iterations).map(|i| i as f64).collect();
            let path = run.out.join("picard.csv");
            output::write_series(
                &path,
                "residual",
                &iters,
                &report
                    .residual_history
                    .iter()
                    .map(|r| vec![*r])
                    .collect::<Vec<_>>(),
            )?;
            outputs.push(path);
            let path = run.out.join("report.json");
            output::write_json(
                &path,
                &json!({ "picard": report, "trajectory": trajectory_summary(&traj) }),
            )?;
            outputs.push(path);
            write_manifest(
                &run.out,
                "picard",
                Some((&run.config, &cfg)),
                &outputs,
                started,
            )?;
            if !report.converged {
                eprintln!(
                    "picard iteration did not converge: residual {:.3e} after {} iterations",
                    report.final_residual, report.iterations
                );
                if strict {
                    return Ok(EXIT_NOT_CONVERGED);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Residual(args) => {
            let cfg = load(&args.config, args.stride)?;
            let have = ["kappa.csv", "v.csv", "readings.csv"]
                .iter()
                .all(|f| args.out.join(f).exists());
            let (traj, mut outputs) = if have {
                (read_trajectory(&args.out, &cfg)?, Vec::new())
            } else {
                std::fs::create_dir_all(&args.out)?;
                let traj = simulate(&cfg.sim)?;
                let written = output::write_trajectory(&args.out, &traj)?;
                (traj, written)
            };
            let breakdown = residual_breakdown(&traj, &cfg.sim)?;
            let path = args.out.join("residual.json");
            output::write_json(
                &path,
                &json!({
                    "residual": breakdown.total(),
                    "breakdown": breakdown,
                    "source": if have { "existing" } else { "simulated" },
                    "selection_violations": traj.selection_violations(),
                }),
            )?;
            outputs.push(path);
            write_manifest(
                &args.out,
                "residual",
                Some((&args.config, &cfg)),
                &outputs,
                started,
            )?;
            println!("residual {:.6e}", breakdown.total());
            Ok(EXIT_OK)
        }
        Command::Verify {
            probe,
            config,
            out,
            seed,
        } => {
            let cfg = config.as_deref().map(|p| load(p, None)).transpose()?;
            std::fs::create_dir_all(&out)?;
            let report = run_probe(probe, cfg.as_ref(), seed)?;
            let path = out.join("report.json");
            output::write_json(&path, &report)?;
            write_manifest(
                &out,
                &format!("verify {}", report.name),
                config.as_deref().zip(cfg.as_ref()),
                &[path],
                started,
            )?;
            for c in &report.checks {
                println!(
                    "{} {} = {:.6e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value
                );
            }
            Ok(if report.passed {
                EXIT_OK
            } else {
                EXIT_NUMERICAL
            })
        }
        Command::Sweep { configs, out } => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = cli.threads {
                builder = builder.num_threads(n);
            }
            let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
            let dirs = sweep_dirs(&configs, &out);
            let codes: Vec<i32> = pool.install(|| {
                configs
                    .par_iter()
                    .zip(&dirs)
                    .map(|(c, d)| match run_simulate(c, d, None, Instant::now()) {
                        Ok(()) => EXIT_OK,
                        Err(e) => {
                            eprintln!("error: {}: {e}", c.display());
                            exit_code(&e)
                        }
                    })
                    .collect()
            });
            Ok(codes.into_iter().max().unwrap_or(EXIT_OK))
        }
        Command::Validate { config } => {
            let cfg = config::load(&config)?;
            let b = cfg.sim.bounds();
            println!(
                "ok {} ({} steps, S = {:.6})",
                cfg.hash,
                cfg.sim.steps(),
                b.s
            );
            if b.forms_disagree {
                println!("note: unit-rate form of S would give {:.6}", b.s_unit_rate);
            }
            Ok(EXIT_OK)
        }
    }
}

/// One sub-directory per config, named after the file stem (disambiguated by
/// position when stems repeat).
fn sweep_dirs(configs: &[PathBuf], out: &Path) -> Vec<PathBuf> {
    let stems: Vec<String> = configs
        .iter()
        .map(|c| {
            c.file_stem()
                .map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned())
        })
        .collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if stems.iter().filter(|t| *t == s).count() > 1 {
                out.join(format!("{i:03}_{s}"))
            } else {
                out.join(s)
            }
        })
        .collect()
}

fn run_simulate(config: &Path, out: &Path, stride: Option<usize>, started: Instant) -> Result<()> {
    let cfg = load(config, stride)?;
    std::fs::create_dir_all(out)?;
    let traj = simulate(&cfg.sim)?;
    let breakdown = residual_breakdown(&traj, &cfg.sim)?;
    let mut outputs = output::write_trajectory(out, &traj)?;
    let path = out.join("report.json");
    output::write_json(
        &path,
        &json!({ "trajectory": trajectory_summary(&traj), "residual": breakdown.total(), "residual_breakdown": breakdown }),
    )?;
    outputs.push(path);
    write_manifest(out, "simulate", Some((config, &cfg)), &outputs, started)
}

fn read_trajectory(dir: &Path, cfg: &LoadedConfig) -> Result<Trajectory> {
    let (times, kappa) = output::read_series(&dir.join("kappa.csv"))?;
    let (_, v) = output::read_series(&dir.join("v.csv"))?;
    let (_, readings) = output::read_series(&dir.join("readings.csv"))?;
    if readings.len() != kappa.len() || v.len() != kappa.len() {
        return Err(Error::Config(format!(
            "{}: kappa, v and readings tables have different lengths",
            dir.display()
        )));
    }
    let intervals = feedback_sets(&cfg.sim, &readings)?;
    Ok(Trajectory {
        times,
        kappa,
        v,
        intervals,
        readings,
        snapshots: Vec::new(),
        bounds: cfg.sim.bounds(),
        max_abs_state: f64::NAN,
    })
}

fn run_probe(probe: Probe, cfg: Option<&LoadedConfig>, seed: Option<u64>) -> Result<ProbeReport> {
    let need = || cfg.ok_or_else(|| Error::Config("this probe needs --config".into()));
    match probe {
        Probe::Heat => verify::heat_oracle(&HeatProbeSpec::default()),
        Probe::Stability => {
            let c = need()?;
            let p = &c.probes;
            verify::stability_probe(
                &c.sim,
                p.stability_pairs,
                seed.unwrap_or(p.seed),
                p.stability_ratio_cap,
                p.stability_spread,
            )
        }
        Probe::Holder => {
            let c = need()?;
            let p = &c.probes;
            verify::holder_sweep_probe(
                &c.sim,
                p.holder_controls,
                seed.unwrap_or(p.seed),
                p.holder_margin_length,
                p.holder_c6_spread,
            )
        }
        Probe::Convergence => {
            let c = need()?;
            let p = &c.probes;
            verify::convergence_probe(
                &c.sim,
                p.convergence_levels,
                p.convergence_time,
                p.convergence_order.map(|o| (o, p.convergence_order_tol)),
            )
        }
        Probe::Bounds => {
            let c = need()?;
            verify::bounds_probe(
                &c.sim,
                c.probes.bounds_sequences,
                seed.unwrap_or(c.probes.seed),
            )
        }
    }
}
