use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use pact::config::{Method, RunConfig};
use pact::error::{exit, PactError, Result};
use pact::format;
use pact::pipeline::{self, METRICS_FILE, SINOGRAM_FILE};
use pact::report::{metrics_table, write_metrics_csv, MetricsRow};

/// Ring-array photoacoustic tomography: simulate, reconstruct, evaluate.
#[derive(Debug, Parser)]
#[command(name = "pact", version)]
struct Cli {
    /// TOML run config; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed (replaces the config's seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the phantom and write `phantom.img` and `sinogram.sgm`.
    Simulate,
    /// Reconstruct from a sinogram with one method.
    Reconstruct {
        /// ubp, mb or inr.
        #[arg(long)]
        method: Method,
        /// Detectors kept; must divide the sinogram's detector count.
        #[arg(long)]
        projections: usize,
        /// Input sinogram (default: `<out>/sinogram.sgm`).
        #[arg(long, value_name = "PATH")]
        sinogram: Option<PathBuf>,
    },
    /// Score a reconstruction against an optional ground truth.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
        #[arg(long, value_name = "PATH")]
        gt: Option<PathBuf>,
    },
    /// Every seed × projection count × method, with metrics.
    Sweep {
        /// Restrict to one method.
        #[arg(long)]
        method: Option<Method>,
        /// Restrict to one projection count.
        #[arg(long)]
        projections: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PactError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    let seed = cfg.seeds[0];
    if cfg.seeds.len() > 1 && !matches!(cli.cmd, Command::Sweep { .. }) {
        warn!("using the first of {} seeds ({seed})", cfg.seeds.len());
    }
    let out = cfg.out_dir.clone();
    match cli.cmd {
        Command::Simulate => {
            let sim = pipeline::simulate(&cfg, seed)?;
            pipeline::write_simulation(&out, &sim)?;
            save_resolved(&cfg, seed)?;
            info!(
                "wrote {} ({}x{} sinogram)",
                out.join(SINOGRAM_FILE).display(),
                sim.sinogram.n_detectors(),
                sim.sinogram.n_samples()
            );
        }
        Command::Reconstruct { method, projections, sinogram } => {
            let path = sinogram.unwrap_or_else(|| out.join(SINOGRAM_FILE));
            let s = format::load_sinogram(&path)?;
            cfg.projections = vec![projections];
            cfg.methods = vec![method];
            let rec = pipeline::reconstruct(&cfg, method, projections, seed, &s)?;
            let dir = out.join(format!("proj_{projections}")).join(method.name());
            pipeline::write_reconstruction(&dir, &rec)?;
            cfg.save(&dir)?;
            info!("wrote {}", dir.display());
        }
        Command::Evaluate { image, gt } => {
            let img = format::load_image(&image)?;
            let gt = gt.map(|p| format::load_image(&p)).transpose()?;
            let regions = cfg.phantom.resolve(img.grid(), seed).regions;
            let metrics = pipeline::evaluate(&img, gt.as_ref(), regions.as_ref())?;
            let row = MetricsRow { seed, projections: None, method: None, metrics };
            pipeline::create_dir(&out)?;
            write_metrics_csv(&out.join(METRICS_FILE), std::slice::from_ref(&row))?;
            print!("{}", metrics_table(std::slice::from_ref(&row)));
        }
        Command::Sweep { method, projections } => {
            if let Some(m) = method {
                cfg.methods = vec![m];
            }
            if let Some(n) = projections {
                cfg.projections = vec![n];
            }
            cfg.validate()?;
            let result = pipeline::sweep(&cfg)?;
            print!("{}", metrics_table(&result.rows));
        }
    }
    Ok(())
}

fn save_resolved(cfg: &RunConfig, seed: u64) -> Result<()> {
    let mut c = cfg.clone();
    c.seeds = vec![seed];
    c.save(&c.out_dir.clone())
}
