use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use oamqkd::runner::{derived_params, Sweep, SweepAxis};
use oamqkd::{ExperimentConfig, Grid64, RunOptions, RunReport, ScreenStack64};

#[derive(Parser)]
#[command(name = "oamqkd", version, about = "OAM QKD through evolving turbulence, with adaptive optics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write records, matrices and a manifest.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the sweep, e.g. `r0=0.01,0.02,0.05`.
        #[arg(long)]
        sweep: Option<String>,
        /// Full-scale grid and realization count.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Recompute per-point statistics of a run directory.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Debug: write the initial (or advanced) screens of one realization.
    Screens {
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "screens")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        realization: u64,
        /// Wind steps of `dt_s` applied before dumping.
        #[arg(long, default_value_t = 0)]
        steps: u64,
    },
}

fn load(config: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_sweep(text: &str) -> Result<Sweep> {
    let (axis, values) = text.split_once('=').context("sweep must look like axis=v1,v2,...")?;
    let axis: SweepAxis = axis.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("sweep value {v:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { axis, values })
}

fn print_report(report: &RunReport) {
    println!("status: {}", report.status);
    for p in &report.points {
        let head = p.label.as_deref().unwrap_or("run");
        println!("{head}: r0 = {:.4} m, sigma_R^2 = {:.3}, f_G = {:.2} Hz", p.derived.r0, p.derived.sigma_r2, p.derived.f_g);
        for v in &p.variants {
            match &v.summary {
                Some(s) => println!(
                    "  {:<12} n = {:<4} Q = {:.4} ± {:.4}  r_min = {:.3} ± {:.3}  degenerate = {}",
                    v.name,
                    s.n,
                    s.mean_q,
                    s.se_q.unwrap_or(f64::NAN),
                    s.mean_r,
                    s.se_r.unwrap_or(f64::NAN),
                    v.degenerate
                ),
                None => println!("  {:<12} no records (degenerate = {})", v.name, v.degenerate),
            }
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, sweep, full, seed, out, threads } => {
            let mut cfg = load(config.as_ref())?;
            if full {
                cfg = cfg.full_scale();
            }
            if let Some(s) = sweep {
                cfg.run.sweep = Some(parse_sweep(&s)?);
            }
            if let Some(s) = seed {
                cfg.run.master_seed = s;
            }
            if let Some(o) = out {
                cfg.output.directory = o;
            }
            cfg.validate()?;
            let root = PathBuf::from(&cfg.output.directory);
            let report = oamqkd::run_experiment(&cfg, &root, &RunOptions { threads })?;
            print_report(&report);
        }
        Command::Summarize { input } => print_report(&oamqkd::summarize_dir(&input)?),
        Command::Screens { dump, config, out, realization, steps } => {
            if !dump {
                bail!("nothing to do; pass --dump");
            }
            let cfg = load(config.as_ref())?;
            let d = derived_params(&cfg.turbulence, &cfg.ao)?;
            let grid = Grid64::new(cfg.grid.size, cfg.grid.pitch)?;
            let mut stack = ScreenStack64::generate(&cfg.turbulence, &grid, cfg.run.master_seed, realization)?;
            for _ in 0..steps {
                stack.advance(cfg.run.dt_s)?;
            }
            fs::create_dir_all(&out)?;
            for (i, layer) in stack.layers().iter().enumerate() {
                let path = out.join(format!("layer_{i}.bin"));
                let mut w = BufWriter::new(File::create(&path)?);
                layer.screen.dump().write_to(&mut w)?;
                w.flush()?;
                println!("{} (z = {:.1} m)", path.display(), layer.z);
            }
            println!("layer r0 = {:.4} m, path r0 = {:.4} m", d.layer_r0, d.r0);
        }
    }
    Ok(())
}
