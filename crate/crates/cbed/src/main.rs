//! Command-line front end: run one experiment, sweep the MI landscape, or
//! benchmark a directory of configs. All outputs are CSV plus a manifest
//! echoing the resolved configuration.

use cbed::harness::{
    render_bench_csv, render_metrics_csv, render_sweep_csv, render_timing_csv, run_benchmark,
    run_experiment, run_sweep, ExperimentConfig,
};
use cbed::{Error, Result};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cbed", about = "Batched experimental design for causal structure discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the intervention-inference-design loop and log metrics.
    Run {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.csv and manifest.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluate the MI of intervening on each target across a value grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Target nodes, comma separated.
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        targets: Vec<usize>,
        /// Value grid as lo:hi:steps.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run every config in a directory over paired seeds and aggregate.
    Bench {
        /// Directory of JSON experiment configs.
        #[arg(long)]
        configs: PathBuf,
        /// Seeds per config.
        #[arg(long)]
        seeds: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// lo:hi:steps, endpoints included.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Parse(format!("grid '{spec}' is not lo:hi:steps"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() || lo > hi || steps == 0 {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect())
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    write_out(dir, "manifest.json", &text)?;
    Ok(())
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let records = run_experiment(&cfg)?;
            let path = write_out(&out, "metrics.csv", &render_metrics_csv(&records))?;
            write_manifest(&out, &cfg)?;
            let last = records.last().expect("at least one record");
            println!(
                "policy {} seed {}: final e_shd {} after {} interventional samples ({})",
                cfg.policy,
                cfg.seed,
                last.e_shd,
                last.samples,
                path.display()
            );
            Ok(())
        }
        Command::Sweep { config, targets, grid, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let rows = run_sweep(&cfg, &targets, &parse_grid(&grid)?)?;
            let path = write_out(&out, "sweep.csv", &render_sweep_csv(&rows))?;
            write_manifest(&out, &cfg)?;
            println!("{} sweep rows ({})", rows.len(), path.display());
            Ok(())
        }
        Command::Bench { configs, seeds, out } => {
            let mut paths: Vec<PathBuf> = fs::read_dir(&configs)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::invalid(format!(
                    "no .json configs under {}",
                    configs.display()
                )));
            }
            let cfgs: Vec<ExperimentConfig> =
                paths.iter().map(|p| load_config(p, None)).collect::<Result<_>>()?;
            let report = run_benchmark(&cfgs, seeds)?;
            let bench = write_out(&out, "bench.csv", &render_bench_csv(&report))?;
            write_out(&out, "timing.csv", &render_timing_csv(&report))?;
            println!(
                "{} cells x {} seeds ({})",
                report.cells.len(),
                seeds,
                bench.display()
            );
            for v in &report.ordering_violations {
                eprintln!("runtime ordering violated: {v}");
            }
            if report.ordering_violations.is_empty() {
                Ok(())
            } else {
                Err(Error::invalid("benchmark runtime orderings violated"))
            }
        }
    }
}
