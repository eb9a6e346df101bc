use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use biasmap::geometry::make_eval_grid;
use biasmap::harness::{
    export_map, presets, run_comparison, run_noise_sweep, run_scenario, sigma_levels, write_record, PlannerKind,
    ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "biasmap", version, about = "Cooperative GPS bias mapping with drone swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the planner: boustrophedon or ipp.
    #[arg(long)]
    planner: Option<String>,
    /// Override the duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its exports.
    Run(Common),
    /// Sweep process noise over several seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Largest process-noise sigma, meters.
        #[arg(long, default_value_t = 0.5)]
        max_sigma: f64,
        /// Sigma increment, meters.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Number of seeds, starting at the scenario seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Paired runs of IPP and boustrophedon on one scenario.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Evaluate a saved model on the scenario's grid.
    ExportMap {
        /// Scenario file providing bounds and grid spacing.
        #[arg(long)]
        config: PathBuf,
        /// model.json written by `run`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid spacing override, meters.
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Write a built-in scenario as TOML.
    InitConfig {
        /// One of: sbe-validation, noise-sweep, ipp-gaussian, boustrophedon-gaussian.
        #[arg(long)]
        preset: String,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &common.planner {
        cfg.planner = PlannerKind::from_name(name)?;
    }
    if let Some(d) = common.duration {
        cfg.duration = d;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let rec = run_scenario(&cfg)?;
            let dir = out_dir(&cfg);
            write_record(&rec, &dir)?;
            if let Some(last) = rec.final_record() {
                println!(
                    "t={:.1}s map_rmse={:.4} m solver_rmse={} deltas={} nodes={}",
                    last.time,
                    last.map_rmse,
                    last.solver_rmse.map_or("-".into(), |v| format!("{v:.4} m")),
                    last.n_deltas,
                    last.n_nodes
                );
            }
            info!("wrote {} in {:.2?}", dir.display(), rec.wall_clock);
        }
        Command::Sweep {
            common,
            max_sigma,
            step,
            seeds,
        } => {
            let cfg = load(&common)?;
            let seeds: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let dir = out_dir(&cfg);
            let table = run_noise_sweep(&cfg, &sigma_levels(max_sigma, step), &seeds, Some(&dir))?;
            print!("{}", table.to_csv());
            info!("wrote {}", dir.display());
        }
        Command::Compare { common, seeds } => {
            let cfg = load(&common)?;
            let mut ipp = cfg.clone();
            ipp.planner = PlannerKind::Ipp;
            let mut bous = cfg.clone();
            bous.planner = PlannerKind::Boustrophedon;
            let seeds: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let dir = out_dir(&cfg);
            let table = run_comparison(&ipp, &bous, &seeds, Some(&dir))?;
            for t in [2.0, 5.0, 10.0, 20.0, cfg.duration] {
                if let (Some(a), Some(b)) = (table.mean_at("ipp", t), table.mean_at("boustrophedon", t)) {
                    println!("t={t:>5.1}s  ipp {a:.4} m  boustrophedon {b:.4} m");
                }
            }
            info!("wrote {}", dir.display());
        }
        Command::ExportMap {
            config,
            model,
            out,
            spacing,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let spacing = spacing.unwrap_or(cfg.eval_spacing);
            let grid = make_eval_grid(&cfg.bounds, spacing)?;
            export_map(&model, &grid, &out)?;
            info!("wrote {}", out.join("map_grid.csv").display());
        }
        Command::InitConfig { preset, out } => {
            let text = presets::by_name(&preset)?.to_toml()?;
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
