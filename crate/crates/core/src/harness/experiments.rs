use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::export::{fmt9, write_record};
use super::run::run_scenario;
use crate::metrics::RmseRecord;
use crate::{Error, Result};

/// `0, step, 2·step, …` up to and including `max`.
pub fn sigma_levels(max: f64, step: f64) -> Vec<f64> {
    let count = (max / step + 1e-9).floor() as usize;
    (0..=count).map(|i| i as f64 * step).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub sigma: f64,
    pub seed: u64,
    pub solver_rmse: Option<f64>,
    pub map_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub mean_solver_rmse: Option<f64>,
    pub mean_map_rmse: Option<f64>,
    pub runs_ok: usize,
    pub runs_failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("process_sigma_m,mean_solver_rmse_m,mean_map_rmse_m,runs_ok,runs_failed\n");
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map(fmt9).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt9(r.sigma),
                opt(r.mean_solver_rmse),
                opt(r.mean_map_rmse),
                r.runs_ok,
                r.runs_failed
            );
        }
        s
    }

    pub fn cells_csv(&self) -> String {
        let mut s = String::from("process_sigma_m,seed,solver_rmse_m,map_rmse_m,error\n");
        for c in &self.cells {
            let opt = |x: Option<f64>| x.map(fmt9).unwrap_or_default();
            let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                s,
                "{},{},{},{},{err}",
                fmt9(c.sigma),
                c.seed,
                opt(c.solver_rmse),
                opt(c.map_rmse)
            );
        }
        s
    }
}

/// Runs `base` at every process-noise level and seed in parallel. A failed
/// run is recorded in its cell and the sweep continues. When `out` is given,
/// each run's exports go to `out/runs/…` and the tables to `out/sweep.csv`
/// and `out/sweep_runs.csv`.
pub fn run_noise_sweep(
    base: &ScenarioConfig,
    sigmas: &[f64],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<SweepTable> {
    if sigmas.is_empty() || seeds.is_empty() {
        return Err(Error::arg("noise sweep needs at least one sigma and one seed"));
    }
    base.validate()?;
    let jobs: Vec<(f64, u64)> = sigmas.iter().flat_map(|&s| seeds.iter().map(move |&k| (s, k))).collect();
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(sigma, seed)| {
            let mut cfg = base.clone();
            cfg.noise.process_sigma = sigma;
            cfg.seed = seed;
            let outcome = run_scenario(&cfg).and_then(|rec| {
                if let Some(dir) = out {
                    let run_dir = dir.join("runs").join(format!("sigma{}_seed{seed}", fmt9(sigma)));
                    write_record(&rec, &run_dir)?;
                }
                Ok(rec)
            });
            match outcome {
                Ok(rec) => {
                    let last = rec.final_record();
                    SweepCell {
                        sigma,
                        seed,
                        solver_rmse: last.and_then(|r| r.solver_rmse),
                        map_rmse: last.map(|r| r.map_rmse),
                        error: None,
                    }
                }
                Err(e) => {
                    warn!("sweep cell sigma {sigma} seed {seed} failed: {e}");
                    SweepCell {
                        sigma,
                        seed,
                        solver_rmse: None,
                        map_rmse: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let rows = sigmas
        .iter()
        .map(|&sigma| {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.sigma == sigma).collect();
            SweepRow {
                sigma,
                mean_solver_rmse: mean_of(group.iter().map(|c| c.solver_rmse)),
                mean_map_rmse: mean_of(group.iter().map(|c| c.map_rmse)),
                runs_ok: group.iter().filter(|c| c.error.is_none()).count(),
                runs_failed: group.iter().filter(|c| c.error.is_some()).count(),
            }
        })
        .collect();
    let table = SweepTable { cells, rows };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.csv"), table.to_csv())?;
        fs::write(dir.join("sweep_runs.csv"), table.cells_csv())?;
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub planner: String,
    pub seed: u64,
    pub records: Vec<RmseRecord>,
}

/// Paired runs of two planners with per-time mean map RMSE.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub planners: [String; 2],
    pub traces: Vec<RunTrace>,
    pub times: Vec<f64>,
    pub mean_map_rmse: [Vec<f64>; 2],
}

impl ComparisonTable {
    /// Mean map RMSE of `planner` at the tick within half a step of `t`.
    pub fn mean_at(&self, planner: &str, t: f64) -> Option<f64> {
        let p = self.planners.iter().position(|n| n == planner)?;
        let dt = match self.times.as_slice() {
            [a, b, ..] => b - a,
            _ => f64::INFINITY,
        };
        let i = self.times.iter().position(|&x| (x - t).abs() < 0.5 * dt)?;
        Some(self.mean_map_rmse[p][i])
    }

    pub fn traces_csv(&self) -> String {
        let mut s = String::from("planner,seed,time_s,map_rmse_m,solver_rmse_m\n");
        for tr in &self.traces {
            for r in &tr.records {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    tr.planner,
                    tr.seed,
                    fmt9(r.time),
                    fmt9(r.map_rmse),
                    r.solver_rmse.map(fmt9).unwrap_or_default()
                );
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let [a, b] = &self.planners;
        let mut s = format!("time_s,mean_map_rmse_{a}_m,mean_map_rmse_{b}_m\n");
        for (i, t) in self.times.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt9(*t),
                fmt9(self.mean_map_rmse[0][i]),
                fmt9(self.mean_map_rmse[1][i])
            );
        }
        s
    }
}

/// Runs both configurations once per seed in parallel. The configurations
/// must be identical apart from their planner and name.
pub fn run_comparison(
    cfg_a: &ScenarioConfig,
    cfg_b: &ScenarioConfig,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(Error::arg("comparison needs at least one seed"));
    }
    let mut probe = cfg_a.clone();
    probe.planner = cfg_b.planner.clone();
    probe.name = cfg_b.name.clone();
    probe.output_dir = cfg_b.output_dir.clone();
    if probe != *cfg_b {
        return Err(Error::Config("compared scenarios differ in more than the planner".into()));
    }
    if cfg_a.planner.name() == cfg_b.planner.name() {
        return Err(Error::Config("compared scenarios use the same planner".into()));
    }
    let jobs: Vec<(&ScenarioConfig, u64)> = seeds
        .iter()
        .flat_map(|&s| [(cfg_a, s), (cfg_b, s)])
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(base, seed)| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            let rec = run_scenario(&cfg)?;
            if let Some(dir) = out {
                write_record(&rec, &dir.join("runs").join(format!("{}_seed{seed}", cfg.planner.name())))?;
            }
            Ok(RunTrace {
                planner: cfg.planner.name().to_string(),
                seed,
                records: rec.rmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let planners = [cfg_a.planner.name().to_string(), cfg_b.planner.name().to_string()];
    let times: Vec<f64> = traces[0].records.iter().map(|r| r.time).collect();
    let mean_map_rmse = [0, 1].map(|p| {
        let mine: Vec<&RunTrace> = traces.iter().filter(|t| t.planner == planners[p]).collect();
        (0..times.len())
            .map(|i| mine.iter().map(|t| t.records[i].map_rmse).sum::<f64>() / mine.len() as f64)
            .collect()
    });
    let table = ComparisonTable {
        planners,
        traces,
        times,
        mean_map_rmse,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("traces.csv"), table.traces_csv())?;
        fs::write(dir.join("comparison.csv"), table.to_csv())?;
    }
    Ok(table)
}
