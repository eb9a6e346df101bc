use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::run::ExperimentRecord;
use crate::gpr::{GpModel, GpSnapshot, Prediction};
use crate::{Result, Vec2};

/// Formats like C's `%.9g`.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt9(x: Option<f64>) -> String {
    x.map(fmt9).unwrap_or_default()
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

pub fn rmse_csv(record: &ExperimentRecord) -> String {
    let mut s = String::from("time_s,solver_rmse_m,map_rmse_m,n_deltas,n_nodes,planner,seed\n");
    let planner = record.config.planner.name();
    for r in &record.rmse {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{planner},{}",
            fmt9(r.time),
            opt9(r.solver_rmse),
            fmt9(r.map_rmse),
            r.n_deltas,
            r.n_nodes,
            record.config.seed
        );
    }
    s
}

pub fn map_grid_csv(grid: &[Vec2], map: &Prediction) -> String {
    let mut s = String::from("x,y,mean_bx,mean_by,variance\n");
    for ((p, m), v) in grid.iter().zip(&map.means).zip(&map.variances) {
        let _ = writeln!(s, "{},{},{},{},{}", fmt9(p.x), fmt9(p.y), fmt9(m.x), fmt9(m.y), fmt9(*v));
    }
    s
}

pub fn deltas_csv(record: &ExperimentRecord) -> String {
    let mut s = String::from("p1x,p1y,p2x,p2y,dx,dy,kind,timestep\n");
    for d in &record.deltas {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt9(d.p1.x),
            fmt9(d.p1.y),
            fmt9(d.p2.x),
            fmt9(d.p2.y),
            fmt9(d.delta.x),
            fmt9(d.delta.y),
            d.kind.as_str(),
            d.timestep
        );
    }
    s
}

pub fn routes_csv(record: &ExperimentRecord) -> String {
    let mut s = String::from("plan_index,time_s,drone_id,waypoint_order,x,y\n");
    for (plan, set) in record.routes.iter().enumerate() {
        for (drone, route) in set.routes.iter().enumerate() {
            for (order, w) in route.waypoints().iter().enumerate() {
                let _ = writeln!(s, "{plan},{},{drone},{order},{},{}", fmt9(set.time), fmt9(w.x), fmt9(w.y));
            }
        }
    }
    s
}

/// Sensor log; per-peer columns are left empty for the observer itself.
pub fn observations_csv(record: &ExperimentRecord) -> String {
    let n = record.config.n_drones;
    let mut s = String::from("timestep,drone_id,gps_x,gps_y");
    for j in 0..n {
        let _ = write!(s, ",range_{j},bearing_{j}_x,bearing_{j}_y");
    }
    s.push('\n');
    for o in &record.observations {
        let _ = write!(s, "{},{},{},{}", o.timestep, o.drone_id, fmt9(o.gps.x), fmt9(o.gps.y));
        for j in 0..n {
            match o.peer_slot(j) {
                Some(k) => {
                    let b = o.bearings[k];
                    let _ = write!(s, ",{},{},{}", fmt9(o.ranges[k]), fmt9(b.x), fmt9(b.y));
                }
                None => s.push_str(",,,"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn biases_csv(record: &ExperimentRecord) -> String {
    let mut s = String::from("x,y,bx,by,reachable\n");
    for e in record.biases.iter().flat_map(|b| &b.entries) {
        let (bx, by) = match e.bias {
            Some(b) => (fmt9(b.x), fmt9(b.y)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(s, "{},{},{bx},{by},{}", fmt9(e.position.x), fmt9(e.position.y), e.reachable());
    }
    s
}

#[derive(Serialize)]
struct Summary {
    ticks: usize,
    final_time_s: Option<f64>,
    final_map_rmse_m: Option<f64>,
    final_solver_rmse_m: Option<f64>,
    n_deltas: usize,
    n_nodes: usize,
    n_plans: usize,
    hyperparams: crate::gpr::Hyperparams,
    /// Pooled over both components: sqrt(mean(|e|^2) / 2).
    rmse_convention: &'static str,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct RecordJson<'a> {
    config: &'a ScenarioConfig,
    summary: Summary,
}

pub fn record_json(record: &ExperimentRecord) -> Result<String> {
    let last = record.final_record();
    let out = RecordJson {
        config: &record.config,
        summary: Summary {
            ticks: record.rmse.len(),
            final_time_s: last.map(|r| r.time),
            final_map_rmse_m: last.map(|r| r.map_rmse),
            final_solver_rmse_m: last.and_then(|r| r.solver_rmse),
            n_deltas: record.deltas.len(),
            n_nodes: last.map_or(0, |r| r.n_nodes),
            n_plans: record.plan_events.len(),
            hyperparams: *record.model.hyperparams(),
            rmse_convention: "pooled",
            warnings: record.warnings.clone(),
        },
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

/// Writes every export of a run into `dir`, creating it if needed.
pub fn write_record(record: &ExperimentRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(&dir.join("rmse.csv"), rmse_csv(record))?;
    write(&dir.join("map_grid.csv"), map_grid_csv(&record.grid, &record.map))?;
    write(&dir.join("deltas.csv"), deltas_csv(record))?;
    write(&dir.join("routes.csv"), routes_csv(record))?;
    write(&dir.join("observations.csv"), observations_csv(record))?;
    write(&dir.join("biases.csv"), biases_csv(record))?;
    write(&dir.join("model.json"), serde_json::to_string_pretty(&record.model.snapshot())? + "\n")?;
    write(&dir.join("record.json"), record_json(record)?)?;
    Ok(())
}

/// Re-grids a saved model onto `grid` and writes `map_grid.csv` to `dir`.
pub fn export_map(model_json: &Path, grid: &[Vec2], dir: &Path) -> Result<()> {
    let snapshot: GpSnapshot = serde_json::from_str(&fs::read_to_string(model_json)?)?;
    let model = GpModel::from_snapshot(&snapshot)?;
    fs::create_dir_all(dir)?;
    write(&dir.join("map_grid.csv"), map_grid_csv(grid, &model.predict(grid)))
}
