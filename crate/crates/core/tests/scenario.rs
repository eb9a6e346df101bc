use std::fs;
use std::path::Path;

use biasmap::field::BiasField;
use biasmap::harness::{
    presets, run_comparison, run_noise_sweep, run_scenario, write_record, PlannerKind, ScenarioConfig,
};
use biasmap::sim::NoiseConfig;
use biasmap::Vec2;

fn quiet(mut cfg: ScenarioConfig, duration: f64) -> ScenarioConfig {
    cfg.noise = NoiseConfig::zero();
    cfg.duration = duration;
    cfg.sbe_start = 0.0;
    cfg.gp.optimize = false;
    cfg
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn zero_noise_recovers_every_field() {
    let fields = [
        BiasField::constant(1.5, -0.5),
        BiasField::GaussianRadial {
            center: Vec2::new(35.0, 30.0),
            peak_magnitude: 5.0,
            sigma: 10.0,
        },
        presets::validation_field(),
    ];
    for field in fields {
        let mut cfg = quiet(presets::ipp_gaussian(PlannerKind::Boustrophedon), 6.0);
        cfg.field = field;
        let rec = run_scenario(&cfg).unwrap();
        for r in &rec.rmse {
            assert!(r.solver_rmse.unwrap() < 1e-8, "{r:?}");
        }
    }
}

#[test]
fn validation_scenario_counts() {
    let rec = run_scenario(&presets::sbe_validation()).unwrap();
    let last = rec.final_record().unwrap();
    assert_eq!(last.n_nodes, 210);
    assert_eq!(last.n_deltas, 29 * 49);
    for (k, r) in rec.rmse.iter().enumerate() {
        assert_eq!(r.n_deltas, (k + 1) * 49);
    }
    let biases = rec.biases.unwrap();
    assert_eq!(biases.reachable_count(), 210);
}

#[test]
fn thirty_seconds_is_150_records() {
    let mut cfg = presets::ipp_gaussian(PlannerKind::Boustrophedon);
    cfg.gp.optimize = false;
    let rec = run_scenario(&cfg).unwrap();
    assert_eq!(rec.rmse.len(), 150);
    assert!(rec.rmse.windows(2).all(|w| w[0].time < w[1].time));
    // zero map until the solver starts at 2 s
    let first = rec.rmse[0].map_rmse;
    for r in rec.rmse.iter().filter(|r| r.time < 2.0 - 1e-9) {
        assert_eq!(r.map_rmse, first);
        assert!(r.solver_rmse.is_none());
    }
    assert!(rec.record_at(2.0).unwrap().solver_rmse.is_some());
}

#[test]
fn exports_are_deterministic_and_well_formed() {
    let mut cfg = presets::ipp_gaussian(PlannerKind::Ipp);
    cfg.duration = 4.0;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_record(&run_scenario(&cfg).unwrap(), a.path()).unwrap();
    write_record(&run_scenario(&cfg).unwrap(), b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));

    let read = |name: &str| fs::read_to_string(a.path().join(name)).unwrap();
    let rmse = read("rmse.csv");
    assert!(rmse.starts_with("time_s,solver_rmse_m,map_rmse_m,n_deltas,n_nodes,planner,seed\n"));
    assert_eq!(rmse.lines().count(), 1 + 20);
    let grid = read("map_grid.csv");
    assert!(grid.starts_with("x,y,mean_bx,mean_by,variance\n"));
    assert_eq!(grid.lines().count(), 1 + 51 * 51);
    let deltas = read("deltas.csv");
    assert!(deltas.starts_with("p1x,p1y,p2x,p2y,dx,dy,kind,timestep\n"));
    assert_eq!(deltas.lines().count(), 1 + 20 * 9);
    assert!(read("routes.csv").starts_with("plan_index,"));
    assert!(read("biases.csv").starts_with("x,y,bx,by,reachable\n"));
    let obs = read("observations.csv");
    assert!(obs.starts_with("timestep,drone_id,gps_x,gps_y,range_0,bearing_0_x,bearing_0_y,"));
    // drone 0 has no self columns
    let row = obs.lines().nth(1).unwrap();
    assert!(row.starts_with("0,0,") && row.contains(",,,"));
    let record: serde_json::Value = serde_json::from_str(&read("record.json")).unwrap();
    assert_eq!(record["summary"]["ticks"], 20);
    assert_eq!(record["config"]["seed"], 0);
}

#[test]
fn different_seeds_differ() {
    let mut cfg = presets::sbe_validation();
    cfg.gp.optimize = false;
    let a = run_scenario(&cfg).unwrap();
    cfg.seed = 1;
    let b = run_scenario(&cfg).unwrap();
    assert_ne!(a.rmse, b.rmse);
}

#[test]
fn ipp_replans_after_routes_finish() {
    let mut cfg = presets::ipp_gaussian(PlannerKind::Ipp);
    cfg.duration = 45.0;
    let rec = run_scenario(&cfg).unwrap();
    assert!(rec.plan_events.len() >= 2, "{} plans", rec.plan_events.len());
    assert_eq!(rec.routes.len(), rec.plan_events.len());
    for (e, w) in rec.plan_events.iter().zip(rec.plan_events.iter().skip(1)) {
        assert!(e.objective_final <= e.objective_init);
        assert!(w.mean_grid_variance <= e.mean_grid_variance);
        assert!(w.time > e.time);
    }
    for set in &rec.routes {
        for r in &set.routes {
            assert_eq!(r.len(), 3);
            assert!(r.waypoints().iter().all(|p| cfg.bounds.contains(p)));
        }
    }
}

#[test]
fn boustrophedon_repeats_its_bands() {
    let cfg = quiet(presets::ipp_gaussian(PlannerKind::Boustrophedon), 30.0);
    let rec = run_scenario(&cfg).unwrap();
    assert_eq!(rec.routes.len(), 1);
    assert!(rec.plan_events.is_empty());
    let mut firsts: Vec<f64> = rec.routes[0].routes.iter().map(|r| r.first().y).collect();
    firsts.sort_by(f64::total_cmp);
    let h = 50.0 / 3.0;
    for (i, y) in firsts.iter().enumerate() {
        assert!((y - i as f64 * h).abs() < 1e-9);
    }
}

#[test]
fn sweep_zero_row_is_exact() {
    let mut base = presets::noise_sweep();
    base.gp.optimize = false;
    let out = tempfile::tempdir().unwrap();
    let table = run_noise_sweep(&base, &[0.0, 0.2], &[0, 1], Some(out.path())).unwrap();
    assert_eq!(table.cells.len(), 4);
    assert!(table.rows[0].mean_solver_rmse.unwrap() < 1e-6);
    assert!(table.rows[1].mean_solver_rmse.unwrap() > table.rows[0].mean_solver_rmse.unwrap());
    let csv = fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.path().join("runs/sigma0.2_seed1/rmse.csv").exists());
    assert!(run_noise_sweep(&base, &[], &[0], None).is_err());
}

#[test]
fn comparison_shares_the_zero_map() {
    let mut ipp = presets::ipp_gaussian(PlannerKind::Ipp);
    ipp.duration = 3.0;
    let mut bous = ipp.clone();
    bous.planner = PlannerKind::Boustrophedon;
    let table = run_comparison(&ipp, &bous, &[0, 1], None).unwrap();
    assert_eq!(table.traces.len(), 4);
    assert_eq!(table.times.len(), 15);
    for i in 0..9 {
        assert_eq!(table.mean_map_rmse[0][i], table.mean_map_rmse[1][i]);
    }
    assert!(table.mean_at("ipp", 2.0).is_some());

    let mut other = bous.clone();
    other.n_drones = 4;
    assert!(run_comparison(&ipp, &other, &[0], None).is_err());
}

#[test]
fn bundled_configs_match_presets() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in presets::NAMES {
        let loaded = ScenarioConfig::load(&dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(loaded, presets::by_name(name).unwrap(), "{name}");
    }
}

#[test]
fn known_anchor_bias_shifts_every_estimate() {
    let mut cfg = quiet(presets::sbe_validation(), 1.0);
    cfg.anchor.known_bias = Some(Vec2::new(10.0, 10.0));
    let rec = run_scenario(&cfg).unwrap();
    // every estimate shifts with the anchor
    let err = rec.final_record().unwrap().solver_rmse.unwrap();
    let truth_anchor = cfg.field.eval(&Vec2::new(5.0, 4.0)).unwrap();
    let shift = Vec2::new(10.0, 10.0) - truth_anchor;
    assert!((err - (shift.norm_squared() / 2.0).sqrt()).abs() < 1e-8);
}
