use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::config::{PlannerKind, ScenarioConfig};
use crate::field::BiasField;
use crate::geometry::make_eval_grid;
use crate::gpr::{fit, optimize_hyperparams, GpModel, Hyperparams, Prediction};
use crate::ipp::{assign_routes, boustrophedon_bands, plan_routes, replan_trigger, Route, RouteFollower};
use crate::metrics::{rmse_of_means, solver_rmse_with, RmseRecord};
use crate::sbe::{build_graph, solve_biases, tick_deltas, BiasEstimateSet, Delta, ObsKey};
use crate::sim::{waypoint_controller, Action, Observation, Swarm};
use crate::{Error, Result, Vec2};

/// One IPP planning round.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEvent {
    pub time: f64,
    pub objective_init: f64,
    pub objective_final: f64,
    /// Mean predictive variance over the evaluation grid of the model the
    /// plan was made from.
    pub mean_grid_variance: f64,
}

/// Routes handed out at one time, indexed by drone.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteSet {
    pub time: f64,
    pub routes: Vec<Route>,
}

#[derive(Clone, Debug)]
pub struct ExperimentRecord {
    pub config: ScenarioConfig,
    pub rmse: Vec<RmseRecord>,
    pub deltas: Vec<Delta>,
    pub observations: Vec<Observation>,
    /// Latest bias solve.
    pub biases: Option<BiasEstimateSet>,
    pub model: GpModel,
    pub grid: Vec<Vec2>,
    pub map: Prediction,
    pub routes: Vec<RouteSet>,
    pub plan_events: Vec<PlanEvent>,
    pub warnings: Vec<String>,
    pub wall_clock: Duration,
}

impl ExperimentRecord {
    pub fn final_record(&self) -> Option<&RmseRecord> {
        self.rmse.last()
    }

    /// Record whose time is within half a tick of `t`.
    pub fn record_at(&self, t: f64) -> Option<&RmseRecord> {
        let half = 0.5 * self.config.dt;
        self.rmse.iter().find(|r| (r.time - t).abs() < half)
    }
}

enum Planner {
    /// Route is reversed and restarted once finished.
    Repeating(Vec<RouteFollower>),
    Ipp(Vec<RouteFollower>),
}

impl Planner {
    fn followers(&mut self) -> &mut Vec<RouteFollower> {
        match self {
            Planner::Repeating(f) | Planner::Ipp(f) => f,
        }
    }
}

struct Learner<'a> {
    cfg: &'a ScenarioConfig,
    hyper: Hyperparams,
    optimized_at: Option<usize>,
}

impl Learner<'_> {
    fn fit(&mut self, estimates: &BiasEstimateSet, warnings: &mut Vec<String>) -> Result<GpModel> {
        let (mut inputs, mut targets): (Vec<Vec2>, Vec<Vec2>) =
            estimates.reachable().map(|(p, b, _)| (p, b)).unzip();
        let cap = self.cfg.gp.max_train_points;
        if inputs.len() > cap {
            let stride = inputs.len() as f64 / cap as f64;
            let pick: Vec<usize> = (0..cap).map(|i| (i as f64 * stride) as usize).collect();
            inputs = pick.iter().map(|&i| inputs[i]).collect();
            targets = pick.iter().map(|&i| targets[i]).collect();
            debug!("thinned GP training set to {cap} points");
        }
        let gp = &self.cfg.gp;
        let due = match self.optimized_at {
            None => true,
            Some(at) => inputs.len() as f64 >= gp.reoptimize_growth * at as f64,
        };
        if gp.optimize && due && inputs.len() >= 3 {
            match optimize_hyperparams(&inputs, &targets, self.hyper, &gp.hyperopt) {
                Ok(out) => {
                    self.hyper = out.params;
                    self.optimized_at = Some(inputs.len());
                    debug!("hyperparameters {:?} at {} points", self.hyper, inputs.len());
                }
                Err(e) => warnings.push(format!("hyperparameter search skipped: {e}")),
            }
        }
        if inputs.is_empty() {
            return GpModel::prior(self.hyper);
        }
        fit(&inputs, &targets, self.hyper)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs one scenario. Performs no I/O.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let clock = Instant::now();
    let n = cfg.n_drones;
    let world: &BiasField = &cfg.field;
    let grid = make_eval_grid(&cfg.bounds, cfg.eval_spacing)?;
    let planner_cfg = cfg.planner_config();
    let mut warnings = Vec::new();

    let mut swarm = Swarm::new(cfg.initial_states()?, cfg.seed);
    // true positions by [timestep][drone], used only for scoring
    let mut truth_positions: Vec<Vec<Vec2>> = vec![swarm.states.iter().map(|s| s.position).collect()];
    let mut prev_obs = swarm.observe(world, &cfg.noise)?;
    let mut prev_est = swarm.estimates.clone();
    let anchor_pos = prev_obs[cfg.anchor.drone_id].gps;
    let anchor_bias = match cfg.anchor.known_bias {
        Some(b) => b,
        None => world.eval(&truth_positions[0][cfg.anchor.drone_id])?,
    };
    let mut observations = prev_obs.clone();

    let mut learner = Learner {
        cfg,
        hyper: cfg.gp.hyperparams,
        optimized_at: None,
    };
    let mut model = GpModel::prior(learner.hyper)?;
    let mut biases: Option<BiasEstimateSet> = None;
    let mut deltas: Vec<Delta> = Vec::new();
    let mut rmse = Vec::new();
    let mut route_log = Vec::new();
    let mut plan_events = Vec::new();

    let positions = |swarm: &Swarm| -> Vec<Vec2> { swarm.estimates.iter().map(|e| e.position).collect() };
    let ipp_plan = |model: &GpModel, at: &[Vec2], time: f64, events: &mut Vec<PlanEvent>| -> Result<Vec<Route>> {
        let plan = plan_routes(model, &planner_cfg, at)?;
        let variance = mean(&model.predict(&grid).variances);
        info!(
            "plan at t={time:.1}: J {:.6} -> {:.6}, mean grid variance {variance:.6}",
            plan.objective_init, plan.objective_final
        );
        events.push(PlanEvent {
            time,
            objective_init: plan.objective_init,
            objective_final: plan.objective_final,
            mean_grid_variance: variance,
        });
        Ok(plan.routes)
    };

    let start = positions(&swarm);
    let initial_routes = match &cfg.planner {
        PlannerKind::FixedWaypoints { waypoints } => {
            waypoints.iter().map(|w| Route::new(w.clone())).collect::<Result<Vec<_>>>()?
        }
        PlannerKind::Boustrophedon => {
            let bands = boustrophedon_bands(&cfg.bounds, n, planner_cfg.lane_spacing)?;
            let perm = assign_routes(&bands, &start)?;
            perm.iter().map(|&r| bands[r].clone()).collect()
        }
        PlannerKind::Ipp => ipp_plan(&model, &start, 0.0, &mut plan_events)?,
    };
    route_log.push(RouteSet {
        time: 0.0,
        routes: initial_routes.clone(),
    });
    let followers: Vec<RouteFollower> = initial_routes.into_iter().map(RouteFollower::new).collect();
    let mut planner = match cfg.planner {
        PlannerKind::Ipp => Planner::Ipp(followers),
        _ => Planner::Repeating(followers),
    };

    for k in 1..=cfg.ticks() {
        let t = k as f64 * cfg.dt;
        let t_prev = (k - 1) as f64 * cfg.dt;

        for (f, e) in planner.followers().iter_mut().zip(&swarm.estimates) {
            f.update(&e.position, cfg.arrive_tol);
        }
        match &mut planner {
            Planner::Repeating(fs) => {
                for (f, e) in fs.iter_mut().zip(&swarm.estimates) {
                    if f.is_done() {
                        *f = RouteFollower::new(f.route().reversed());
                        f.update(&e.position, cfg.arrive_tol);
                    }
                }
            }
            Planner::Ipp(fs) => {
                if replan_trigger(fs) {
                    let routes = ipp_plan(&model, &positions(&swarm), t_prev, &mut plan_events)?;
                    route_log.push(RouteSet {
                        time: t_prev,
                        routes: routes.clone(),
                    });
                    *fs = routes.into_iter().map(RouteFollower::new).collect();
                }
            }
        }

        let actions: Vec<Action> = planner
            .followers()
            .iter()
            .zip(&swarm.estimates)
            .map(|(f, e)| {
                if f.is_done() {
                    Action::IDLE
                } else {
                    waypoint_controller(e, &f.target(), &cfg.limits, cfg.dt, cfg.arrive_tol)
                }
            })
            .collect();
        swarm.advance(&actions, cfg.dt, &cfg.noise);
        truth_positions.push(swarm.states.iter().map(|s| s.position).collect());
        let obs = swarm.observe(world, &cfg.noise)?;
        deltas.extend(tick_deltas(&obs, &prev_obs, &swarm.estimates, &prev_est)?);
        observations.extend(obs.iter().cloned());
        prev_obs = obs;
        prev_est = swarm.estimates.clone();

        let mut solver = None;
        let mut n_nodes = 0;
        if t >= cfg.sbe_start - 1e-9 {
            match build_graph(&deltas, anchor_pos, anchor_bias, cfg.merge_tol) {
                Ok(graph) => {
                    n_nodes = graph.nodes().len();
                    let est = solve_biases(&graph)?;
                    let truth_at = |key: Option<ObsKey>, fallback: Vec2| match key {
                        Some(key) => truth_positions[key.timestep as usize][key.drone],
                        None => fallback,
                    };
                    solver = Some(solver_rmse_with(&est, |e| {
                        world.eval(&truth_at(e.source, e.position))
                    })?);
                    model = learner.fit(&est, &mut warnings)?;
                    biases = Some(est);
                }
                Err(Error::Anchoring(p)) => {
                    let msg = format!("t={t:.1}: anchor {p:?} not in the delta graph");
                    warn!("{msg}");
                    warnings.push(msg);
                }
                Err(e) => return Err(e),
            }
        }
        let map = rmse_of_means(&model.predict_mean(&grid), world, &grid)?;
        rmse.push(RmseRecord {
            time: t,
            solver_rmse: solver,
            map_rmse: map,
            n_deltas: deltas.len(),
            n_nodes,
        });
    }

    let map = model.predict(&grid);
    let wall_clock = clock.elapsed();
    if let Some(last) = rmse.last() {
        info!(
            "{} seed {}: {} ticks, map RMSE {:.4}, solver RMSE {:?}, {:.2?}",
            cfg.name,
            cfg.seed,
            rmse.len(),
            last.map_rmse,
            last.solver_rmse,
            wall_clock
        );
    }
    Ok(ExperimentRecord {
        config: cfg.clone(),
        rmse,
        deltas,
        observations,
        biases,
        model,
        grid,
        map,
        routes: route_log,
        plan_events,
        warnings,
        wall_clock,
    })
}
