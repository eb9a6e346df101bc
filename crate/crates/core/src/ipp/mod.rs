//! Informative path planning.
//!
//! A plan is built in four steps: place `n·p` inducing points where
//! hypothetical measurements would most reduce the map's mean predictive
//! variance ([`inducing`]), split them into `n` routes of `p` waypoints
//! ([`partition`]), and pair routes with drones by minimum total distance to
//! each route's first waypoint ([`assign`]). [`coverage`] holds the
//! open-loop boustrophedon baseline.

pub mod assign;
pub mod coverage;
pub mod inducing;
pub mod partition;

use serde::{Deserialize, Serialize};

use crate::geometry::make_eval_grid;
use crate::gpr::GpModel;
use crate::{Bounds, Error, Result, Vec2};

pub use assign::{assign_routes, solve_assignment};
pub use coverage::{boustrophedon_bands, boustrophedon_path, StartCorner};
pub use inducing::{default_init, optimize_inducing_points, InducingResult, VarianceObjective};
pub use partition::partition_routes;

/// Ordered, non-empty list of waypoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    waypoints: Vec<Vec2>,
}

impl Route {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::arg("a route needs at least one waypoint"));
        }
        Ok(Route { waypoints })
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn first(&self) -> Vec2 {
        self.waypoints[0]
    }

    pub fn last(&self) -> Vec2 {
        self.waypoints[self.waypoints.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn reversed(&self) -> Route {
        let mut w = self.waypoints.clone();
        w.reverse();
        Route { waypoints: w }
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Largest move of any single point in one iteration, meters.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 0.5,
            max_iters: 100,
            tolerance: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub n_drones: usize,
    /// Waypoints per drone route (p).
    pub points_per_drone: usize,
    pub bounds: Bounds,
    pub candidate_grid_spacing: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Boustrophedon lane spacing, meters.
    pub lane_spacing: f64,
}

impl PlannerConfig {
    pub fn new(n_drones: usize, bounds: Bounds) -> Self {
        PlannerConfig {
            n_drones,
            points_per_drone: 3,
            bounds,
            candidate_grid_spacing: 2.5,
            optimizer: OptimizerConfig::default(),
            lane_spacing: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.n_drones == 0 || self.points_per_drone == 0 {
            return Err(Error::arg("planner needs n >= 1 drones and p >= 1 points"));
        }
        if !(self.candidate_grid_spacing > 0.0) || !(self.lane_spacing > 0.0) {
            return Err(Error::arg("planner spacings must be positive"));
        }
        if !(self.optimizer.step_size > 0.0) || !(self.optimizer.tolerance >= 0.0) {
            return Err(Error::arg("optimizer step must be positive and tolerance >= 0"));
        }
        Ok(())
    }

    pub fn total_points(&self) -> usize {
        self.n_drones * self.points_per_drone
    }

    pub fn candidate_grid(&self) -> Result<Vec<Vec2>> {
        make_eval_grid(&self.bounds, self.candidate_grid_spacing)
    }
}

/// Progress of one drone along its route.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteFollower {
    route: Route,
    next: usize,
}

impl RouteFollower {
    pub fn new(route: Route) -> Self {
        RouteFollower { route, next: 0 }
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    /// Waypoint currently steered to; the final one once the route is done.
    pub fn target(&self) -> Vec2 {
        self.route.waypoints[self.next.min(self.route.len() - 1)]
    }

    pub fn next_index(&self) -> usize {
        self.next
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.route.len()
    }

    /// Advances past every waypoint within `arrive_tol` of `position`.
    pub fn update(&mut self, position: &Vec2, arrive_tol: f64) {
        while !self.is_done() && (self.route.waypoints[self.next] - position).norm() <= arrive_tol {
            self.next += 1;
        }
    }
}

/// True once every drone has reached the final waypoint of its route.
pub fn replan_trigger(followers: &[RouteFollower]) -> bool {
    !followers.is_empty() && followers.iter().all(RouteFollower::is_done)
}

/// Routes for every drone from one planning round.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    /// `routes[i]` is drone `i`'s route.
    pub routes: Vec<Route>,
    pub inducing: Vec<Vec2>,
    pub objective_init: f64,
    pub objective_final: f64,
    pub iterations: usize,
}

/// Full IPP round: inducing points, partition, assignment.
pub fn plan_routes(model: &GpModel, cfg: &PlannerConfig, positions: &[Vec2]) -> Result<Plan> {
    cfg.validate()?;
    if positions.len() != cfg.n_drones {
        return Err(Error::arg(format!(
            "{} drone positions for a {}-drone plan",
            positions.len(),
            cfg.n_drones
        )));
    }
    let objective = VarianceObjective::new(model, cfg.candidate_grid()?)?;
    let init = default_init(&objective, cfg.total_points());
    let result = optimize_inducing_points(&objective, cfg, &init)?;
    let routes = partition_routes(&result.points, cfg.n_drones, cfg.points_per_drone)?;
    let perm = assign_routes(&routes, positions)?;
    Ok(Plan {
        routes: perm.iter().map(|&r| routes[r].clone()).collect(),
        inducing: result.points,
        objective_init: result.initial,
        objective_final: result.value,
        iterations: result.iterations,
    })
}
