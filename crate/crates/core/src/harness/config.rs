use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::field::BiasField;
use crate::gpr::{HyperOptConfig, Hyperparams};
use crate::ipp::{OptimizerConfig, PlannerConfig};
use crate::sim::{DroneState, Limits, NoiseConfig};
use crate::{Bounds, Error, Result, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerKind {
    /// One serpentine per horizontal band, repeated back and forth.
    Boustrophedon,
    /// Variance-driven routes, replanned once every drone finishes.
    Ipp,
    /// Each drone shuttles along its own waypoint list.
    FixedWaypoints { waypoints: Vec<Vec<Vec2>> },
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Boustrophedon => "boustrophedon",
            PlannerKind::Ipp => "ipp",
            PlannerKind::FixedWaypoints { .. } => "fixed_waypoints",
        }
    }

    /// Parses a planner name for command-line overrides.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "boustrophedon" => Ok(PlannerKind::Boustrophedon),
            "ipp" => Ok(PlannerKind::Ipp),
            other => Err(Error::Config(format!(
                "unknown planner {other:?} (expected boustrophedon or ipp)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPoses {
    Explicit { poses: Vec<DroneState> },
    /// Evenly spaced on a circle, each drone facing outward. The centre
    /// defaults to the middle of the bounds.
    Circle {
        #[serde(default)]
        center: Option<Vec2>,
        radius: f64,
    },
}

/// Planner settings shared by all planners; drone count and bounds come from
/// the scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSettings {
    pub points_per_drone: usize,
    pub candidate_grid_spacing: f64,
    pub optimizer: OptimizerConfig,
    pub lane_spacing: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        let d = PlannerConfig::new(1, Bounds::square(1.0));
        PlannerSettings {
            points_per_drone: d.points_per_drone,
            candidate_grid_spacing: d.candidate_grid_spacing,
            optimizer: d.optimizer,
            lane_spacing: d.lane_spacing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpSettings {
    pub hyperparams: Hyperparams,
    pub optimize: bool,
    pub hyperopt: HyperOptConfig,
    /// Re-run the search once the training set has grown by this factor
    /// since the last search.
    pub reoptimize_growth: f64,
    /// Training sets above this size are thinned by uniform stride.
    pub max_train_points: usize,
}

impl Default for GpSettings {
    fn default() -> Self {
        GpSettings {
            hyperparams: Hyperparams::default(),
            optimize: false,
            hyperopt: HyperOptConfig::default(),
            reoptimize_growth: 1.5,
            max_train_points: 1500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub drone_id: usize,
    /// Bias at the anchor drone's first reading; the true value when absent.
    #[serde(default)]
    pub known_bias: Option<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub bounds: Bounds,
    pub n_drones: usize,
    pub initial: InitialPoses,
    pub field: BiasField,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub planner: PlannerKind,
    #[serde(default)]
    pub planner_cfg: PlannerSettings,
    #[serde(default)]
    pub gp: GpSettings,
    pub duration: f64,
    pub dt: f64,
    #[serde(default)]
    pub sbe_start: f64,
    pub anchor: AnchorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default = "default_arrive_tol")]
    pub arrive_tol: f64,
    #[serde(default = "default_merge_tol")]
    pub merge_tol: f64,
    /// Spacing of the grid the map is scored and exported on.
    #[serde(default = "default_eval_spacing")]
    pub eval_spacing: f64,
}

fn default_arrive_tol() -> f64 {
    0.5
}

fn default_merge_tol() -> f64 {
    crate::sbe::DEFAULT_MERGE_TOL
}

fn default_eval_spacing() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.bounds.validate()?;
        if self.n_drones < 2 {
            return bad(format!("need at least 2 drones, got {}", self.n_drones));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.sbe_start >= 0.0) || !(self.duration > self.sbe_start) || !self.duration.is_finite() {
            return bad(format!(
                "need duration > sbe_start >= 0, got duration {} sbe_start {}",
                self.duration, self.sbe_start
            ));
        }
        if self.anchor.drone_id >= self.n_drones {
            return bad(format!("anchor drone {} out of range", self.anchor.drone_id));
        }
        if !(self.arrive_tol > 0.0) || !(self.merge_tol >= 0.0) || !(self.eval_spacing > 0.0) {
            return bad("arrive_tol and eval_spacing must be positive, merge_tol >= 0".into());
        }
        if !(self.gp.reoptimize_growth >= 1.0) || self.gp.max_train_points == 0 {
            return bad("gp.reoptimize_growth must be >= 1 and max_train_points >= 1".into());
        }
        self.field.validate()?;
        self.noise.validate()?;
        self.limits.validate()?;
        self.gp.hyperparams.validate()?;
        if self.gp.optimize {
            self.gp.hyperopt.bounds.validate()?;
        }
        self.planner_config().validate()?;
        if let PlannerKind::FixedWaypoints { waypoints } = &self.planner {
            if waypoints.len() != self.n_drones || waypoints.iter().any(Vec::is_empty) {
                return bad("fixed_waypoints needs one non-empty list per drone".into());
            }
        }
        self.initial_states().map(|_| ())
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            n_drones: self.n_drones,
            points_per_drone: self.planner_cfg.points_per_drone,
            bounds: self.bounds,
            candidate_grid_spacing: self.planner_cfg.candidate_grid_spacing,
            optimizer: self.planner_cfg.optimizer,
            lane_spacing: self.planner_cfg.lane_spacing,
        }
    }

    /// Number of ticks after the initial reading.
    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn initial_states(&self) -> Result<Vec<DroneState>> {
        let states = match &self.initial {
            InitialPoses::Explicit { poses } => poses.clone(),
            InitialPoses::Circle { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("circle radius must be positive".into()));
                }
                let c = center.unwrap_or_else(|| self.bounds.center());
                (0..self.n_drones)
                    .map(|i| {
                        let phi = std::f64::consts::TAU * i as f64 / self.n_drones as f64;
                        DroneState::new(c + Vec2::new(phi.cos(), phi.sin()) * *radius, phi)
                    })
                    .collect()
            }
        };
        if states.len() != self.n_drones {
            return Err(Error::Config(format!(
                "{} initial poses for {} drones",
                states.len(),
                self.n_drones
            )));
        }
        if states.iter().any(|s| !crate::geometry::is_finite(&s.position) || !s.heading.is_finite()) {
            return Err(Error::Config("initial poses must be finite".into()));
        }
        Ok(states)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Built-in scenarios.
pub mod presets {
    use super::*;

    /// Rows `y = 4 + 7i`; even drones start west, odd drones start east.
    fn shuttle_rows(n: usize) -> (Vec<DroneState>, Vec<Vec<Vec2>>) {
        (0..n)
            .map(|i| {
                let y = 4.0 + 7.0 * i as f64;
                let (west, east) = (Vec2::new(5.0, y), Vec2::new(45.0, y));
                if i % 2 == 0 {
                    (DroneState::new(west, 0.0), vec![west, east])
                } else {
                    (DroneState::new(east, std::f64::consts::PI), vec![east, west])
                }
            })
            .unzip()
    }

    /// Smooth field with an offset, one broad bump and sampled ripples. The
    /// ripple grid extends 10 m past the 50 m square so drifting drones stay
    /// inside its domain.
    pub fn validation_field() -> BiasField {
        let ripples = (0..8)
            .map(|iy| {
                (0..8)
                    .map(|ix| {
                        let (x, y) = (ix as f64, iy as f64);
                        Vec2::new(0.5 * (1.3 * x + 0.7 * y).sin(), 0.5 * (0.9 * x - 1.1 * y).cos())
                    })
                    .collect()
            })
            .collect();
        BiasField::Sum {
            parts: vec![
                BiasField::constant(2.0, -1.5),
                BiasField::GaussianRadial {
                    center: Vec2::new(30.0, 20.0),
                    peak_magnitude: 2.5,
                    sigma: 12.0,
                },
                BiasField::GridInterp {
                    origin: Vec2::new(-10.0, -10.0),
                    spacing: 10.0,
                    values: ripples,
                },
            ],
        }
    }

    /// Seven drones shuttling between fixed waypoint pairs; 29 ticks give
    /// 210 measured positions.
    pub fn sbe_validation() -> ScenarioConfig {
        let n = 7;
        let (poses, waypoints) = shuttle_rows(n);
        ScenarioConfig {
            name: "sbe_validation".into(),
            bounds: Bounds::square(50.0),
            n_drones: n,
            initial: InitialPoses::Explicit { poses },
            field: validation_field(),
            noise: NoiseConfig::default(),
            planner: PlannerKind::FixedWaypoints { waypoints },
            planner_cfg: PlannerSettings::default(),
            gp: GpSettings {
                optimize: true,
                ..GpSettings::default()
            },
            duration: 5.8,
            dt: 0.2,
            sbe_start: 0.0,
            anchor: AnchorConfig {
                drone_id: 0,
                known_bias: None,
            },
            seed: 0,
            output_dir: None,
            limits: Limits::default(),
            arrive_tol: default_arrive_tol(),
            merge_tol: default_merge_tol(),
            eval_spacing: default_eval_spacing(),
        }
    }

    /// Base for process-noise sweeps: the validation scenario with exact
    /// GPS, bearing and range sensing.
    pub fn noise_sweep() -> ScenarioConfig {
        let mut cfg = sbe_validation();
        cfg.name = "noise_sweep".into();
        cfg.noise = NoiseConfig {
            process_sigma: 0.0,
            ..NoiseConfig::zero()
        };
        cfg
    }

    /// Three drones mapping a single radial bump.
    pub fn ipp_gaussian(planner: PlannerKind) -> ScenarioConfig {
        ScenarioConfig {
            name: format!("ipp_gaussian_{}", planner.name()),
            bounds: Bounds::square(50.0),
            n_drones: 3,
            initial: InitialPoses::Circle {
                center: None,
                radius: 3.0,
            },
            field: BiasField::GaussianRadial {
                center: Vec2::new(35.0, 30.0),
                peak_magnitude: 5.0,
                sigma: 10.0,
            },
            noise: NoiseConfig::default(),
            planner,
            planner_cfg: PlannerSettings::default(),
            gp: GpSettings::default(),
            duration: 30.0,
            dt: 0.2,
            sbe_start: 2.0,
            anchor: AnchorConfig {
                drone_id: 0,
                known_bias: None,
            },
            seed: 0,
            output_dir: None,
            limits: Limits::default(),
            arrive_tol: default_arrive_tol(),
            merge_tol: default_merge_tol(),
            eval_spacing: default_eval_spacing(),
        }
    }

    pub fn by_name(name: &str) -> Result<ScenarioConfig> {
        match name {
            "sbe-validation" => Ok(sbe_validation()),
            "noise-sweep" => Ok(noise_sweep()),
            "ipp-gaussian" => Ok(ipp_gaussian(PlannerKind::Ipp)),
            "boustrophedon-gaussian" => Ok(ipp_gaussian(PlannerKind::Boustrophedon)),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub const NAMES: [&str; 4] = [
        "sbe-validation",
        "noise-sweep",
        "ipp-gaussian",
        "boustrophedon-gaussian",
    ];
}
