//! Discrete-time multi-drone kinematics with noisy GPS, bearing and range
//! sensing.
//!
//! Each drone is a unicycle: heading plus forward speed. The true state picks
//! up additive Gaussian position noise every tick while the drone's own
//! estimate is propagated noise-free from the commanded actions (dead
//! reckoning). Every drone draws from its own seeded random stream, so the
//! outcome does not depend on the order drones are processed in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::field::BiasField;
use crate::geometry::{wrap_angle, wrap_pi};
use crate::{Error, Result, Vec2};

/// Minimum separation between two drones for bearings to be defined.
pub const MIN_SEPARATION: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Vec2,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
}

impl DroneState {
    pub fn new(position: Vec2, heading: f64) -> Self {
        DroneState {
            position,
            heading: wrap_angle(heading),
        }
    }
}

/// Dead-reckoned pose a drone believes it has.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroneEstimate {
    pub position: Vec2,
    pub heading: f64,
}

impl DroneEstimate {
    pub fn new(position: Vec2, heading: f64) -> Self {
        DroneEstimate {
            position,
            heading: wrap_angle(heading),
        }
    }
}

impl From<DroneState> for DroneEstimate {
    fn from(s: DroneState) -> Self {
        DroneEstimate {
            position: s.position,
            heading: s.heading,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// m/s
    pub max_speed: f64,
    /// rad/s
    pub max_turn_rate: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_speed: 2.0,
            max_turn_rate: std::f64::consts::PI,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed >= 0.0) || !(self.max_turn_rate >= 0.0) {
            return Err(Error::arg("action limits must be non-negative"));
        }
        Ok(())
    }
}

/// Commanded speed and turn rate, always inside the action limits.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Action {
    speed: f64,
    angular_velocity: f64,
}

impl Action {
    pub const IDLE: Action = Action {
        speed: 0.0,
        angular_velocity: 0.0,
    };

    /// Clamps the request into `[0, s_max] × [-ω_max, ω_max]`.
    pub fn clamped(speed: f64, angular_velocity: f64, limits: &Limits) -> Self {
        Action {
            speed: speed.clamp(0.0, limits.max_speed),
            angular_velocity: angular_velocity.clamp(-limits.max_turn_rate, limits.max_turn_rate),
        }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn angular_velocity(&self) -> f64 {
        self.angular_velocity
    }
}

/// Standard deviations of the Gaussian noise terms, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub process_sigma: f64,
    pub gps_sigma: f64,
    pub bearing_sigma: f64,
    pub range_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            process_sigma: 0.05,
            gps_sigma: 0.01,
            bearing_sigma: 0.01,
            range_sigma: 0.01,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        NoiseConfig {
            process_sigma: 0.0,
            gps_sigma: 0.0,
            bearing_sigma: 0.0,
            range_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.process_sigma,
            self.gps_sigma,
            self.bearing_sigma,
            self.range_sigma,
        ];
        if all.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::arg(format!("noise sigmas must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Per-drone random stream: the scenario seed selects the key and the drone
/// id selects the ChaCha stream.
#[derive(Clone, Debug)]
pub struct DroneRng(ChaCha8Rng);

impl DroneRng {
    pub fn new(seed: u64, drone_id: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(drone_id as u64);
        DroneRng(rng)
    }

    /// Isotropic 2D Gaussian. Always consumes two draws so that streams stay
    /// aligned across noise levels.
    pub fn gauss2(&mut self, sigma: f64) -> Vec2 {
        let x: f64 = self.0.sample(StandardNormal);
        let y: f64 = self.0.sample(StandardNormal);
        Vec2::new(x, y) * sigma
    }
}

/// One drone's sensor bundle at one timestep. Peer lists are ordered by
/// ascending peer id with the observer itself omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub drone_id: usize,
    pub timestep: u64,
    pub gps: Vec2,
    /// Unit vectors, one per peer.
    pub bearings: Vec<Vec2>,
    pub ranges: Vec<f64>,
}

impl Observation {
    /// Index into `bearings`/`ranges` for peer `j`.
    pub fn peer_slot(&self, j: usize) -> Option<usize> {
        match j.cmp(&self.drone_id) {
            std::cmp::Ordering::Less => Some(j),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(j - 1),
        }
        .filter(|&s| s < self.ranges.len())
    }

    /// Peer ids in slot order.
    pub fn peers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..=self.ranges.len()).filter(move |&j| j != self.drone_id)
    }
}

/// Unicycle transition with additive position noise.
pub fn step(
    state: &DroneState,
    action: &Action,
    dt: f64,
    process_sigma: f64,
    rng: &mut DroneRng,
) -> DroneState {
    debug_assert!(dt > 0.0);
    let noise = rng.gauss2(process_sigma);
    let heading = Vec2::new(state.heading.cos(), state.heading.sin());
    DroneState {
        position: state.position + heading * (action.speed * dt) + noise,
        heading: wrap_angle(state.heading + action.angular_velocity * dt),
    }
}

/// Noise-free application of the motion model to an estimate.
pub fn dead_reckon(est: &DroneEstimate, action: &Action, dt: f64) -> DroneEstimate {
    debug_assert!(dt > 0.0);
    let heading = Vec2::new(est.heading.cos(), est.heading.sin());
    DroneEstimate {
        position: est.position + heading * (action.speed * dt),
        heading: wrap_angle(est.heading + action.angular_velocity * dt),
    }
}

/// GPS, bearings and ranges for drone `i`.
///
/// Bearing and range noise perturb the relative displacement before it is
/// normalized or measured. The bearing is `(P_i - P_j + e) / |P_i - P_j + e|`,
/// so it points from peer `j` toward the observer.
pub fn sense(
    world: &BiasField,
    swarm: &[DroneState],
    i: usize,
    noise: &NoiseConfig,
    rng: &mut DroneRng,
    timestep: u64,
) -> Result<Observation> {
    let n = swarm.len();
    if n < 2 {
        return Err(Error::arg("sensing needs at least two drones"));
    }
    if i >= n {
        return Err(Error::arg(format!("drone index {i} out of range for {n} drones")));
    }
    let own = swarm[i].position;
    let gps = own + world.eval(&own)? + rng.gauss2(noise.gps_sigma);
    let mut bearings = Vec::with_capacity(n - 1);
    let mut ranges = Vec::with_capacity(n - 1);
    for (j, peer) in swarm.iter().enumerate() {
        if j == i {
            continue;
        }
        let rel = own - peer.position;
        if rel.norm() < MIN_SEPARATION {
            return Err(Error::DegenerateGeometry(format!(
                "drones {i} and {j} coincide at {:?}",
                own
            )));
        }
        let b = rel + rng.gauss2(noise.bearing_sigma);
        let norm = b.norm();
        if norm < MIN_SEPARATION {
            return Err(Error::DegenerateGeometry(format!(
                "bearing noise cancelled the displacement between drones {i} and {j}"
            )));
        }
        bearings.push(b / norm);
        ranges.push((rel + rng.gauss2(noise.range_sigma)).norm());
    }
    Ok(Observation {
        drone_id: i,
        timestep,
        gps,
        bearings,
        ranges,
    })
}

/// Proportional heading controller toward a waypoint.
///
/// Turns at the rate that would close the heading error within one tick,
/// saturated at the turn-rate limit. Speed is the full limit except inside
/// the slowdown radius (one tick of full-speed travel), where it lands on the
/// waypoint. A drone facing more than 90° away turns in place first.
pub fn waypoint_controller(
    est: &DroneEstimate,
    waypoint: &Vec2,
    limits: &Limits,
    dt: f64,
    arrive_tol: f64,
) -> Action {
    let to_go = waypoint - est.position;
    let dist = to_go.norm();
    if dist <= arrive_tol {
        return Action::IDLE;
    }
    let error = wrap_pi(to_go.y.atan2(to_go.x) - est.heading);
    let omega = error / dt;
    let speed = if error.abs() > std::f64::consts::FRAC_PI_2 {
        0.0
    } else if dist < limits.max_speed * dt {
        dist / dt
    } else {
        limits.max_speed
    };
    Action::clamped(speed, omega, limits)
}

/// Mutable simulation state for a whole swarm.
#[derive(Clone, Debug)]
pub struct Swarm {
    pub states: Vec<DroneState>,
    pub estimates: Vec<DroneEstimate>,
    rngs: Vec<DroneRng>,
    timestep: u64,
}

impl Swarm {
    /// Drones start knowing their true initial pose.
    pub fn new(initial: Vec<DroneState>, seed: u64) -> Self {
        let rngs = (0..initial.len()).map(|i| DroneRng::new(seed, i)).collect();
        Swarm {
            estimates: initial.iter().map(|&s| s.into()).collect(),
            states: initial,
            rngs,
            timestep: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// Senses every drone at the current timestep.
    pub fn observe(&mut self, world: &BiasField, noise: &NoiseConfig) -> Result<Vec<Observation>> {
        (0..self.states.len())
            .map(|i| sense(world, &self.states, i, noise, &mut self.rngs[i], self.timestep))
            .collect()
    }

    /// Moves every drone one tick; all drones move before anyone senses.
    pub fn advance(&mut self, actions: &[Action], dt: f64, noise: &NoiseConfig) {
        assert_eq!(actions.len(), self.states.len());
        for (i, action) in actions.iter().enumerate() {
            self.states[i] = step(
                &self.states[i],
                action,
                dt,
                noise.process_sigma,
                &mut self.rngs[i],
            );
            self.estimates[i] = dead_reckon(&self.estimates[i], action, dt);
        }
        self.timestep += 1;
    }
}
