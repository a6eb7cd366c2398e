//! Closed-loop simulation: seeded worlds, ground-truth obstacle motion, a
//! constant-velocity Kalman tracker per obstacle, an ideal trajectory
//! follower and Monte-Carlo campaigns.

use nalgebra::{Matrix3, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devprm::SamplingBudget;
use crate::dynenv::{DynamicObstacle, EnvError, EnvSnapshot, Shape, WorldBox};
use crate::fmt::float17;
use crate::topomgr::{plan_cycle, BranchQueue, BranchSummary, PhaseTimings, PlannerConfig, Variant};
use crate::utfminco::{InitState, UtfTrajectory};
use crate::Vec3;

/// Clearance kept between generated obstacles and the start and goal (m).
pub const PLACEMENT_CLEARANCE: f64 = 1.5;
/// Rejected placements tolerated per obstacle.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("could not place obstacle {index} after {tries} attempts; the world is too dense")]
    OverDense { index: usize, tries: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    ConstVelBounce,
    Pursuit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub bounds: WorldBox,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub radius_range: [f64; 2],
    pub speed_range: [f64; 2],
    /// Share of cylinders among generated obstacles; the rest are spheres.
    pub cylinder_fraction: f64,
    pub motion_model: MotionModel,
    /// Turn-rate cap of pursuing obstacles (rad/s).
    pub pursuit_turn_rate: f64,
    pub seed: u64,
    pub p_start: Vec3,
    pub p_goal: Vec3,
    pub r_safe: f64,
    /// Position measurement noise (m).
    pub sigma_z: f64,
    /// White-acceleration process noise density (m^2/s^3).
    pub q: f64,
}

impl WorldConfig {
    pub fn new(bounds: WorldBox, p_start: Vec3, p_goal: Vec3) -> Self {
        Self {
            bounds,
            n_static: 0,
            n_dynamic: 0,
            radius_range: [0.2, 0.5],
            speed_range: [0.3, 1.0],
            cylinder_fraction: 0.5,
            motion_model: MotionModel::ConstVelBounce,
            pursuit_turn_rate: 2.0,
            seed: 0,
            p_start,
            p_goal,
            r_safe: 0.2,
            sigma_z: 0.05,
            q: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ext = self.bounds.extent();
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) {
            return Err("bounds: max must exceed min on every axis".into());
        }
        let [r0, r1] = self.radius_range;
        if !(r0 > 0.0 && r0 <= r1) {
            return Err("radius_range: must be positive and ordered".into());
        }
        let [s0, s1] = self.speed_range;
        if !(s0 >= 0.0 && s0 <= s1) {
            return Err("speed_range: must be non-negative and ordered".into());
        }
        if !(0.0..=1.0).contains(&self.cylinder_fraction) {
            return Err("cylinder_fraction: must lie in [0, 1]".into());
        }
        if !(self.pursuit_turn_rate >= 0.0) {
            return Err("pursuit_turn_rate: must be non-negative".into());
        }
        if !self.bounds.contains(&self.p_start) {
            return Err("p_start: must lie inside bounds".into());
        }
        if !self.bounds.contains(&self.p_goal) {
            return Err("p_goal: must lie inside bounds".into());
        }
        if !(self.r_safe >= 0.0) {
            return Err("r_safe: must be non-negative".into());
        }
        if !(self.sigma_z >= 0.0) {
            return Err("sigma_z: must be non-negative".into());
        }
        if !(self.q >= 0.0) {
            return Err("q: must be non-negative".into());
        }
        Ok(())
    }
}

/// Ground truth. Obstacles reuse the planner's obstacle type with zero
/// uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub bounds: WorldBox,
    pub static_obs: Vec<DynamicObstacle>,
    pub dynamic: Vec<DynamicObstacle>,
    pub motion_model: MotionModel,
    pub pursuit_turn_rate: f64,
}

impl World {
    /// Smallest surface distance from `p` to any obstacle.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        self.static_obs
            .iter()
            .chain(&self.dynamic)
            .map(|o| o.clearance_to(p, &o.position, o.radius))
            .fold(f64::INFINITY, f64::min)
    }
}

fn random_direction(rng: &mut ChaCha8Rng, shape: Shape) -> Vec3 {
    match shape {
        Shape::Cylinder => {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            Vec3::new(a.cos(), a.sin(), 0.0)
        }
        Shape::Sphere => loop {
            let d = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
            if d.norm() > 1e-9 {
                break d.normalize();
            }
        },
    }
}

/// Seeded obstacle placement with start and goal kept clear.
pub fn generate_world(cfg: &WorldConfig) -> Result<World, SimError> {
    cfg.validate().map_err(SimError::Invalid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = (cfg.bounds.min, cfg.bounds.max);
    let mut place = |index: usize, moving: bool| -> Result<DynamicObstacle, SimError> {
        for _ in 0..MAX_REJECTIONS {
            let shape = if rng.gen::<f64>() < cfg.cylinder_fraction { Shape::Cylinder } else { Shape::Sphere };
            let mut p = Vec3::from_fn(|i, _| rng.gen_range(lo[i]..=hi[i]));
            if shape == Shape::Cylinder {
                p.z = 0.5 * (lo.z + hi.z);
            }
            let [r0, r1] = cfg.radius_range;
            let r = rng.gen_range(r0..=r1);
            let velocity = if moving {
                let [s0, s1] = cfg.speed_range;
                random_direction(&mut rng, shape) * rng.gen_range(s0..=s1)
            } else {
                Vec3::zeros()
            };
            let o = DynamicObstacle {
                shape,
                ..DynamicObstacle::sphere(index as u32, p, velocity, r, 0.0, 0.0)
            };
            let clear = [cfg.p_start, cfg.p_goal]
                .iter()
                .all(|q| o.clearance_to(q, &p, r) >= PLACEMENT_CLEARANCE);
            if clear {
                return Ok(o);
            }
        }
        Err(SimError::OverDense {
            index,
            tries: MAX_REJECTIONS,
        })
    };
    let static_obs = (0..cfg.n_static).map(|i| place(i, false)).collect::<Result<Vec<_>, _>>()?;
    let dynamic = (0..cfg.n_dynamic)
        .map(|i| place(cfg.n_static + i, true))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(World {
        bounds: cfg.bounds,
        static_obs,
        dynamic,
        motion_model: cfg.motion_model,
        pursuit_turn_rate: cfg.pursuit_turn_rate,
    })
}

/// Turns `v` towards `target` by at most `max_angle`, keeping its length.
fn steer(v: &Vec3, target: &Vec3, max_angle: f64) -> Vec3 {
    let speed = v.norm();
    if speed < 1e-12 || target.norm() < 1e-12 {
        return *v;
    }
    let (u, w) = (v / speed, target.normalize());
    let angle = u.dot(&w).clamp(-1.0, 1.0).acos();
    if angle <= max_angle {
        return w * speed;
    }
    // Component of w orthogonal to u spans the turning plane.
    let mut perp = w - u * u.dot(&w);
    if perp.norm() < 1e-12 {
        perp = u.cross(&Vec3::z()).try_normalize(1e-12).unwrap_or_else(|| u.cross(&Vec3::x()).normalize());
    }
    let perp = perp.normalize();
    (u * max_angle.cos() + perp * max_angle.sin()) * speed
}

/// Moves every dynamic obstacle by `dt`, reflecting off the world box.
pub fn advance_obstacles(world: &mut World, dt: f64, ego: &Vec3) {
    let (lo, hi) = (world.bounds.min, world.bounds.max);
    for o in &mut world.dynamic {
        if world.motion_model == MotionModel::Pursuit {
            let mut bearing = ego - o.position;
            if o.shape == Shape::Cylinder {
                bearing.z = 0.0;
            }
            o.velocity = steer(&o.velocity, &bearing, world.pursuit_turn_rate * dt);
        }
        o.position += o.velocity * dt;
        let axes = if o.shape == Shape::Cylinder { 0..2 } else { 0..3 };
        for i in axes {
            if o.position[i] > hi[i] {
                o.position[i] = 2.0 * hi[i] - o.position[i];
                o.velocity[i] = -o.velocity[i].abs();
            } else if o.position[i] < lo[i] {
                o.position[i] = 2.0 * lo[i] - o.position[i];
                o.velocity[i] = o.velocity[i].abs();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Prior standard deviation of the velocity on the first fix (m/s).
    pub v_prior: f64,
    pub c_mu: f64,
    pub mu_max: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            v_prior: 1.0,
            c_mu: 2.0,
            mu_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrack {
    pub id: u32,
    /// `[p, v]`.
    pub state: Vector6<f64>,
    pub cov: Matrix6<f64>,
    pub mu: f64,
    /// Normalized innovation squared of the last update.
    pub nis: f64,
}

impl ObstacleTrack {
    /// Track started from a first position fix.
    pub fn init(id: u32, z: &Vec3, sigma_z: f64, params: &EstimatorParams) -> Self {
        let mut state = Vector6::zeros();
        state.fixed_rows_mut::<3>(0).copy_from(z);
        let mut cov = Matrix6::zeros();
        for i in 0..3 {
            cov[(i, i)] = sigma_z * sigma_z;
            cov[(i + 3, i + 3)] = params.v_prior * params.v_prior;
        }
        let mut t = Self {
            id,
            state,
            cov,
            mu: 0.0,
            nis: 0.0,
        };
        t.mu = t.derived_mu(params);
        t
    }

    pub fn position(&self) -> Vec3 {
        self.state.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vec3 {
        self.state.fixed_rows::<3>(3).into()
    }

    fn derived_mu(&self, params: &EstimatorParams) -> f64 {
        let tr = self.cov[(3, 3)] + self.cov[(4, 4)] + self.cov[(5, 5)];
        (params.c_mu * tr.max(0.0).sqrt()).clamp(0.0, params.mu_max)
    }
}

/// One predict/update cycle of the constant-velocity filter with a
/// position-only measurement. Without a track, the fix starts one.
pub fn estimator_step(
    track: Option<&ObstacleTrack>,
    id: u32,
    z: &Vec3,
    dt: f64,
    sigma_z: f64,
    q: f64,
    params: &EstimatorParams,
) -> ObstacleTrack {
    let Some(track) = track else {
        return ObstacleTrack::init(id, z, sigma_z, params);
    };
    let i3 = Matrix3::identity();
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(i3 * dt));
    let mut qm = Matrix6::zeros();
    qm.fixed_view_mut::<3, 3>(0, 0).copy_from(&(i3 * (q * dt.powi(3) / 3.0)));
    qm.fixed_view_mut::<3, 3>(0, 3).copy_from(&(i3 * (q * dt * dt / 2.0)));
    qm.fixed_view_mut::<3, 3>(3, 0).copy_from(&(i3 * (q * dt * dt / 2.0)));
    qm.fixed_view_mut::<3, 3>(3, 3).copy_from(&(i3 * (q * dt)));

    let x = f * track.state;
    let p = f * track.cov * f.transpose() + qm;
    let innov = z - x.fixed_rows::<3>(0);
    let s = p.fixed_view::<3, 3>(0, 0) + i3 * (sigma_z * sigma_z);
    let s_inv = s.try_inverse().unwrap_or_else(Matrix3::zeros);
    // K = P H^T S^-1 with H = [I 0].
    let k = p.fixed_view::<6, 3>(0, 0) * s_inv;
    let state = x + k * innov;
    let mut ikh = Matrix6::identity();
    let kh = ikh.fixed_view::<6, 3>(0, 0) - k;
    ikh.fixed_view_mut::<6, 3>(0, 0).copy_from(&kh);
    // Joseph form keeps the covariance symmetric positive semi-definite.
    let mut cov = ikh * p * ikh.transpose();
    let kr = k * (sigma_z * sigma_z);
    cov += kr * k.transpose();
    cov = (cov + cov.transpose()) * 0.5;
    let mut t = ObstacleTrack {
        id,
        state,
        cov,
        mu: 0.0,
        nis: (innov.transpose() * s_inv * innov)[(0, 0)],
    };
    t.mu = t.derived_mu(params);
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub dt: f64,
    /// Arrival tolerance (m).
    pub epsilon: f64,
    pub t_limit: f64,
    /// Deadlock when the vehicle moved less than `deadlock_dist` over the
    /// last `deadlock_window` seconds.
    pub deadlock_window: f64,
    pub deadlock_dist: f64,
    /// Extra ground-truth collision checks between ticks.
    pub collision_substeps: usize,
    pub estimator: EstimatorParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            epsilon: 0.3,
            t_limit: 120.0,
            deadlock_window: 10.0,
            deadlock_dist: 0.05,
            collision_substeps: 4,
            estimator: EstimatorParams::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("dt: must be positive".into());
        }
        if !(self.epsilon > 0.0) {
            return Err("epsilon: must be positive".into());
        }
        if !(self.t_limit > 0.0) {
            return Err("t_limit: must be positive".into());
        }
        if !(self.deadlock_window > 0.0) {
            return Err("deadlock_window: must be positive".into());
        }
        if !(self.deadlock_dist >= 0.0) {
            return Err("deadlock_dist: must be non-negative".into());
        }
        let e = &self.estimator;
        if !(e.v_prior > 0.0) {
            return Err("v_prior: must be positive".into());
        }
        if !(e.c_mu >= 0.0) {
            return Err("c_mu: must be non-negative".into());
        }
        if !(e.mu_max >= 0.0) {
            return Err("mu_max: must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
    Deadlock,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
            Outcome::Deadlock => "deadlock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub id: u32,
    pub shape: Shape,
    pub p: Vec3,
    pub v: Vec3,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub id: u32,
    pub p: Vec3,
    pub v: Vec3,
    pub mu: f64,
}

/// One planning tick. Wall-clock timings are kept apart so that the record
/// is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub cycle: usize,
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    /// Ground-truth clearance of the vehicle.
    #[serde(deserialize_with = "crate::fmt::f64_or_inf")]
    pub clearance: f64,
    pub chosen_id: Option<u64>,
    pub degraded: bool,
    pub explored: usize,
    pub branches: Vec<BranchSummary>,
    pub chosen: UtfTrajectory,
    pub obstacles: Vec<ObstacleRecord>,
    pub estimates: Vec<EstimateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub variant: Variant,
    pub ticks: Vec<TickRecord>,
    pub timings: Vec<PhaseTimings>,
    pub outcome: Outcome,
    /// Time of arrival for successful episodes.
    pub arrival_time: Option<f64>,
    /// Vehicle state when the episode ended.
    pub final_p: Vec3,
    /// Smallest ground-truth clearance over every tick and sub-step.
    #[serde(deserialize_with = "crate::fmt::f64_or_inf")]
    pub min_clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub outcome: Outcome,
    pub arrival_time: Option<f64>,
    pub ticks: usize,
    pub max_speed: f64,
    pub max_accel: f64,
    #[serde(deserialize_with = "crate::fmt::f64_or_inf")]
    pub min_clearance: f64,
    /// Cycles whose chosen branch differs from the previous one.
    pub switches: usize,
}

impl EpisodeLog {
    pub fn metrics(&self) -> EpisodeMetrics {
        let max = |f: &dyn Fn(&TickRecord) -> f64| self.ticks.iter().map(f).fold(0.0, f64::max);
        EpisodeMetrics {
            outcome: self.outcome,
            arrival_time: self.arrival_time,
            ticks: self.ticks.len(),
            max_speed: max(&|r| r.v.norm()),
            max_accel: max(&|r| r.a.norm()),
            min_clearance: self.min_clearance,
            switches: self
                .ticks
                .windows(2)
                .filter(|w| w[1].chosen_id.is_some() && w[0].chosen_id.is_some() && w[1].chosen_id != w[0].chosen_id)
                .count(),
        }
    }
}

fn measurement_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_5E45_0125)
}

/// Runs one closed-loop episode. `seed` drives the measurement noise and the
/// frontend; the world is taken as given.
pub fn run_episode(
    world: &World,
    world_cfg: &WorldConfig,
    planner: &PlannerConfig,
    sim: &SimParams,
    seed: u64,
) -> Result<EpisodeLog, SimError> {
    sim.validate().map_err(SimError::Invalid)?;
    let mut cfg = planner.clone();
    cfg.spec.p_goal = world_cfg.p_goal;
    cfg.frontend.seed = seed;
    cfg.validate().map_err(SimError::Invalid)?;

    let mut truth = world.clone();
    let mut rng = measurement_rng(seed);
    let noise = Normal::new(0.0, world_cfg.sigma_z).map_err(|e| SimError::Invalid(e.to_string()))?;
    let mut tracks: Vec<ObstacleTrack> = Vec::new();
    let mut queue = BranchQueue::new(cfg.capacity);
    let mut ego = InitState::at_rest(world_cfg.p_start);
    let mut ticks = Vec::new();
    let mut timings = Vec::new();
    let mut history: Vec<Vec3> = Vec::new();
    let mut min_clearance = truth.clearance(&ego.p);
    let window = (sim.deadlock_window / sim.dt).round() as usize;
    let max_ticks = (sim.t_limit / sim.dt).round() as usize;

    let mut cycle = 0usize;
    let outcome = loop {
        let t = cycle as f64 * sim.dt;
        if min_clearance < 0.0 {
            break Outcome::Collision;
        }
        if (ego.p - world_cfg.p_goal).norm() < sim.epsilon {
            break Outcome::Success;
        }
        if cycle >= max_ticks {
            break Outcome::Timeout;
        }
        if history.len() > window && (ego.p - history[history.len() - 1 - window]).norm() < sim.deadlock_dist {
            break Outcome::Deadlock;
        }

        // Sense and track.
        tracks = truth
            .dynamic
            .iter()
            .map(|o| {
                let z = o.position + Vec3::from_fn(|_, _| noise.sample(&mut rng));
                let prev = tracks.iter().find(|tr| tr.id == o.id);
                estimator_step(prev, o.id, &z, sim.dt, world_cfg.sigma_z, world_cfg.q, &sim.estimator)
            })
            .collect();
        let dynamic: Vec<DynamicObstacle> = tracks
            .iter()
            .zip(&truth.dynamic)
            .map(|(tr, o)| DynamicObstacle {
                position: tr.position(),
                velocity: tr.velocity(),
                mu: tr.mu,
                t_obs: t,
                ..o.clone()
            })
            .collect();
        let env = EnvSnapshot::new(
            t,
            dynamic,
            truth.static_obs.clone(),
            world.bounds,
            world_cfg.r_safe,
            cfg.frontend.horizon,
        )?;

        let out = plan_cycle(&mut queue, &ego, t, &env, &cfg);
        ticks.push(TickRecord {
            cycle,
            t,
            p: ego.p,
            v: ego.v,
            a: ego.a,
            clearance: truth.clearance(&ego.p),
            chosen_id: out.chosen_id,
            degraded: out.degraded,
            explored: out.explored,
            branches: out.branches,
            chosen: out.chosen.clone(),
            obstacles: truth
                .static_obs
                .iter()
                .chain(&truth.dynamic)
                .map(|o| ObstacleRecord {
                    id: o.id,
                    shape: o.shape,
                    p: o.position,
                    v: o.velocity,
                    r: o.radius,
                })
                .collect(),
            estimates: tracks
                .iter()
                .map(|tr| EstimateRecord {
                    id: tr.id,
                    p: tr.position(),
                    v: tr.velocity(),
                    mu: tr.mu,
                })
                .collect(),
        });
        timings.push(out.timings);
        history.push(ego.p);

        // Follow the chosen trajectory and move the world, checking
        // collisions at sub-steps along the way.
        let before: Vec<Vec3> = truth.dynamic.iter().map(|o| o.position).collect();
        advance_obstacles(&mut truth, sim.dt, &ego.p);
        let subs = sim.collision_substeps + 1;
        for k in 1..=subs {
            let s = k as f64 / subs as f64;
            let p = out.chosen.position(t + s * sim.dt);
            let mut c = truth
                .static_obs
                .iter()
                .map(|o| o.clearance_to(&p, &o.position, o.radius))
                .fold(f64::INFINITY, f64::min);
            for (o, p0) in truth.dynamic.iter().zip(&before) {
                let center = p0 + (o.position - p0) * s;
                c = c.min(o.clearance_to(&p, &center, o.radius));
            }
            min_clearance = min_clearance.min(c);
        }
        let t_next = (cycle + 1) as f64 * sim.dt;
        ego = InitState {
            p: out.chosen.position(t_next),
            v: out.chosen.velocity(t_next),
            a: out.chosen.acceleration(t_next),
        };
        cycle += 1;
    };
    let arrival_time = (outcome == Outcome::Success).then_some(cycle as f64 * sim.dt);
    Ok(EpisodeLog {
        seed,
        variant: cfg.variant,
        ticks,
        timings,
        outcome,
        arrival_time,
        final_p: ego.p,
        min_clearance,
    })
}

/// Per-episode line of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
    #[serde(skip)]
    pub timings: Vec<PhaseTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: Variant,
    pub n_runs: usize,
    pub success_rate: f64,
    /// Mean over successful runs; NaN when there are none.
    pub mean_arrival_s: f64,
    pub collisions: usize,
    pub timeouts: usize,
    pub deadlocks: usize,
    /// `[march, replan, explore]` wall-clock percentiles over every cycle.
    pub p50_ms: [f64; 3],
    pub p95_ms: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub variants: Vec<VariantStats>,
    pub runs: Vec<RunSummary>,
}

/// Nearest-rank percentile of an unsorted sample; NaN when empty.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Episodes for seeds `seed0 .. seed0 + n_runs` under every variant. The
/// world of each seed is shared by all variants.
pub fn run_monte_carlo(
    world_cfg: &WorldConfig,
    planner: &PlannerConfig,
    sim: &SimParams,
    variants: &[Variant],
    n_runs: usize,
    seed0: u64,
) -> Result<McStats, SimError> {
    if n_runs == 0 {
        return Err(SimError::Invalid("runs: must be at least 1".into()));
    }
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|v| (0..n_runs as u64).map(move |k| (*v, seed0.wrapping_add(k))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(variant, seed)| {
            let wc = WorldConfig {
                seed: *seed,
                ..world_cfg.clone()
            };
            let world = generate_world(&wc)?;
            let cfg = planner.clone().with_variant(*variant);
            let log = run_episode(&world, &wc, &cfg, sim, *seed)?;
            Ok(RunSummary {
                variant: *variant,
                seed: *seed,
                metrics: log.metrics(),
                timings: log.timings,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let variants = variants
        .iter()
        .map(|v| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.variant == *v).collect();
            let count = |o: Outcome| mine.iter().filter(|r| r.metrics.outcome == o).count();
            let arrivals: Vec<f64> = mine.iter().filter_map(|r| r.metrics.arrival_time).collect();
            let phase = |f: fn(&PhaseTimings) -> f64| -> Vec<f64> {
                mine.iter().flat_map(|r| r.timings.iter().map(f)).collect()
            };
            let phases = [phase(|t| t.march_ms), phase(|t| t.replan_ms), phase(|t| t.explore_ms)];
            VariantStats {
                variant: *v,
                n_runs: mine.len(),
                success_rate: count(Outcome::Success) as f64 / mine.len() as f64,
                mean_arrival_s: if arrivals.is_empty() {
                    f64::NAN
                } else {
                    arrivals.iter().sum::<f64>() / arrivals.len() as f64
                },
                collisions: count(Outcome::Collision),
                timeouts: count(Outcome::Timeout),
                deadlocks: count(Outcome::Deadlock),
                p50_ms: std::array::from_fn(|i| percentile(&phases[i], 50.0)),
                p95_ms: std::array::from_fn(|i| percentile(&phases[i], 95.0)),
            }
        })
        .collect();
    Ok(McStats { variants, runs })
}

impl McStats {
    /// Outcome statistics; reproducible byte for byte.
    pub fn stats_csv(&self) -> String {
        let mut s = String::from("variant,n_runs,success_rate,mean_arrival_s,collisions,timeouts,deadlocks\n");
        for v in &self.variants {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                v.variant.name(),
                v.n_runs,
                float17(v.success_rate),
                float17(v.mean_arrival_s),
                v.collisions,
                v.timeouts,
                v.deadlocks
            ));
        }
        s
    }

    /// Wall-clock phase percentiles; these vary from run to run.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from(
            "variant,p50_march_ms,p95_march_ms,p50_replan_ms,p95_replan_ms,p50_explore_ms,p95_explore_ms\n",
        );
        for v in &self.variants {
            let cols: Vec<String> = (0..3)
                .flat_map(|i| [float17(v.p50_ms[i]), float17(v.p95_ms[i])])
                .collect();
            s.push_str(&format!("{},{}\n", v.variant.name(), cols.join(",")));
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s =
            String::from("variant,seed,outcome,arrival_s,ticks,max_speed,max_accel,min_clearance,switches\n");
        for r in &self.runs {
            let m = &r.metrics;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.variant.name(),
                r.seed,
                m.outcome.name(),
                float17(m.arrival_time.unwrap_or(f64::NAN)),
                m.ticks,
                float17(m.max_speed),
                float17(m.max_accel),
                float17(m.min_clearance),
                m.switches
            ));
        }
        s
    }
}

/// Count-bounded frontend budget used in simulation so that episodes are
/// reproducible on any machine.
pub fn sim_budget() -> SamplingBudget {
    SamplingBudget::deterministic(SamplingBudget::default().n_max)
}
