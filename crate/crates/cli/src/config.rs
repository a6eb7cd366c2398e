//! Declarative run configuration (TOML) with strict keys and filled-in
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use trust_core::devprm::SamplingBudget;
use trust_core::simharness::{EstimatorParams, MotionModel, SimParams, WorldConfig};
use trust_core::topomgr::{PlannerConfig, Variant};
use trust_core::utfminco::{InitState, SolverParams};
use trust_core::{Vec3, WorldBox};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub world: WorldSection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub ego: EgoSection,
    #[serde(default)]
    pub mc: McSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

fn world_defaults() -> WorldConfig {
    WorldConfig::new(WorldBox::new(Vec3::zeros(), Vec3::repeat(1.0)), Vec3::zeros(), Vec3::zeros())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub bounds: Bounds,
    pub p_goal: [f64; 3],
    /// Defaults to a point 4% of the box length in from the low-x face,
    /// centred on the other two axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_start: Option<[f64; 3]>,
    #[serde(default)]
    pub n_static: usize,
    #[serde(default)]
    pub n_dynamic: usize,
    #[serde(default = "d_radius_range")]
    pub radius_range: [f64; 2],
    #[serde(default = "d_speed_range")]
    pub speed_range: [f64; 2],
    #[serde(default = "d_cylinder_fraction")]
    pub cylinder_fraction: f64,
    #[serde(default = "d_motion_model")]
    pub motion_model: MotionModel,
    #[serde(default = "d_pursuit_turn_rate")]
    pub pursuit_turn_rate: f64,
    #[serde(default = "d_r_safe")]
    pub r_safe: f64,
    #[serde(default = "d_sigma_z")]
    pub sigma_z: f64,
    #[serde(default = "d_q")]
    pub q: f64,
}

fn d_radius_range() -> [f64; 2] {
    world_defaults().radius_range
}
fn d_speed_range() -> [f64; 2] {
    world_defaults().speed_range
}
fn d_cylinder_fraction() -> f64 {
    world_defaults().cylinder_fraction
}
fn d_motion_model() -> MotionModel {
    world_defaults().motion_model
}
fn d_pursuit_turn_rate() -> f64 {
    world_defaults().pursuit_turn_rate
}
fn d_r_safe() -> f64 {
    world_defaults().r_safe
}
fn d_sigma_z() -> f64 {
    world_defaults().sigma_z
}
fn d_q() -> f64 {
    world_defaults().q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// Wall-clock cap of the frontend. Unset keeps runs reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_ms: Option<f64>,
    pub n_max: usize,
    pub beam_width: usize,
    pub k_paths: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        let b = SamplingBudget::default();
        Self {
            t_max_ms: None,
            n_max: b.n_max,
            beam_width: b.beam_width,
            k_paths: b.k_paths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iters: usize,
    pub g_tol: f64,
    pub memory: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverParams::default();
        Self {
            max_iters: s.max_iters,
            g_tol: s.g_tol,
            memory: s.memory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub v_max: f64,
    pub a_max: f64,
    pub variant: Variant,
    /// Queue capacity `N`.
    pub capacity: usize,
    /// Branch-cost weights; `(1, 1/v_max, 0.01)` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_lambda: Option<[f64; 3]>,
    /// `(time, terminal, obstacle, dynamics, jerk)`; `(1, 1/v_max, 1e4, 1e3, 0.01)` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_lambda: Option<[f64; 5]>,
    pub d_eps: f64,
    pub kappa: usize,
    /// Diagonals of the terminal weight matrices.
    pub k_f_p: [f64; 3],
    pub k_f_v: [f64; 3],
    pub horizon: f64,
    pub dt_c: f64,
    pub dyn_slack: f64,
    pub limit_scale: f64,
    pub obstacle_aware: bool,
    pub budget: BudgetSection,
    pub solver: SolverSection,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let base = PlannerConfig::new(Vec3::zeros(), 2.0, 3.0, 0);
        Self {
            v_max: base.spec.v_max,
            a_max: base.spec.a_max,
            variant: base.variant,
            capacity: base.capacity,
            branch_lambda: None,
            cost_lambda: None,
            d_eps: base.spec.d_eps,
            kappa: base.spec.kappa,
            k_f_p: base.spec.k_f_p.diagonal().into(),
            k_f_v: base.spec.k_f_v.diagonal().into(),
            horizon: base.frontend.horizon,
            dt_c: base.dt_c,
            dyn_slack: base.dyn_slack,
            limit_scale: base.limit_scale,
            obstacle_aware: base.frontend.obstacle_aware,
            budget: BudgetSection::default(),
            solver: SolverSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub epsilon: f64,
    pub t_limit: f64,
    pub deadlock_window: f64,
    pub deadlock_dist: f64,
    pub collision_substeps: usize,
    pub v_prior: f64,
    pub c_mu: f64,
    pub mu_max: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimParams::default();
        Self {
            dt: s.dt,
            epsilon: s.epsilon,
            t_limit: s.t_limit,
            deadlock_window: s.deadlock_window,
            deadlock_dist: s.deadlock_dist,
            collision_substeps: s.collision_substeps,
            v_prior: s.estimator.v_prior,
            c_mu: s.estimator.c_mu,
            mu_max: s.estimator.mu_max,
        }
    }
}

/// Vehicle state for the `plan` subcommand.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoSection {
    /// World start when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<[f64; 3]>,
    pub v: [f64; 3],
    pub a: [f64; 3],
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub runs: usize,
    pub variants: Vec<Variant>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            runs: 50,
            variants: Variant::ALL.to_vec(),
        }
    }
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn world_config(&self) -> WorldConfig {
        let w = &self.world;
        let bounds = WorldBox::new(v3(w.bounds.min), v3(w.bounds.max));
        let start = w.p_start.map(v3).unwrap_or_else(|| {
            let ext = bounds.extent();
            bounds.min + Vec3::new(0.04 * ext.x, 0.5 * ext.y, 0.5 * ext.z)
        });
        WorldConfig {
            n_static: w.n_static,
            n_dynamic: w.n_dynamic,
            radius_range: w.radius_range,
            speed_range: w.speed_range,
            cylinder_fraction: w.cylinder_fraction,
            motion_model: w.motion_model,
            pursuit_turn_rate: w.pursuit_turn_rate,
            seed: self.seed,
            r_safe: w.r_safe,
            sigma_z: w.sigma_z,
            q: w.q,
            ..WorldConfig::new(bounds, start, v3(w.p_goal))
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        let p = &self.planner;
        let mut cfg = PlannerConfig::new(v3(self.world.p_goal), p.v_max, p.a_max, self.seed);
        if let Some(l) = p.branch_lambda {
            cfg.lambda = l;
        }
        if let Some(l) = p.cost_lambda {
            cfg.spec.lambda = l;
        }
        cfg.spec.d_eps = p.d_eps;
        cfg.spec.kappa = p.kappa;
        cfg.spec.k_f_p = Matrix3::from_diagonal(&v3(p.k_f_p));
        cfg.spec.k_f_v = Matrix3::from_diagonal(&v3(p.k_f_v));
        cfg.frontend.horizon = p.horizon;
        cfg.frontend.obstacle_aware = p.obstacle_aware;
        cfg.check_horizon = p.horizon;
        cfg.capacity = p.capacity;
        cfg.dt_c = p.dt_c;
        cfg.dyn_slack = p.dyn_slack;
        cfg.limit_scale = p.limit_scale;
        cfg.budget = SamplingBudget {
            t_max_ms: p.budget.t_max_ms,
            n_max: p.budget.n_max,
            beam_width: p.budget.beam_width,
            k_paths: p.budget.k_paths,
        };
        cfg.solver.max_iters = p.solver.max_iters;
        cfg.solver.g_tol = p.solver.g_tol;
        cfg.solver.memory = p.solver.memory;
        cfg.with_variant(p.variant)
    }

    pub fn sim_params(&self) -> SimParams {
        let s = &self.sim;
        SimParams {
            dt: s.dt,
            epsilon: s.epsilon,
            t_limit: s.t_limit,
            deadlock_window: s.deadlock_window,
            deadlock_dist: s.deadlock_dist,
            collision_substeps: s.collision_substeps,
            estimator: EstimatorParams {
                v_prior: s.v_prior,
                c_mu: s.c_mu,
                mu_max: s.mu_max,
            },
        }
    }

    pub fn ego_state(&self) -> (InitState, f64) {
        let p = self.ego.p.map(v3).unwrap_or(self.world_config().p_start);
        let state = InitState {
            p,
            v: v3(self.ego.v),
            a: v3(self.ego.a),
        };
        (state, self.ego.t)
    }

    /// Checks every section; the message starts with the dotted key.
    pub fn validate(&self) -> Result<(), CliError> {
        fn tag(section: &'static str) -> impl Fn(String) -> CliError {
            move |e| CliError::Invalid(format!("{section}.{e}"))
        }
        self.world_config().validate().map_err(tag("world"))?;
        self.planner_config().validate().map_err(tag("planner"))?;
        self.sim_params().validate().map_err(tag("sim"))?;
        let p = &self.planner;
        if p.budget.t_max_ms.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::Invalid("planner.budget.t_max_ms: must be positive".into()));
        }
        if p.solver.max_iters == 0 {
            return Err(CliError::Invalid("planner.solver.max_iters: must be at least 1".into()));
        }
        if p.solver.memory == 0 {
            return Err(CliError::Invalid("planner.solver.memory: must be at least 1".into()));
        }
        if self.mc.runs == 0 {
            return Err(CliError::Invalid("mc.runs: must be at least 1".into()));
        }
        if self.mc.variants.is_empty() {
            return Err(CliError::Invalid("mc.variants: must not be empty".into()));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunConfig::from_toml(&text)
}
