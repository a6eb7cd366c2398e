//! Spatial-temporal homotopy checks and the incremental multi-branch
//! trajectory manager.
//!
//! Each planning cycle marches the main branch towards the goal, re-anchors
//! the sub-branches at the current state, explores new guidance paths and
//! merges everything into a cost-sorted queue of mutually distinct branches.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devprm::{ggs_radius, plan_topo_paths, DevPrmParams, SamplingBudget, TopoPath};
use crate::dynenv::EnvSnapshot;
use crate::utfminco::{
    assemble_and_solve, cost_breakdown, init_from_path, optimize, tau_from_duration, warm_start_from, CostSpec,
    DecisionVars, InitState, SolverParams, UtfTrajectory, WarmStartParams, T_FLOOR,
};
use crate::Vec3;

/// Spatial-temporal homotopy test: the two trajectories are equivalent when
/// the segment joining their time-synchronized points never crosses an
/// obstacle. Obstacles are taken at their intrinsic size plus uncertainty
/// growth, without the safety margin.
pub fn tvd_equivalent(a: &UtfTrajectory, b: &UtfTrajectory, env: &EnvSnapshot, dt_c: f64) -> bool {
    let t0 = a.t_start.max(b.t_start);
    let span = (a.t_end().max(b.t_end()) - t0).max(0.0);
    let steps = (span / dt_c).ceil() as usize;
    (0..=steps).all(|k| {
        let t = (t0 + k as f64 * dt_c).min(t0 + span);
        let pa = a.position(t);
        let pb = b.position(t);
        pa == pb || !env.segment_blocked_with_margin(&pa, &pb, t, 0.0)
    })
}

/// `lambda_t * H_t + lambda_s * H_s + lambda_e * I_e`.
pub fn branch_cost(h_t: f64, h_s: f64, i_e: f64, lambda: &[f64; 3]) -> f64 {
    lambda[0] * h_t + lambda[1] * h_s + lambda[2] * i_e
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchCosts {
    pub h_t: f64,
    pub h_s: f64,
    pub i_e: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub id: u64,
    pub traj: UtfTrajectory,
    pub vars: DecisionVars,
    pub costs: BranchCosts,
    pub j: f64,
    pub born_at: usize,
    /// Set when re-planning failed; dropped at the end of the cycle.
    pub dead: bool,
}

impl Branch {
    /// Scores a trajectory against `env` with the configured weights.
    pub fn evaluate(
        id: u64,
        traj: UtfTrajectory,
        vars: DecisionVars,
        born_at: usize,
        env: &EnvSnapshot,
        cfg: &PlannerConfig,
    ) -> Self {
        let c = cost_breakdown(&traj, env, &cfg.spec);
        let costs = BranchCosts {
            h_t: c.h_t,
            h_s: c.h_s,
            i_e: c.i_e,
        };
        Self {
            id,
            j: branch_cost(costs.h_t, costs.h_s, costs.i_e, &cfg.lambda),
            traj,
            vars,
            costs,
            born_at,
            dead: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Multi-branch management with topological exploration.
    Trust,
    /// Single trajectory, straight-line initial guess.
    StraightLine,
    /// Single trajectory guided by the shortest frontend path.
    ShortestPath,
    /// Multiple guidance paths, best one executed, nothing kept between
    /// cycles.
    NoPersistence,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Trust,
        Variant::StraightLine,
        Variant::ShortestPath,
        Variant::NoPersistence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Trust => "trust",
            Variant::StraightLine => "baseline1_straight",
            Variant::ShortestPath => "baseline2_shortest",
            Variant::NoPersistence => "baseline3_no_persistence",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub spec: CostSpec,
    pub solver: SolverParams,
    pub warm: WarmStartParams,
    pub frontend: DevPrmParams,
    pub budget: SamplingBudget,
    /// Queue capacity `N`.
    pub capacity: usize,
    /// `(lambda_t, lambda_s, lambda_e)` of the branch cost.
    pub lambda: [f64; 3],
    /// Time resolution of homotopy and collision checks (s).
    pub dt_c: f64,
    /// Obstacle clearance is enforced this far ahead (s).
    pub check_horizon: f64,
    /// Allowed relative overshoot of the speed and acceleration limits.
    pub dyn_slack: f64,
    /// The optimizer sees the limits scaled by this factor; the soft
    /// penalty overshoots slightly.
    pub limit_scale: f64,
    pub variant: Variant,
}

impl PlannerConfig {
    pub fn new(p_goal: Vec3, v_max: f64, a_max: f64, seed: u64) -> Self {
        let horizon = 4.0;
        Self {
            spec: CostSpec::new(p_goal, v_max, a_max),
            solver: SolverParams::default(),
            warm: WarmStartParams::new(v_max),
            frontend: DevPrmParams::new(horizon, v_max, seed),
            budget: SamplingBudget::default(),
            capacity: 5,
            lambda: [1.0, 1.0 / v_max, 0.01],
            dt_c: 0.1,
            check_horizon: horizon,
            dyn_slack: 1.01,
            limit_scale: 0.97,
            variant: Variant::Trust,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        match variant {
            Variant::Trust => {}
            Variant::StraightLine | Variant::ShortestPath | Variant::NoPersistence => self.capacity = 1,
        }
        if variant == Variant::ShortestPath {
            self.budget.k_paths = 1;
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        self.spec.validate()?;
        if self.capacity == 0 {
            return Err("capacity: must be at least 1".into());
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err("lambda: weights must be non-negative".into());
        }
        if !(self.dt_c > 0.0) {
            return Err("dt_c: must be positive".into());
        }
        if !(self.check_horizon > 0.0) {
            return Err("check_horizon: must be positive".into());
        }
        if !(self.limit_scale > 0.0 && self.limit_scale <= 1.0) {
            return Err("limit_scale: must lie in (0, 1]".into());
        }
        if !(self.dyn_slack >= 1.0) {
            return Err("dyn_slack: must be at least 1".into());
        }
        if !(self.frontend.horizon > 0.0) {
            return Err("horizon: must be positive".into());
        }
        Ok(())
    }
}

impl PlannerConfig {
    /// Cost specification handed to the optimizer.
    pub fn optimizer_spec(&self) -> CostSpec {
        CostSpec {
            v_max: self.spec.v_max * self.limit_scale,
            a_max: self.spec.a_max * self.limit_scale,
            ..self.spec.clone()
        }
    }
}

/// Hard checks a trajectory must pass before it may be queued: speed and
/// acceleration within the slack-scaled limits at `kappa` samples per
/// segment, and non-negative clearance at `dt_c` steps over the check
/// horizon.
pub fn is_feasible(traj: &UtfTrajectory, env: &EnvSnapshot, cfg: &PlannerConfig) -> bool {
    let (v, a) = traj.max_speed_accel(cfg.spec.kappa);
    if !(v <= cfg.dyn_slack * cfg.spec.v_max && a <= cfg.dyn_slack * cfg.spec.a_max) {
        return false;
    }
    let span = traj.t_total.min(cfg.check_horizon);
    let steps = (span / cfg.dt_c).ceil() as usize;
    (0..=steps).all(|k| {
        let t = traj.t_start + (k as f64 * cfg.dt_c).min(span);
        env.clearance_at(&traj.position(t), t, 0.0) >= 0.0
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchQueue {
    pub branches: Vec<Branch>,
    pub capacity: usize,
    pub cycle: usize,
    next_id: u64,
}

impl BranchQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            branches: Vec::new(),
            capacity,
            cycle: 0,
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn main(&self) -> Option<&Branch> {
        self.branches.first()
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn sort(&mut self) {
        self.branches
            .sort_by(|a, b| a.j.total_cmp(&b.j).then_with(|| a.id.cmp(&b.id)));
    }

    /// Inserts a feasible candidate. An equivalent incumbent is replaced
    /// only by a cheaper candidate; a distinct candidate is appended and the
    /// worst branch evicted when over capacity. Returns whether the queue
    /// changed.
    pub fn add_new_branch(&mut self, cand: Branch, env: &EnvSnapshot, dt_c: f64) -> bool {
        for i in 0..self.branches.len() {
            if tvd_equivalent(&cand.traj, &self.branches[i].traj, env, dt_c) {
                if cand.j < self.branches[i].j {
                    self.branches[i] = cand;
                    self.sort();
                    return true;
                }
                return false;
            }
        }
        self.branches.push(cand);
        self.sort();
        if self.branches.len() > self.capacity {
            self.branches.pop();
        }
        true
    }
}

/// Wall-clock time spent in each phase of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub march_ms: f64,
    pub replan_ms: f64,
    pub explore_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub id: u64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "H_t")]
    pub h_t: f64,
    #[serde(rename = "H_s")]
    pub h_s: f64,
    #[serde(rename = "I_e")]
    pub i_e: f64,
    pub born_at: usize,
}

impl From<&Branch> for BranchSummary {
    fn from(b: &Branch) -> Self {
        Self {
            id: b.id,
            j: b.j,
            h_t: b.costs.h_t,
            h_s: b.costs.h_s,
            i_e: b.costs.i_e,
            born_at: b.born_at,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CycleOutput {
    /// Trajectory to execute.
    pub chosen: UtfTrajectory,
    /// `None` for the emergency stop.
    pub chosen_id: Option<u64>,
    pub degraded: bool,
    pub branches: Vec<BranchSummary>,
    pub timings: PhaseTimings,
    /// Number of guidance paths explored this cycle.
    pub explored: usize,
}

fn reoptimize(old: &Branch, ego: &InitState, t: f64, env: &EnvSnapshot, cfg: &PlannerConfig) -> Option<(UtfTrajectory, DecisionVars)> {
    let warm = warm_start_from(&old.traj, &old.vars, t);
    let res = optimize(&warm, ego, t, env, &cfg.optimizer_spec(), &cfg.solver).ok()?;
    Some((res.traj, res.vars))
}

/// Re-optimizes the main branch from the current state, warm-started from
/// the previous solution. The result is flagged dead when infeasible.
pub fn fwd_march(main: &Branch, ego: &InitState, t: f64, env: &EnvSnapshot, cfg: &PlannerConfig) -> Branch {
    replan_branch(main, ego, t, env, cfg)
}

/// Re-anchors a sub-branch at the current state. Collapse onto a cheaper
/// branch is resolved when the queue is rebuilt.
pub fn bwd_replan(sub: &Branch, ego: &InitState, t: f64, env: &EnvSnapshot, cfg: &PlannerConfig) -> Branch {
    replan_branch(sub, ego, t, env, cfg)
}

fn replan_branch(old: &Branch, ego: &InitState, t: f64, env: &EnvSnapshot, cfg: &PlannerConfig) -> Branch {
    match reoptimize(old, ego, t, env, cfg) {
        Some((traj, vars)) => {
            let mut b = Branch::evaluate(old.id, traj, vars, old.born_at, env, cfg);
            b.dead = !is_feasible(&b.traj, env, cfg);
            b
        }
        None => Branch {
            dead: true,
            ..old.clone()
        },
    }
}

/// Guidance paths for the configured variant; exploration uses a fresh
/// frontend seed every cycle.
fn guidance_paths(ego: &InitState, env: &EnvSnapshot, cfg: &PlannerConfig, cycle: usize) -> Vec<TopoPath> {
    let p_g = cfg.spec.p_goal;
    match cfg.variant {
        Variant::StraightLine => {
            let r = ggs_radius(&ego.p, &p_g, cfg.frontend.horizon, cfg.frontend.v_max);
            let d = ego.p - p_g;
            let end = if d.norm() > 0.0 { p_g + d * (r / d.norm()) } else { p_g };
            vec![TopoPath::new(vec![ego.p, end])]
        }
        _ => {
            if cfg.budget.k_paths == 0 {
                return Vec::new();
            }
            let mut params = cfg.frontend.clone();
            params.seed = cfg.frontend.seed.wrapping_add((cycle as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            plan_topo_paths(&ego.p, &p_g, env, &cfg.budget, &params)
        }
    }
}

/// Optimizes one candidate per guidance path and keeps the feasible ones,
/// in path order.
pub fn fwd_explore(
    ego: &InitState,
    t: f64,
    env: &EnvSnapshot,
    cfg: &PlannerConfig,
    cycle: usize,
) -> (Vec<(UtfTrajectory, DecisionVars)>, usize) {
    let paths = guidance_paths(ego, env, cfg, cycle);
    let n = paths.len();
    let solved: Vec<Option<(UtfTrajectory, DecisionVars)>> = paths
        .par_iter()
        .map(|path| {
            let init = init_from_path(&path.waypoints, &cfg.warm).ok()?;
            let res = optimize(&init, ego, t, env, &cfg.optimizer_spec(), &cfg.solver).ok()?;
            is_feasible(&res.traj, env, cfg).then_some((res.traj, res.vars))
        })
        .collect();
    (solved.into_iter().flatten().collect(), n)
}

/// Quintic that brings the vehicle to rest, stretched until its peak
/// acceleration respects `a_max` (or the initial acceleration, if larger).
pub fn emergency_stop(ego: &InitState, t: f64, a_max: f64) -> UtfTrajectory {
    let speed = ego.v.norm();
    let cap = a_max.max(ego.a.norm());
    let mut t_stop = (1.5 * speed / a_max).max(T_FLOOR + 0.3);
    loop {
        let vars = DecisionVars {
            p_f: ego.p + ego.v * (0.5 * t_stop),
            v_f: Vec3::zeros(),
            interior: Vec::new(),
            tau: tau_from_duration(t_stop),
        };
        let traj = assemble_and_solve(&vars, vars.duration(), ego, t).expect("positive duration");
        let (_, a) = traj.max_speed_accel(64);
        if a <= cap * (1.0 + 1e-9) || t_stop > 1e3 {
            return traj;
        }
        t_stop *= 1.25;
    }
}

/// One iteration of the incremental planner at time `t` from state `ego`.
pub fn plan_cycle(
    queue: &mut BranchQueue,
    ego: &InitState,
    t: f64,
    env: &EnvSnapshot,
    cfg: &PlannerConfig,
) -> CycleOutput {
    let cycle = queue.cycle;
    queue.cycle += 1;
    let mut timings = PhaseTimings::default();
    let persist = cfg.variant != Variant::NoPersistence;
    let old: Vec<Branch> = if persist { std::mem::take(&mut queue.branches) } else { Vec::new() };
    queue.branches.clear();
    queue.capacity = cfg.capacity;

    let clock = Instant::now();
    let marched = old.first().map(|m| fwd_march(m, ego, t, env, cfg));
    timings.march_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let subs: Vec<Branch> = old
        .get(1..)
        .unwrap_or(&[])
        .par_iter()
        .map(|b| bwd_replan(b, ego, t, env, cfg))
        .collect();
    timings.replan_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let (found, explored) = fwd_explore(ego, t, env, cfg, cycle);
    timings.explore_ms = clock.elapsed().as_secs_f64() * 1e3;

    for b in marched.into_iter().chain(subs) {
        if !b.dead {
            queue.add_new_branch(b, env, cfg.dt_c);
        }
    }
    for (traj, vars) in found {
        let id = queue.take_id();
        let b = Branch::evaluate(id, traj, vars, cycle, env, cfg);
        queue.add_new_branch(b, env, cfg.dt_c);
    }

    let branches: Vec<BranchSummary> = queue.branches.iter().map(BranchSummary::from).collect();
    match queue.main() {
        Some(main) => CycleOutput {
            chosen: main.traj.clone(),
            chosen_id: Some(main.id),
            degraded: false,
            branches,
            timings,
            explored,
        },
        None => CycleOutput {
            chosen: emergency_stop(ego, t, cfg.spec.a_max),
            chosen_id: None,
            degraded: true,
            branches,
            timings,
            explored,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynenv::{DynamicObstacle, WorldBox};

    fn world() -> WorldBox {
        WorldBox::new(Vec3::new(-5., -8., -2.), Vec3::new(20., 8., 6.))
    }

    #[test]
    fn branch_cost_examples() {
        let l = [1.0, 0.5, 0.01];
        assert!((branch_cost(4.38, 5.05, 50.52, &l) - 7.41).abs() < 0.005);
        assert!((branch_cost(4.58, 5.04, 53.87, &l) - 7.64).abs() < 0.005);
        assert_eq!(branch_cost(0.0, 0.0, 0.0, &l), 0.0);
    }

    #[test]
    fn emergency_stop_respects_accel_limit() {
        let ego = InitState {
            p: Vec3::new(1., 2., 3.),
            v: Vec3::new(2., 0., 0.5),
            a: Vec3::new(0.5, 0.0, 0.0),
        };
        let traj = emergency_stop(&ego, 3.0, 3.0);
        let (_, a) = traj.max_speed_accel(64);
        assert!(a <= 3.0 + 1e-9);
        assert!(traj.end_velocity().norm() < 1e-9);
        assert!((traj.velocity(3.0) - ego.v).norm() < 1e-8);
    }

    #[test]
    fn empty_world_single_branch() {
        let env = EnvSnapshot::empty(world());
        let cfg = PlannerConfig::new(Vec3::new(10., 0., 0.), 2.0, 3.0, 1);
        let mut q = BranchQueue::new(cfg.capacity);
        let out = plan_cycle(&mut q, &InitState::at_rest(Vec3::zeros()), 0.0, &env, &cfg);
        assert!(!out.degraded);
        assert_eq!(q.len(), 1);
        assert!(is_feasible(&out.chosen, &env, &cfg));
    }

    #[test]
    fn equivalent_worse_candidate_is_dropped() {
        let env = EnvSnapshot::new(
            0.0,
            vec![DynamicObstacle::sphere(0, Vec3::new(5., 0., 0.), Vec3::zeros(), 1.0, 0.0, 0.0)],
            vec![],
            world(),
            0.2,
            4.0,
        )
        .unwrap();
        let cfg = PlannerConfig::new(Vec3::new(10., 0., 0.), 2.0, 3.0, 1);
        let mut q = BranchQueue::new(5);
        let mut first = None;
        for (k, y) in [3.0, 3.5].into_iter().enumerate() {
            let path = [Vec3::zeros(), Vec3::new(5., y, 0.), Vec3::new(10., 0., 0.)];
            let vars = init_from_path(&path, &cfg.warm).unwrap();
            let traj = assemble_and_solve(&vars, vars.duration(), &InitState::at_rest(Vec3::zeros()), 0.0).unwrap();
            let b = Branch::evaluate(k as u64, traj, vars, 0, &env, &cfg);
            if k == 0 {
                first = Some(b.j);
                assert!(q.add_new_branch(b, &env, 0.1));
            } else {
                assert!(b.j > first.unwrap());
                assert!(!q.add_new_branch(b, &env, 0.1));
            }
        }
        assert_eq!(q.len(), 1);
        assert_eq!(q.branches[0].id, 0);
    }
}
