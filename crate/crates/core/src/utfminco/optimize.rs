use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsParams, LbfgsStatus};
use super::{
    objective_and_gradient, tau_from_duration, CostSpec, DecisionVars, InitState, MincoError, UtfTrajectory,
    T_FLOOR,
};
use crate::dynenv::EnvSnapshot;
use crate::Vec3;

pub type SolverParams = LbfgsParams;

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub traj: UtfTrajectory,
    pub vars: DecisionVars,
    pub cost: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    /// Accepted objective values, initial value first.
    pub history: Vec<f64>,
}

impl OptimizeResult {
    pub fn converged(&self) -> bool {
        self.status == LbfgsStatus::Converged
    }
}

/// Minimizes the trajectory objective from `init_vars`, keeping the segment
/// count fixed. Non-convergence is reported through `status` together with
/// the best iterate.
pub fn optimize(
    init_vars: &DecisionVars,
    init_state: &InitState,
    t_start: f64,
    env: &EnvSnapshot,
    spec: &CostSpec,
    params: &SolverParams,
) -> Result<OptimizeResult, MincoError> {
    if !init_vars.is_finite() {
        return Err(MincoError::NonFinite);
    }
    let n = init_vars.segments();
    let x0 = init_vars.to_vec();
    let report = minimize(
        &x0,
        |x, g| {
            let vars = DecisionVars::from_slice(x, n).expect("fixed dimension");
            let obj = objective_and_gradient(&vars, init_state, t_start, env, spec);
            g.copy_from_slice(&obj.grad.to_vec());
            obj.value
        },
        params,
    );
    let vars = DecisionVars::from_slice(&report.x, n)?;
    let obj = objective_and_gradient(&vars, init_state, t_start, env, spec);
    Ok(OptimizeResult {
        traj: obj.traj,
        vars,
        cost: report.f,
        iterations: report.iterations,
        status: report.status,
        history: report.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartParams {
    pub v_max: f64,
    pub seg_len_nominal: f64,
    pub min_segments: usize,
    pub max_segments: usize,
}

impl WarmStartParams {
    pub fn new(v_max: f64) -> Self {
        Self {
            v_max,
            seg_len_nominal: 1.5,
            min_segments: 4,
            max_segments: 12,
        }
    }
}

fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Point at arc length `s` along the polyline.
fn point_at_length(points: &[Vec3], s: f64) -> Vec3 {
    let mut acc = 0.0;
    for w in points.windows(2) {
        let l = (w[1] - w[0]).norm();
        if acc + l >= s && l > 0.0 {
            return w[0] + (w[1] - w[0]) * ((s - acc) / l);
        }
        acc += l;
    }
    *points.last().expect("non-empty polyline")
}

/// Decision variables that follow a guidance polyline at 90% of the speed
/// limit.
pub fn init_from_path(waypoints: &[Vec3], params: &WarmStartParams) -> Result<DecisionVars, MincoError> {
    if waypoints.len() < 2 {
        return Err(MincoError::DegeneratePath);
    }
    let length = polyline_length(waypoints);
    if !(length > 0.0) {
        return Err(MincoError::DegeneratePath);
    }
    let n = ((length / params.seg_len_nominal).ceil() as usize).clamp(params.min_segments, params.max_segments);
    let interior = (1..n)
        .map(|i| point_at_length(waypoints, length * i as f64 / n as f64))
        .collect();
    let last = waypoints[waypoints.len() - 1];
    let tangent = waypoints
        .windows(2)
        .rev()
        .map(|w| w[1] - w[0])
        .find(|d| d.norm() > 0.0)
        .map(|d| d.normalize())
        .unwrap_or_else(Vec3::zeros);
    let cruise = 0.9 * params.v_max;
    let t_total = (length / cruise).max(T_FLOOR + 0.1);
    Ok(DecisionVars {
        p_f: last,
        v_f: tangent * cruise,
        interior,
        tau: tau_from_duration(t_total),
    })
}

/// Warm start for re-planning from time `t`: keeps the old terminal state
/// and duration and spreads the interior points over the part of the old
/// trajectory that is still ahead.
pub fn warm_start_from(old: &UtfTrajectory, old_vars: &DecisionVars, t: f64) -> DecisionVars {
    let n = old.n();
    let t0 = t.clamp(old.t_start, old.t_end());
    let span = old.t_end() - t0;
    DecisionVars {
        p_f: old_vars.p_f,
        v_f: old_vars.v_f,
        interior: (1..n)
            .map(|i| old.position(t0 + span * i as f64 / n as f64))
            .collect(),
        tau: old_vars.tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn straight_path_warm_start() {
        let path = [Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)];
        let vars = init_from_path(&path, &WarmStartParams::new(2.0)).unwrap();
        assert_eq!(vars.segments(), 7);
        assert_relative_eq!(vars.duration(), 10.0 / 1.8, epsilon = 1e-9);
        for (i, p) in vars.interior.iter().enumerate() {
            assert_relative_eq!(*p, Vec3::new(10.0 * (i + 1) as f64 / 7.0, 0.0, 0.0), epsilon = 1e-12);
        }
        assert_relative_eq!(vars.v_f, Vec3::new(1.8, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn short_path_clamps_duration() {
        let path = [Vec3::zeros(), Vec3::new(1e-6, 0.0, 0.0)];
        let vars = init_from_path(&path, &WarmStartParams::new(2.0)).unwrap();
        assert_relative_eq!(vars.duration(), T_FLOOR + 0.1, epsilon = 1e-9);
        assert!(init_from_path(&[Vec3::zeros(), Vec3::zeros()], &WarmStartParams::new(2.0)).is_err());
        assert!(init_from_path(&[Vec3::zeros()], &WarmStartParams::new(2.0)).is_err());
    }

    #[test]
    fn l_shaped_resampling() {
        let path = [Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), Vec3::new(2.0, 2.0, 0.0)];
        let vars = init_from_path(&path, &WarmStartParams::new(2.0)).unwrap();
        assert_eq!(vars.segments(), 4);
        let expect = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 0.0)];
        for (p, e) in vars.interior.iter().zip(expect.iter()) {
            assert_relative_eq!(*p, *e, epsilon = 1e-12);
        }
    }
}
