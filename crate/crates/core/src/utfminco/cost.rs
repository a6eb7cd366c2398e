//! Objective terms and their analytic gradients.
//!
//! The integral part is a trapezoidal sum over `kappa + 1` samples per
//! segment. Obstacle prediction is anchored to the absolute sample time, so
//! moving a junction earlier shifts every later sample against the
//! obstacle clock; this produces gradient terms on all preceding segment
//! durations, not only the segment that owns the sample.

use super::trajectory::{
    apply, assemble_system, basis_stack, boundary_rows, rows_to_coeffs, Coeffs, Junction, JUNCTION_ROWS, WAYPOINT_ROW,
};
use super::{duration_from_tau, duration_slope, CostSpec, DecisionVars, InitState, UtfTrajectory};
use crate::dynenv::{ddf_at, EnvSnapshot};
use crate::Vec3;

/// Cubic hinge `max(x, 0)^3` and its slope; twice continuously
/// differentiable.
#[inline]
pub fn smooth_max(x: f64) -> (f64, f64) {
    if x > 0.0 {
        (x * x * x, 3.0 * x * x)
    } else {
        (0.0, 0.0)
    }
}

/// Terminal-velocity weight: zero far from the goal, rising linearly to one
/// at the goal.
pub fn alpha_blend(p0: &Vec3, p_goal: &Vec3, d_eps: f64) -> f64 {
    let d = (p0 - p_goal).norm();
    if d <= d_eps {
        1.0 - d / d_eps
    } else {
        0.0
    }
}

/// Heuristic terminal cost and its gradients w.r.t. terminal position and
/// velocity. `p0` is the trajectory's start position.
pub fn terminal_cost(p_f: &Vec3, v_f: &Vec3, spec: &CostSpec, p0: &Vec3) -> (f64, Vec3, Vec3) {
    let alpha = alpha_blend(p0, &spec.p_goal, spec.d_eps);
    let e = p_f - spec.p_goal;
    let kp = spec.k_f_p * e;
    let kv = spec.k_f_v * v_f;
    (e.dot(&kp) + alpha * v_f.dot(&kv), 2.0 * kp, 2.0 * alpha * kv)
}

/// Ego state at one quadrature node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageInput {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    pub j: Vec3,
    pub s: Vec3,
    /// Absolute time.
    pub t: f64,
}

/// Integrand value with gradients w.r.t. the ego state and the part of the
/// time derivative caused by obstacle motion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StagePenalty {
    pub l: f64,
    pub dp: Vec3,
    pub dv: Vec3,
    pub da: Vec3,
    pub dj: Vec3,
    pub dt_obstacle: f64,
}

pub fn stage_penalties(x: &StageInput, env: &EnvSnapshot, spec: &CostSpec) -> StagePenalty {
    let mut out = StagePenalty::default();

    let lo = spec.lambda_obstacle();
    if lo > 0.0 {
        for o in env.all_obstacles() {
            let center = o.position_at(x.t);
            let r = o.radius_at(x.t, env.r_safe);
            let s = ddf_at(o, &x.p, &center, r);
            if s.phi <= 0.0 {
                continue;
            }
            let (f, df) = smooth_max(s.phi);
            out.l += lo * f;
            out.dp += s.dphi_dp * (lo * df);
            out.dt_obstacle += lo * df * (s.dphi_dpo.dot(&o.velocity) + s.dphi_dr * o.mu);
        }
    }

    let ld = spec.lambda_dynamics();
    if ld > 0.0 {
        let vm2 = spec.v_max * spec.v_max;
        let (f, df) = smooth_max(x.v.norm_squared() / vm2 - 1.0);
        out.l += ld * f;
        out.dv += x.v * (2.0 * ld * df / vm2);
        let am2 = spec.a_max * spec.a_max;
        let (f, df) = smooth_max(x.a.norm_squared() / am2 - 1.0);
        out.l += ld * f;
        out.da += x.a * (2.0 * ld * df / am2);
    }

    let le = spec.lambda_jerk();
    out.l += le * x.j.norm_squared();
    out.dj += x.j * (2.0 * le);
    out
}

/// Trapezoidal integral with its partial derivatives, holding the
/// coefficients fixed when differentiating w.r.t. segment durations.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralGrad {
    pub value: f64,
    pub d_coeffs: Vec<Coeffs>,
    pub d_durations: Vec<f64>,
}

pub fn integrate_with<F>(traj: &UtfTrajectory, kappa: usize, mut integrand: F) -> IntegralGrad
where
    F: FnMut(&StageInput) -> StagePenalty,
{
    assert!(kappa >= 2, "kappa must be at least 2");
    let n = traj.n();
    let seg = traj.segment_duration();
    let kf = kappa as f64;
    let mut value = 0.0;
    let mut d_coeffs = vec![Coeffs::zeros(); n];
    let mut d_durations = vec![0.0; n];
    // Obstacle-clock sensitivity of each segment, spread onto earlier ones.
    let mut shift = vec![0.0; n];

    for (i, c) in traj.coeffs.iter().enumerate() {
        let seg_start = traj.t_start + i as f64 * seg;
        for k in 0..=kappa {
            let omega = if k == 0 || k == kappa { 0.5 } else { 1.0 };
            let frac = k as f64 / kf;
            let tau = seg * frac;
            let b = basis_stack(tau);
            let x = StageInput {
                p: apply(c, &b[0]),
                v: apply(c, &b[1]),
                a: apply(c, &b[2]),
                j: apply(c, &b[3]),
                s: apply(c, &b[4]),
                t: seg_start + tau,
            };
            let pen = integrand(&x);
            let w = omega * seg / kf;
            value += w * pen.l;
            let dc = &mut d_coeffs[i];
            for r in 0..6 {
                let g = pen.dp * b[0][r] + pen.dv * b[1][r] + pen.da * b[2][r] + pen.dj * b[3][r];
                if g != Vec3::zeros() {
                    for col in 0..3 {
                        dc[(r, col)] += w * g[col];
                    }
                }
            }
            let ego_rate = pen.dp.dot(&x.v) + pen.dv.dot(&x.a) + pen.da.dot(&x.j) + pen.dj.dot(&x.s);
            d_durations[i] += omega / kf * pen.l + w * frac * (ego_rate + pen.dt_obstacle);
            shift[i] += w * pen.dt_obstacle;
        }
    }
    let mut later = 0.0;
    for i in (0..n).rev() {
        d_durations[i] += later;
        later += shift[i];
    }
    IntegralGrad {
        value,
        d_coeffs,
        d_durations,
    }
}

pub fn integrate_costs(traj: &UtfTrajectory, env: &EnvSnapshot, spec: &CostSpec) -> IntegralGrad {
    integrate_with(traj, spec.kappa, |x| stage_penalties(x, env, spec))
}

/// Objective value and gradient in decision-variable layout.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub grad: DecisionVars,
    pub traj: UtfTrajectory,
}

pub fn objective_and_gradient(
    vars: &DecisionVars,
    init: &InitState,
    t_start: f64,
    env: &EnvSnapshot,
    spec: &CostSpec,
) -> Objective {
    let n = vars.segments();
    let t_total = duration_from_tau(vars.tau);
    let seg = t_total / n as f64;

    let mut a = assemble_system(n, t_total);
    a.factorize();
    let mut rows = boundary_rows(vars, init);
    a.solve(&mut rows);
    let traj = UtfTrajectory {
        coeffs: rows_to_coeffs(&rows),
        t_total,
        t_start,
        init_state: *init,
    };

    let integral = integrate_costs(&traj, env, spec);
    let mut adj: Vec<[f64; 3]> = integral
        .d_coeffs
        .iter()
        .flat_map(|c| (0..6).map(move |r| [c[(r, 0)], c[(r, 1)], c[(r, 2)]]))
        .collect();
    a.solve_adjoint(&mut adj);
    let g = |r: usize| Vec3::new(adj[r][0], adj[r][1], adj[r][2]);

    // Total derivative of the integral w.r.t. each segment duration: the
    // explicit part plus the change of the coefficients through A(T).
    let bt = basis_stack(seg);
    let mut dt_sum = 0.0;
    for (i, c) in traj.coeffs.iter().enumerate() {
        let deriv = |d: usize| -> Vec3 {
            if d < 5 {
                apply(c, &bt[d])
            } else {
                c.row(5).transpose() * 120.0
            }
        };
        let mut implicit = 0.0;
        if i + 1 < n {
            let row = 3 + 6 * i;
            for (r, cond) in JUNCTION_ROWS.iter().enumerate() {
                let d = match *cond {
                    Junction::Waypoint => 0,
                    Junction::Continuity(d) => d,
                };
                implicit += g(row + r).dot(&deriv(d + 1));
            }
        } else {
            for d in 0..3 {
                implicit += g(6 * n - 3 + d).dot(&deriv(d + 1));
            }
        }
        dt_sum += integral.d_durations[i] - implicit;
    }

    let (h_s, dhs_dpf, dhs_dvf) = terminal_cost(&vars.p_f, &vars.v_f, spec, &init.p);
    let lt = spec.lambda_time();
    let ls = spec.lambda_terminal();
    let value = lt * t_total + ls * h_s + integral.value;

    let grad = DecisionVars {
        interior: (0..n - 1).map(|i| g(3 + 6 * i + WAYPOINT_ROW)).collect(),
        p_f: g(6 * n - 3) + dhs_dpf * ls,
        v_f: g(6 * n - 2) + dhs_dvf * ls,
        tau: (lt + dt_sum / n as f64) * duration_slope(vars.tau),
    };
    Objective { value, grad, traj }
}

/// Unweighted objective components of a finished trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub h_t: f64,
    pub h_s: f64,
    pub i_o: f64,
    pub i_d: f64,
    pub i_e: f64,
}

pub fn cost_breakdown(traj: &UtfTrajectory, env: &EnvSnapshot, spec: &CostSpec) -> CostBreakdown {
    let mut unit = spec.clone();
    let (mut i_o, mut i_d, mut i_e) = (0.0, 0.0, 0.0);
    for (slot, weights) in [
        (&mut i_o, [0.0, 0.0, 1.0, 0.0, 0.0]),
        (&mut i_d, [0.0, 0.0, 0.0, 1.0, 0.0]),
        (&mut i_e, [0.0, 0.0, 0.0, 0.0, 1.0]),
    ] {
        unit.lambda = weights;
        *slot = integrate_with(traj, spec.kappa, |x| stage_penalties(x, env, &unit)).value;
    }
    let (h_s, _, _) = terminal_cost(&traj.end_position(), &traj.end_velocity(), spec, &traj.init_state.p);
    CostBreakdown {
        h_t: traj.t_total,
        h_s,
        i_o,
        i_d,
        i_e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynenv::{DynamicObstacle, WorldBox};
    use crate::utfminco::{assemble_and_solve, tau_from_duration};
    use approx::assert_relative_eq;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn world() -> WorldBox {
        WorldBox::new(v(-50., -50., -50.), v(50., 50., 50.))
    }

    fn unit_min_jerk() -> UtfTrajectory {
        let vars = DecisionVars {
            p_f: v(1., 0., 0.),
            v_f: Vec3::zeros(),
            interior: vec![],
            tau: 0.0,
        };
        assemble_and_solve(&vars, 1.0, &InitState::at_rest(Vec3::zeros()), 0.0).unwrap()
    }

    #[test]
    fn smooth_max_examples() {
        assert_eq!(smooth_max(-1.0), (0.0, 0.0));
        assert_eq!(smooth_max(0.0), (0.0, 0.0));
        assert_eq!(smooth_max(2.0), (8.0, 12.0));
    }

    #[test]
    fn alpha_examples() {
        let g = Vec3::zeros();
        assert_eq!(alpha_blend(&v(10., 0., 0.), &g, 5.0), 0.0);
        assert_relative_eq!(alpha_blend(&v(0., 2.5, 0.), &g, 5.0), 0.5);
        assert_eq!(alpha_blend(&g, &g, 5.0), 1.0);
    }

    #[test]
    fn terminal_cost_examples() {
        let mut spec = CostSpec::new(Vec3::zeros(), 2.0, 3.0);
        spec.d_eps = 1.0;
        spec.k_f_p = nalgebra::Matrix3::identity();
        let far = v(100., 0., 0.);
        let (h, dp, dv) = terminal_cost(&Vec3::zeros(), &v(3., 0., 0.), &spec, &far);
        assert_eq!((h, dp, dv), (0.0, Vec3::zeros(), Vec3::zeros()));
        let (h, dp, _) = terminal_cost(&v(1., 1., 0.), &Vec3::zeros(), &spec, &far);
        assert_relative_eq!(h, 2.0);
        assert_relative_eq!(dp, v(2., 2., 0.));
        let (h, _, dv) = terminal_cost(&v(1., 1., 0.), &v(0., 1., 0.), &spec, &Vec3::zeros());
        assert_relative_eq!(h, 3.0);
        assert_relative_eq!(dv, v(0., 2., 0.));
    }

    #[test]
    fn stage_penalty_examples() {
        let spec = CostSpec::new(Vec3::zeros(), 2.0, 3.0);
        let empty = EnvSnapshot::empty(world());
        let zero = StageInput {
            p: Vec3::zeros(),
            v: Vec3::zeros(),
            a: Vec3::zeros(),
            j: Vec3::zeros(),
            s: Vec3::zeros(),
            t: 0.0,
        };
        assert_eq!(stage_penalties(&zero, &empty, &spec), StagePenalty::default());

        let at_limit = StageInput { v: v(0., 2., 0.), ..zero };
        assert_eq!(stage_penalties(&at_limit, &empty, &spec), StagePenalty::default());

        let ball = DynamicObstacle::fixed(0, crate::Shape::Sphere, Vec3::zeros(), 1.0);
        let env = EnvSnapshot::new(0.0, vec![], vec![ball], world(), 0.0, 4.0).unwrap();
        let inside = StageInput { p: v(0.5, 0., 0.), ..zero };
        let pen = stage_penalties(&inside, &env, &spec);
        let lo = spec.lambda_obstacle();
        assert_relative_eq!(pen.l, lo * 0.75f64.powi(3), max_relative = 1e-12);
        assert_relative_eq!(pen.dp, v(-1., 0., 0.) * (lo * 3.0 * 0.75 * 0.75), max_relative = 1e-12);
        assert_eq!(pen.dt_obstacle, 0.0);
    }

    #[test]
    fn quadrature_is_exact_for_constants_and_lines() {
        let traj = unit_min_jerk();
        for kappa in [2, 3, 16] {
            let one = integrate_with(&traj, kappa, |_| StagePenalty {
                l: 1.0,
                ..Default::default()
            });
            assert_relative_eq!(one.value, traj.t_total, epsilon = 1e-14);
        }
        let lin = integrate_with(&traj, 2, |x| StagePenalty {
            l: x.t,
            ..Default::default()
        });
        assert_relative_eq!(lin.value, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn jerk_integral_converges_quadratically() {
        let traj = unit_min_jerk();
        let mut spec = CostSpec::new(Vec3::zeros(), 100.0, 100.0);
        spec.lambda = [0.0, 0.0, 0.0, 0.0, 1.0];
        let env = EnvSnapshot::empty(world());
        let mut err = |kappa: usize| {
            spec.kappa = kappa;
            (integrate_costs(&traj, &env, &spec).value - 720.0).abs()
        };
        let (e16, e32, e64) = (err(16), err(32), err(64));
        assert!(e64 / 720.0 < 0.02);
        assert!((e16 / e32 - 4.0).abs() < 0.2 && (e32 / e64 - 4.0).abs() < 0.2);
    }

    #[test]
    fn time_only_objective() {
        let mut spec = CostSpec::new(v(5., 0., 0.), 2.0, 3.0);
        spec.lambda = [1.0, 0.0, 0.0, 0.0, 0.0];
        let vars = DecisionVars {
            p_f: v(3., 1., 0.),
            v_f: v(1., 0., 0.),
            interior: vec![v(1., 0., 0.), v(2., 0.5, 0.)],
            tau: tau_from_duration(2.5),
        };
        let obj = objective_and_gradient(&vars, &InitState::at_rest(Vec3::zeros()), 0.0, &EnvSnapshot::empty(world()), &spec);
        assert_relative_eq!(obj.value, 2.5, epsilon = 1e-12);
        assert_relative_eq!(obj.grad.tau, duration_slope(vars.tau), epsilon = 1e-12);
        assert!(obj.grad.p_f.norm() < 1e-12 && obj.grad.v_f.norm() < 1e-12);
        assert!(obj.grad.interior.iter().all(|g| g.norm() < 1e-12));
    }
}
