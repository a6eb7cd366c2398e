//! Uniform terminal-free minimum-control trajectories.
//!
//! A trajectory is `n` quintic segments of equal duration `T/n`, pinned to
//! the current position, velocity and acceleration at its start and free at
//! its end (terminal position and velocity are decision variables, terminal
//! acceleration is zero). The decision vector is
//! `[interior points, p_f, v_f, tau]` with `T = T_FLOOR + softplus(tau)`.

mod banded;
mod cost;
mod lbfgs;
mod optimize;
mod trajectory;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

pub use banded::BandedMatrix;
pub use cost::{
    alpha_blend, cost_breakdown, integrate_costs, integrate_with, objective_and_gradient, smooth_max,
    stage_penalties, terminal_cost, CostBreakdown, IntegralGrad, Objective, StageInput, StagePenalty,
};
pub use lbfgs::{minimize, LbfgsParams, LbfgsReport, LbfgsStatus};
pub use optimize::{init_from_path, optimize, warm_start_from, OptimizeResult, SolverParams, WarmStartParams};
pub use trajectory::{assemble_and_solve, basis, Coeffs, UtfTrajectory};

/// Lower bound on the total duration.
pub const T_FLOOR: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MincoError {
    #[error("total duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("decision vector has length {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("path must have at least two waypoints and positive length")]
    DegeneratePath,
    #[error("non-finite decision variables")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitState {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
}

impl InitState {
    pub fn at_rest(p: Vec3) -> Self {
        Self {
            p,
            v: Vec3::zeros(),
            a: Vec3::zeros(),
        }
    }
}

/// `T = T_FLOOR + ln(1 + e^tau)`.
pub fn duration_from_tau(tau: f64) -> f64 {
    let sp = if tau > 30.0 {
        tau + (-tau).exp().ln_1p()
    } else {
        tau.exp().ln_1p()
    };
    T_FLOOR + sp
}

/// `dT/dtau`, the logistic function.
pub fn duration_slope(tau: f64) -> f64 {
    if tau >= 0.0 {
        1.0 / (1.0 + (-tau).exp())
    } else {
        let e = tau.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`duration_from_tau`]; `t_total` must exceed `T_FLOOR`.
pub fn tau_from_duration(t_total: f64) -> f64 {
    let y = t_total - T_FLOOR;
    assert!(y > 0.0, "duration {t_total} not above floor {T_FLOOR}");
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

/// Optimization variables of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVars {
    pub p_f: Vec3,
    pub v_f: Vec3,
    /// `n - 1` junction positions.
    pub interior: Vec<Vec3>,
    pub tau: f64,
}

impl DecisionVars {
    pub fn segments(&self) -> usize {
        self.interior.len() + 1
    }

    pub fn duration(&self) -> f64 {
        duration_from_tau(self.tau)
    }

    pub fn dim(&self) -> usize {
        3 * self.interior.len() + 7
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for p in &self.interior {
            x.extend_from_slice(p.as_slice());
        }
        x.extend_from_slice(self.p_f.as_slice());
        x.extend_from_slice(self.v_f.as_slice());
        x.push(self.tau);
        x
    }

    pub fn from_slice(x: &[f64], n: usize) -> Result<Self, MincoError> {
        let expected = 3 * (n - 1) + 7;
        if x.len() != expected {
            return Err(MincoError::BadLength { got: x.len(), expected });
        }
        let v = |i: usize| Vec3::new(x[i], x[i + 1], x[i + 2]);
        let m = 3 * (n - 1);
        Ok(Self {
            interior: (0..n - 1).map(|i| v(3 * i)).collect(),
            p_f: v(m),
            v_f: v(m + 3),
            tau: x[m + 6],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    #[cfg(test)]
    pub(crate) fn check_segments(self, n: usize) -> Self {
        assert_eq!(self.segments(), n);
        self
    }
}

/// Weights, limits and terminal shaping of the trajectory objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// `(time, terminal, obstacle, dynamics, jerk)` weights.
    pub lambda: [f64; 5],
    pub k_f_p: Matrix3<f64>,
    pub k_f_v: Matrix3<f64>,
    pub d_eps: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub kappa: usize,
    pub p_goal: Vec3,
}

impl CostSpec {
    pub fn new(p_goal: Vec3, v_max: f64, a_max: f64) -> Self {
        Self {
            lambda: [1.0, 1.0 / v_max, 1.0e4, 1.0e3, 0.01],
            k_f_p: Matrix3::identity() * 16.0,
            k_f_v: Matrix3::identity(),
            d_eps: 3.0,
            v_max,
            a_max,
            kappa: 16,
            p_goal,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_max > 0.0) {
            return Err("v_max: must be positive".into());
        }
        if !(self.a_max > 0.0) {
            return Err("a_max: must be positive".into());
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            return Err("lambda: weights must be non-negative".into());
        }
        if self.kappa < 2 {
            return Err("kappa: must be at least 2".into());
        }
        if !(self.d_eps > 0.0) {
            return Err("d_eps: must be positive".into());
        }
        for (name, k) in [("k_f_p", &self.k_f_p), ("k_f_v", &self.k_f_v)] {
            if (k - k.transpose()).amax() > 1e-12 || k.cholesky().is_none() {
                return Err(format!("{name}: must be symmetric positive definite"));
            }
        }
        Ok(())
    }

    pub fn lambda_time(&self) -> f64 {
        self.lambda[0]
    }
    pub fn lambda_terminal(&self) -> f64 {
        self.lambda[1]
    }
    pub fn lambda_obstacle(&self) -> f64 {
        self.lambda[2]
    }
    pub fn lambda_dynamics(&self) -> f64 {
        self.lambda[3]
    }
    pub fn lambda_jerk(&self) -> f64 {
        self.lambda[4]
    }
}
