use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use super::banded::BandedMatrix;
use super::{DecisionVars, InitState, MincoError};
use crate::Vec3;

/// Per-segment coefficients, row `k` multiplies `t^k`.
pub type Coeffs = SMatrix<f64, 6, 3>;

pub(crate) const LOWER_BW: usize = 6;
pub(crate) const UPPER_BW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Junction {
    Waypoint,
    Continuity(usize),
}

/// Row order of the six conditions at each interior junction. Putting the
/// jerk and snap conditions first keeps every pivot of the unpivoted LU
/// nonzero.
pub(crate) const JUNCTION_ROWS: [Junction; 6] = [
    Junction::Continuity(3),
    Junction::Continuity(4),
    Junction::Waypoint,
    Junction::Continuity(0),
    Junction::Continuity(1),
    Junction::Continuity(2),
];

/// Offset of the waypoint row inside a junction block.
pub(crate) const WAYPOINT_ROW: usize = 2;

/// `d^order/dt^order` of the monomial basis `[1, t, ..., t^5]`.
#[inline]
pub fn basis(t: f64, order: usize) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (k, slot) in out.iter_mut().enumerate().skip(order) {
        let mut c = 1.0;
        for m in 0..order {
            c *= (k - m) as f64;
        }
        *slot = c * t.powi((k - order) as i32);
    }
    out
}

/// Basis vectors for orders 0..=4 at once.
#[inline]
pub(crate) fn basis_stack(t: f64) -> [[f64; 6]; 5] {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    [
        [1.0, t, t2, t3, t4, t5],
        [0.0, 1.0, 2.0 * t, 3.0 * t2, 4.0 * t3, 5.0 * t4],
        [0.0, 0.0, 2.0, 6.0 * t, 12.0 * t2, 20.0 * t3],
        [0.0, 0.0, 0.0, 6.0, 24.0 * t, 60.0 * t2],
        [0.0, 0.0, 0.0, 0.0, 24.0, 120.0 * t],
    ]
}

#[inline]
pub(crate) fn apply(c: &Coeffs, b: &[f64; 6]) -> Vec3 {
    let mut out = Vec3::zeros();
    for k in 0..6 {
        if b[k] != 0.0 {
            out += c.row(k).transpose() * b[k];
        }
    }
    out
}

/// Piecewise quintic with `n` equal-length segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrajectoryRecord", try_from = "TrajectoryRecord")]
pub struct UtfTrajectory {
    pub coeffs: Vec<Coeffs>,
    pub t_total: f64,
    pub t_start: f64,
    pub init_state: InitState,
}

impl UtfTrajectory {
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn segment_duration(&self) -> f64 {
        self.t_total / self.n() as f64
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.t_total
    }

    /// Segment index and local time for absolute `t`, clamped to the
    /// trajectory's time span.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let seg = self.segment_duration();
        let rel = (t - self.t_start).clamp(0.0, self.t_total);
        let i = ((rel / seg).floor() as usize).min(self.n() - 1);
        (i, rel - i as f64 * seg)
    }

    pub fn eval_derivative(&self, t: f64, order: usize) -> Vec3 {
        assert!(order <= 4, "derivative order {order} not supported");
        let (i, tau) = self.locate(t);
        apply(&self.coeffs[i], &basis(tau, order))
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.eval_derivative(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.eval_derivative(t, 1)
    }

    pub fn acceleration(&self, t: f64) -> Vec3 {
        self.eval_derivative(t, 2)
    }

    pub fn end_position(&self) -> Vec3 {
        self.position(self.t_end())
    }

    pub fn end_velocity(&self) -> Vec3 {
        self.velocity(self.t_end())
    }

    /// Junction positions `p(t_i)` for `i = 1..n-1`.
    pub fn interior_points(&self) -> Vec<Vec3> {
        let seg = self.segment_duration();
        (0..self.n() - 1)
            .map(|i| apply(&self.coeffs[i], &basis(seg, 0)))
            .collect()
    }

    /// Largest speed and acceleration magnitude over `samples_per_seg + 1`
    /// uniform samples of every segment.
    pub fn max_speed_accel(&self, samples_per_seg: usize) -> (f64, f64) {
        let seg = self.segment_duration();
        let mut vmax: f64 = 0.0;
        let mut amax: f64 = 0.0;
        for c in &self.coeffs {
            for k in 0..=samples_per_seg {
                let tau = seg * k as f64 / samples_per_seg as f64;
                let b = basis_stack(tau);
                vmax = vmax.max(apply(c, &b[1]).norm());
                amax = amax.max(apply(c, &b[2]).norm());
            }
        }
        (vmax, amax)
    }

    /// Residuals of all `6n` defining linear conditions for the given
    /// boundary data; returns the largest absolute residual.
    pub fn condition_residual(&self, vars: &DecisionVars) -> f64 {
        let n = self.n();
        let seg = self.segment_duration();
        let mut worst: f64 = 0.0;
        let mut upd = |v: Vec3| worst = worst.max(v.amax());
        let b0 = basis_stack(0.0);
        let bt = basis_stack(seg);
        upd(apply(&self.coeffs[0], &b0[0]) - self.init_state.p);
        upd(apply(&self.coeffs[0], &b0[1]) - self.init_state.v);
        upd(apply(&self.coeffs[0], &b0[2]) - self.init_state.a);
        for i in 0..n - 1 {
            upd(apply(&self.coeffs[i], &bt[0]) - vars.interior[i]);
            for d in 0..5 {
                upd(apply(&self.coeffs[i], &bt[d]) - apply(&self.coeffs[i + 1], &b0[d]));
            }
        }
        let last = &self.coeffs[n - 1];
        upd(apply(last, &bt[0]) - vars.p_f);
        upd(apply(last, &bt[1]) - vars.v_f);
        upd(apply(last, &bt[2]));
        worst
    }
}

/// Assembles the `6n x 6n` band system for total duration `t_total`.
pub(crate) fn assemble_system(n: usize, t_total: f64) -> BandedMatrix {
    let seg = t_total / n as f64;
    let b0 = basis_stack(0.0);
    let bt = basis_stack(seg);
    let mut a = BandedMatrix::zeros(6 * n, LOWER_BW, UPPER_BW);
    for d in 0..3 {
        for k in 0..6 {
            if b0[d][k] != 0.0 {
                a.set(d, k, b0[d][k]);
            }
        }
    }
    for i in 0..n - 1 {
        let row = 3 + 6 * i;
        for (r, cond) in JUNCTION_ROWS.iter().enumerate() {
            match *cond {
                Junction::Waypoint => {
                    for k in 0..6 {
                        a.set(row + r, 6 * i + k, bt[0][k]);
                    }
                }
                Junction::Continuity(d) => {
                    for k in d..6 {
                        a.set(row + r, 6 * i + k, bt[d][k]);
                    }
                    a.set(row + r, 6 * (i + 1) + d, -b0[d][d]);
                }
            }
        }
    }
    for d in 0..3 {
        for k in d..6 {
            a.set(6 * n - 3 + d, 6 * (n - 1) + k, bt[d][k]);
        }
    }
    a
}

/// Right-hand side rows (one per condition, xyz columns).
pub(crate) fn boundary_rows(vars: &DecisionVars, init: &InitState) -> Vec<[f64; 3]> {
    let n = vars.segments();
    let mut d = vec![[0.0; 3]; 6 * n];
    d[0] = init.p.into();
    d[1] = init.v.into();
    d[2] = init.a.into();
    for (i, p) in vars.interior.iter().enumerate() {
        d[3 + 6 * i + WAYPOINT_ROW] = (*p).into();
    }
    d[6 * n - 3] = vars.p_f.into();
    d[6 * n - 2] = vars.v_f.into();
    d
}

pub(crate) fn rows_to_coeffs(rows: &[[f64; 3]]) -> Vec<Coeffs> {
    rows.chunks(6)
        .map(|chunk| Coeffs::from_fn(|r, c| chunk[r][c]))
        .collect()
}

/// Solves for the coefficients from terminal state, interior points and
/// total duration. Linear in time and memory.
pub fn assemble_and_solve(
    vars: &DecisionVars,
    t_total: f64,
    init: &InitState,
    t_start: f64,
) -> Result<UtfTrajectory, MincoError> {
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(MincoError::NonPositiveDuration(t_total));
    }
    let n = vars.segments();
    let mut a = assemble_system(n, t_total);
    a.factorize();
    let mut rows = boundary_rows(vars, init);
    a.solve(&mut rows);
    Ok(UtfTrajectory {
        coeffs: rows_to_coeffs(&rows),
        t_total,
        t_start,
        init_state: *init,
    })
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    n: usize,
    #[serde(rename = "T_total")]
    t_total: f64,
    t_start: f64,
    init_state: InitState,
    coeffs: Vec<[[f64; 3]; 6]>,
}

impl From<UtfTrajectory> for TrajectoryRecord {
    fn from(t: UtfTrajectory) -> Self {
        Self {
            n: t.n(),
            t_total: t.t_total,
            t_start: t.t_start,
            init_state: t.init_state,
            coeffs: t
                .coeffs
                .iter()
                .map(|c| std::array::from_fn(|r| std::array::from_fn(|k| c[(r, k)])))
                .collect(),
        }
    }
}

impl TryFrom<TrajectoryRecord> for UtfTrajectory {
    type Error = String;

    fn try_from(r: TrajectoryRecord) -> Result<Self, String> {
        if r.n == 0 || r.coeffs.len() != r.n {
            return Err(format!("expected {} coefficient blocks, found {}", r.n, r.coeffs.len()));
        }
        if !(r.t_total > 0.0) {
            return Err(format!("T_total must be positive, got {}", r.t_total));
        }
        Ok(Self {
            coeffs: r
                .coeffs
                .iter()
                .map(|c| Coeffs::from_fn(|row, col| c[row][col]))
                .collect(),
            t_total: r.t_total,
            t_start: r.t_start,
            init_state: r.init_state,
        })
    }
}
