//! Obstacle models, motion prediction with linearly growing uncertainty,
//! predictive directional cones and the dynamic distance field.
//!
//! Spheres and cylinders share one code path. A cylinder is infinite along
//! the z axis of its own frame; `rotation` maps world coordinates into that
//! frame (`d = G_xy * R^T * (p - c)`).

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

/// Points whose cone distance is within this band count as boundary points.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Below this speed a cone has no meaningful direction.
pub const DEGENERATE_SPEED: f64 = 1e-6;

/// Default slice count for predictive cones.
pub const DEFAULT_CONE_SLICES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("query time {t} precedes observation time {t_obs} of obstacle {id}")]
    StaleQuery { id: u32, t: f64, t_obs: f64 },
    #[error("invalid obstacle {id}: {reason}")]
    InvalidObstacle { id: u32, reason: String },
    #[error("invalid cone parameters: {0}")]
    InvalidCone(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub id: u32,
    pub shape: Shape,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Intrinsic radius `r_o`.
    pub radius: f64,
    /// Uncertainty growth rate `mu_o` (m/s).
    pub mu: f64,
    pub t_obs: f64,
    pub rotation: Matrix3<f64>,
}

impl DynamicObstacle {
    pub fn sphere(id: u32, position: Vec3, velocity: Vec3, radius: f64, mu: f64, t_obs: f64) -> Self {
        Self {
            id,
            shape: Shape::Sphere,
            position,
            velocity,
            radius,
            mu,
            t_obs,
            rotation: Matrix3::identity(),
        }
    }

    /// Vertical cylinder.
    pub fn cylinder(id: u32, position: Vec3, velocity: Vec3, radius: f64, mu: f64, t_obs: f64) -> Self {
        Self {
            shape: Shape::Cylinder,
            ..Self::sphere(id, position, velocity, radius, mu, t_obs)
        }
    }

    pub fn fixed(id: u32, shape: Shape, position: Vec3, radius: f64) -> Self {
        Self {
            shape,
            ..Self::sphere(id, position, Vec3::zeros(), radius, 0.0, 0.0)
        }
    }

    pub fn with_rotation(mut self, rotation: Matrix3<f64>) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |reason: &str| EnvError::InvalidObstacle {
            id: self.id,
            reason: reason.to_string(),
        };
        if !(self.radius > 0.0) {
            return Err(bad("radius must be positive"));
        }
        if !(self.mu >= 0.0) {
            return Err(bad("uncertainty slope must be non-negative"));
        }
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(bad("rotation must be orthonormal with determinant +1"));
        }
        if !self.position.iter().chain(self.velocity.iter()).all(|x| x.is_finite()) {
            return Err(bad("non-finite state"));
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.velocity.norm() < DEGENERATE_SPEED && self.mu == 0.0
    }

    fn check_time(&self, t: f64) -> Result<f64, EnvError> {
        let dt = t - self.t_obs;
        if dt < 0.0 {
            return Err(EnvError::StaleQuery {
                id: self.id,
                t,
                t_obs: self.t_obs,
            });
        }
        Ok(dt)
    }

    pub fn predict_position(&self, t: f64) -> Result<Vec3, EnvError> {
        self.check_time(t).map(|dt| self.position + self.velocity * dt)
    }

    pub fn avoidance_radius(&self, t: f64, r_safe: f64) -> Result<f64, EnvError> {
        self.check_time(t)
            .map(|dt| self.radius + r_safe + self.mu * dt)
    }

    /// Unchecked prediction for hot loops; callers guarantee `t >= t_obs`.
    #[inline]
    pub(crate) fn position_at(&self, t: f64) -> Vec3 {
        self.position + self.velocity * (t - self.t_obs)
    }

    #[inline]
    pub(crate) fn radius_at(&self, t: f64, r_safe: f64) -> f64 {
        self.radius + r_safe + self.mu * (t - self.t_obs)
    }

    /// Offset from `center` expressed in the shape's distance space: the full
    /// 3D offset for spheres, the axis-orthogonal part for cylinders.
    #[inline]
    fn metric_offset(&self, p: &Vec3, center: &Vec3) -> Vec3 {
        let d = p - center;
        match self.shape {
            Shape::Sphere => d,
            Shape::Cylinder => {
                let axis = self.rotation.column(2);
                d - axis * axis.dot(&d)
            }
        }
    }

    /// Euclidean clearance between `p` and the shape at `center` with `radius`.
    /// Negative inside.
    #[inline]
    pub fn clearance_to(&self, p: &Vec3, center: &Vec3, radius: f64) -> f64 {
        self.metric_offset(p, center).norm() - radius
    }

    /// Shortest distance from the segment `[a, b]` to the shape's core
    /// (center point or axis line) placed at `center`.
    pub fn segment_core_distance(&self, a: &Vec3, b: &Vec3, center: &Vec3) -> f64 {
        match self.shape {
            Shape::Sphere => point_segment_distance(center, a, b),
            Shape::Cylinder => {
                let la = self.rotation.transpose() * (a - center);
                let lb = self.rotation.transpose() * (b - center);
                point_segment_distance_2d(
                    &Vector2::zeros(),
                    &Vector2::new(la.x, la.y),
                    &Vector2::new(lb.x, lb.y),
                )
            }
        }
    }
}

/// Distance field value and gradients of one obstacle at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdfSample {
    /// `r(t)^2 - |d|^2`, positive inside the inflated region.
    pub phi: f64,
    pub dphi_dp: Vec3,
    pub dphi_dpo: Vec3,
    pub dphi_dr: f64,
}

/// Signed squared clearance of `p` against the predicted, inflated obstacle.
pub fn ddf_value_and_grads(obs: &DynamicObstacle, p: &Vec3, t: f64, r_safe: f64) -> DdfSample {
    debug_assert!(t >= obs.t_obs - 1e-12);
    let center = obs.position_at(t);
    let r = obs.radius_at(t, r_safe);
    ddf_at(obs, p, &center, r)
}

#[inline]
pub(crate) fn ddf_at(obs: &DynamicObstacle, p: &Vec3, center: &Vec3, r: f64) -> DdfSample {
    match obs.shape {
        Shape::Sphere => {
            let d = p - center;
            let dphi_dp = -2.0 * d;
            DdfSample {
                phi: r * r - d.norm_squared(),
                dphi_dp,
                dphi_dpo: -dphi_dp,
                dphi_dr: 2.0 * r,
            }
        }
        Shape::Cylinder => {
            let axis = obs.rotation.column(2);
            let d = p - center;
            let d = d - axis * axis.dot(&d);
            let dphi_dp = -2.0 * d;
            DdfSample {
                phi: r * r - d.norm_squared(),
                dphi_dp,
                dphi_dpo: -dphi_dp,
                dphi_dr: 2.0 * r,
            }
        }
    }
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * s - p).norm()
}

fn point_segment_distance_2d(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * s - p).norm()
}

/// Swept, expanding volume of one obstacle over a prediction horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCone {
    pub source: DynamicObstacle,
    pub horizon: f64,
    /// `(center, radius)` cross-sections, ordered in time.
    pub slices: Vec<(Vec3, f64)>,
    /// Bounding sphere for fast rejection.
    bound_center: Vec3,
    bound_radius: f64,
}

pub fn build_pdc(obs: &DynamicObstacle, horizon: f64, n_slices: usize) -> Result<PredictiveCone, EnvError> {
    if !(horizon > 0.0) {
        return Err(EnvError::InvalidCone(format!("horizon must be positive, got {horizon}")));
    }
    if n_slices < 2 {
        return Err(EnvError::InvalidCone(format!("need at least 2 slices, got {n_slices}")));
    }
    let slices: Vec<(Vec3, f64)> = (0..n_slices)
        .map(|k| {
            let dt = k as f64 * horizon / (n_slices - 1) as f64;
            (obs.position + obs.velocity * dt, obs.radius + obs.mu * dt)
        })
        .collect();
    let first = slices[0];
    let last = slices[n_slices - 1];
    let bound_center = (first.0 + last.0) * 0.5;
    let bound_radius = (last.0 - first.0).norm() * 0.5 + first.1.max(last.1);
    Ok(PredictiveCone {
        source: obs.clone(),
        horizon,
        slices,
        bound_center,
        bound_radius,
    })
}

impl PredictiveCone {
    pub fn is_degenerate(&self) -> bool {
        self.source.velocity.norm() < DEGENERATE_SPEED
    }

    /// Distance-like function of the cone: exact Euclidean distance outside,
    /// negative iff strictly inside. Convex in `p`.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        // Centers and radii are linear in time, so the union of the slice
        // frustums is the single frustum between the end slices.
        let obs = &self.source;
        let (c0, r0) = self.slices[0];
        let (c1, r1) = self.slices[self.slices.len() - 1];
        frustum_distance(&obs.metric_offset(p, &c0), &obs.metric_offset(&c1, &c0), r0, r1)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.signed_distance(p) < -BOUNDARY_TOL
    }

    /// Whether the segment passes strictly through the cone. The cone is
    /// convex, so the minimum of its distance function along the segment is
    /// located by golden-section search.
    pub fn blocks_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        if point_segment_distance_bound(&self.source, &self.bound_center, a, b) > self.bound_radius {
            return false;
        }
        let f = |s: f64| self.signed_distance(&(a + (b - a) * s));
        if f(0.0) < -BOUNDARY_TOL || f(1.0) < -BOUNDARY_TOL {
            return true;
        }
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        // The distance function is 1-Lipschitz in space, so along the
        // segment it changes by at most `len` per unit parameter.
        let len = (b - a).norm();
        for _ in 0..48 {
            if f1.min(f2) < -BOUNDARY_TOL {
                return true;
            }
            let gap = (x1 - lo).max(hi - x2).max(0.5 * (x2 - x1));
            if f1.min(f2) - len * gap >= -BOUNDARY_TOL {
                return false;
            }
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = f(x2);
            }
        }
        f1.min(f2) < -BOUNDARY_TOL
    }

    /// Unit normal of the ring plane for sampling: the motion direction, or
    /// world z for a stationary cone or a cylinder (whose rings must cut
    /// across the axis to reach the boundary).
    fn ring_normal(&self) -> Vec3 {
        match self.source.shape {
            Shape::Cylinder => self.source.rotation * Vec3::z(),
            Shape::Sphere if self.is_degenerate() => Vec3::z(),
            Shape::Sphere => self.source.velocity.normalize(),
        }
    }
}

/// Lower bound on the distance from the segment to the cone's bounding
/// sphere, in the cone's metric space.
fn point_segment_distance_bound(obs: &DynamicObstacle, center: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    obs.segment_core_distance(a, b, center)
}

/// `min_s |q - s*axis| - (r0 + s*(r1 - r0))` over `s in [0, 1]`.
fn frustum_distance(q: &Vec3, axis: &Vec3, r0: f64, r1: f64) -> f64 {
    let eval = |s: f64| (q - axis * s).norm() - (r0 + s * (r1 - r0));
    let len = axis.norm();
    if len < 1e-12 {
        return q.norm() - r0.max(r1);
    }
    let dir = axis / len;
    let along = q.dot(&dir);
    let perp = (q.norm_squared() - along * along).max(0.0).sqrt();
    let slope = (r1 - r0) / len;
    if slope.abs() >= 1.0 {
        return eval(0.0).min(eval(1.0));
    }
    let x = along + slope * perp / (1.0 - slope * slope).sqrt();
    let s = (x / len).clamp(0.0, 1.0);
    eval(s).min(eval(0.0)).min(eval(1.0))
}

/// Boundary samples of the cone: `n_ring` rays per slice, equally spaced in
/// angle in the ring plane through the slice center, each pushed out to
/// where it leaves the cone. With no uncertainty growth this is exactly the
/// circle of the slice radius.
pub fn pdc_surface_samples(pdc: &PredictiveCone, n_slices: usize, n_ring: usize) -> Vec<Vec3> {
    if n_slices < 2 || n_ring < 3 {
        return Vec::new();
    }
    let normal = pdc.ring_normal();
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = normal.cross(&helper).normalize();
    let e2 = normal.cross(&e1);
    let first = pdc.slices[0];
    let last = pdc.slices[pdc.slices.len() - 1];
    let degenerate_sphere = pdc.is_degenerate() && pdc.source.shape == Shape::Sphere;
    let mut out = Vec::with_capacity(n_slices * n_ring);
    for k in 0..n_slices {
        let frac = k as f64 / (n_slices - 1) as f64;
        let mut center = first.0 + (last.0 - first.0) * frac;
        if degenerate_sphere {
            // Stationary growth nests every slice inside the last one, so
            // spread rings over latitudes of the outermost sphere instead.
            let theta = std::f64::consts::PI * (k as f64 + 1.0) / (n_slices as f64 + 1.0);
            center += Vec3::z() * last.1 * theta.cos();
        }
        for j in 0..n_ring {
            let ang = std::f64::consts::TAU * j as f64 / n_ring as f64;
            let dir = e1 * ang.cos() + e2 * ang.sin();
            out.push(ray_exit(pdc, &center, &dir));
        }
    }
    out
}

fn ray_exit(pdc: &PredictiveCone, origin: &Vec3, dir: &Vec3) -> Vec3 {
    let mut lo = 0.0;
    let mut hi = pdc.bound_radius * 2.0 + 1.0;
    while pdc.signed_distance(&(origin + dir * hi)) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pdc.signed_distance(&(origin + dir * mid)) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    origin + dir * hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl WorldBox {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn intersect(&self, other: &WorldBox) -> WorldBox {
        WorldBox {
            min: self.min.sup(&other.min),
            max: self.max.inf(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Immutable view of the environment used by every query of one planning
/// cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub t_snap: f64,
    pub dynamic: Vec<DynamicObstacle>,
    pub static_obs: Vec<DynamicObstacle>,
    pub pdcs: Vec<PredictiveCone>,
    pub bounds: WorldBox,
    pub r_safe: f64,
}

impl EnvSnapshot {
    pub fn new(
        t_snap: f64,
        dynamic: Vec<DynamicObstacle>,
        static_obs: Vec<DynamicObstacle>,
        bounds: WorldBox,
        r_safe: f64,
        horizon: f64,
    ) -> Result<Self, EnvError> {
        for o in dynamic.iter().chain(static_obs.iter()) {
            o.validate()?;
        }
        let static_obs = static_obs
            .into_iter()
            .map(|o| DynamicObstacle {
                velocity: Vec3::zeros(),
                mu: 0.0,
                ..o
            })
            .collect();
        let pdcs = dynamic
            .iter()
            .map(|o| build_pdc(o, horizon, DEFAULT_CONE_SLICES))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            t_snap,
            dynamic,
            static_obs,
            pdcs,
            bounds,
            r_safe,
        })
    }

    pub fn empty(bounds: WorldBox) -> Self {
        Self {
            t_snap: 0.0,
            dynamic: Vec::new(),
            static_obs: Vec::new(),
            pdcs: Vec::new(),
            bounds,
            r_safe: 0.0,
        }
    }

    /// Every obstacle, static ones last.
    pub fn all_obstacles(&self) -> impl Iterator<Item = &DynamicObstacle> {
        self.dynamic.iter().chain(self.static_obs.iter())
    }

    /// Whether the straight segment crosses any obstacle at its predicted
    /// pose and avoidance radius at time `t`.
    pub fn segment_blocked_at(&self, a: &Vec3, b: &Vec3, t: f64) -> bool {
        self.segment_blocked_with_margin(a, b, t, self.r_safe)
    }

    /// Like [`Self::segment_blocked_at`] with `margin` in place of `r_safe`.
    pub fn segment_blocked_with_margin(&self, a: &Vec3, b: &Vec3, t: f64, margin: f64) -> bool {
        self.all_obstacles().any(|o| {
            let t_eval = t.max(o.t_obs);
            let center = o.position_at(t_eval);
            let r = o.radius_at(t_eval, margin);
            o.segment_core_distance(a, b, &center) < r
        })
    }

    /// Whether the segment crosses a static obstacle or a predictive cone.
    pub fn segment_blocked_static(&self, a: &Vec3, b: &Vec3) -> bool {
        self.static_obs.iter().any(|o| {
            o.segment_core_distance(a, b, &o.position) < o.radius + self.r_safe
        }) || self.pdcs.iter().any(|c| c.blocks_segment(a, b))
    }

    /// Whether `p` is strictly inside a static obstacle or a cone.
    pub fn point_blocked_static(&self, p: &Vec3) -> bool {
        self.static_obs
            .iter()
            .any(|o| o.clearance_to(p, &o.position, o.radius + self.r_safe) < 0.0)
            || self.pdcs.iter().any(|c| c.contains(p))
    }

    /// Minimum clearance of `p` at time `t` against the obstacles inflated by
    /// `r_safe`-free avoidance radii plus `margin`.
    pub fn clearance_at(&self, p: &Vec3, t: f64, margin: f64) -> f64 {
        self.all_obstacles()
            .map(|o| {
                let t_eval = t.max(o.t_obs);
                o.clearance_to(p, &o.position_at(t_eval), o.radius_at(t_eval, margin))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn unbounded() -> WorldBox {
        WorldBox::new(v(-50., -50., -50.), v(50., 50., 50.))
    }

    #[test]
    fn prediction_is_linear() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(1., 0., 0.), 0.5, 0.0, 0.0);
        assert_eq!(o.predict_position(2.0).unwrap(), v(2., 0., 0.));
        let s = DynamicObstacle::fixed(1, Shape::Sphere, v(3., 4., 5.), 1.0);
        assert_eq!(s.predict_position(17.0).unwrap(), v(3., 4., 5.));
        let o = DynamicObstacle::sphere(2, v(1., 2., 3.), v(0., -1., 0.5), 0.5, 0.0, 1.0);
        assert_eq!(o.predict_position(5.0).unwrap(), v(1., -2., 5.));
    }

    #[test]
    fn stale_queries_are_rejected() {
        let o = DynamicObstacle::sphere(7, v(0., 0., 0.), v(1., 0., 0.), 0.5, 0.0, 3.0);
        assert!(matches!(o.predict_position(2.9), Err(EnvError::StaleQuery { id: 7, .. })));
        assert!(o.avoidance_radius(1.0, 0.1).is_err());
    }

    #[test]
    fn avoidance_radius_grows_with_uncertainty() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(0., 0., 0.), 0.5, 0.1, 0.0);
        assert_relative_eq!(o.avoidance_radius(4.0, 0.2).unwrap(), 1.1, epsilon = 1e-12);
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(0., 0., 0.), 0.5, 0.0, 0.0);
        assert_relative_eq!(o.avoidance_radius(9.0, 0.2).unwrap(), 0.7, epsilon = 1e-12);
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(0., 0., 0.), 0.3, 0.05, 2.0);
        assert_relative_eq!(o.avoidance_radius(2.0, 0.0).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn validation_catches_bad_rotation() {
        let o = DynamicObstacle::fixed(0, Shape::Cylinder, v(0., 0., 0.), 1.0)
            .with_rotation(Matrix3::from_diagonal(&v(1., 1., -1.)));
        assert!(o.validate().is_err());
        let o = DynamicObstacle::fixed(0, Shape::Sphere, v(0., 0., 0.), 0.0);
        assert!(o.validate().is_err());
    }

    #[test]
    fn cone_slices() {
        let o = DynamicObstacle::sphere(0, v(1., 1., 1.), v(0., 0., 0.), 0.5, 0.0, 0.0);
        let c = build_pdc(&o, 4.0, 5).unwrap();
        assert!(c.slices.iter().all(|s| *s == (v(1., 1., 1.), 0.5)));

        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(1., 0., 0.), 0.5, 0.25, 0.0);
        let c = build_pdc(&o, 4.0, 8).unwrap();
        let (center, radius) = *c.slices.last().unwrap();
        assert_relative_eq!(radius, 1.5, epsilon = 1e-12);
        assert_relative_eq!(center, v(4., 0., 0.), epsilon = 1e-12);
        assert!(c.slices.windows(2).all(|w| w[1].1 > w[0].1));
        assert!(build_pdc(&o, 0.0, 8).is_err());
        assert!(build_pdc(&o, 1.0, 1).is_err());
    }

    #[test]
    fn ring_samples_without_growth_sit_on_slice_circles() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(1., 0., 0.), 1.0, 0.0, 0.0);
        let c = build_pdc(&o, 4.0, 2).unwrap();
        let pts = pdc_surface_samples(&c, 2, 4);
        assert_eq!(pts.len(), 8);
        let mut offsets: Vec<Vec3> = pts[..4].to_vec();
        offsets.sort_by(|a, b| a.y.partial_cmp(&b.y).unwrap().then(a.z.partial_cmp(&b.z).unwrap()));
        let expect = [v(0., -1., 0.), v(0., 0., -1.), v(0., 0., 1.), v(0., 1., 0.)];
        for (p, e) in offsets.iter().zip(expect.iter()) {
            assert_relative_eq!(p, e, epsilon = 1e-9);
        }
        assert_eq!(pdc_surface_samples(&c, 2, 3).len(), 6);
    }

    #[test]
    fn degenerate_cone_rings_are_horizontal() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(0., 0., 0.), 1.0, 0.1, 0.0);
        let c = build_pdc(&o, 3.0, 4).unwrap();
        let pts = pdc_surface_samples(&c, 4, 6);
        for ring in pts.chunks(6) {
            let z0 = ring[0].z;
            assert!(ring.iter().all(|p| (p.z - z0).abs() < 1e-9));
        }
        for p in &pts {
            assert!(c.signed_distance(p).abs() < BOUNDARY_TOL);
        }
    }

    #[test]
    fn ddf_examples() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(0., 0., 0.), 1.0, 0.0, 0.0);
        let s = ddf_value_and_grads(&o, &v(2., 0., 0.), 0.0, 0.0);
        assert_relative_eq!(s.phi, -3.0);
        assert_relative_eq!(s.dphi_dp, v(-4., 0., 0.));
        assert_relative_eq!(s.dphi_dr, 2.0);
        let s = ddf_value_and_grads(&o, &v(0.5, 0., 0.), 0.0, 0.0);
        assert_relative_eq!(s.phi, 0.75);

        let cyl = DynamicObstacle::cylinder(1, v(0., 0., 0.), v(0., 0., 0.), 0.4, 0.0, 0.0);
        let s = ddf_value_and_grads(&cyl, &v(0., 0., 5.), 0.0, 0.0);
        assert_relative_eq!(s.phi, 0.16, epsilon = 1e-12);
    }

    #[test]
    fn segment_queries_at_time() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(1., 0., 0.), 1.0, 0.0, 0.0);
        let env = EnvSnapshot::new(0.0, vec![o], vec![], unbounded(), 0.0, 4.0).unwrap();
        assert!(!env.segment_blocked_at(&v(5., 5., 5.), &v(5., 5., 5.), 2.0));
        assert!(env.segment_blocked_at(&v(2., -2., 0.), &v(2., 2., 0.), 2.0));
        assert!(!env.segment_blocked_at(&v(-2., -2., 0.), &v(-2., 2., 0.), 2.0));
    }

    #[test]
    fn segment_queries_static() {
        let o = DynamicObstacle::sphere(0, v(0., 0., 0.), v(1., 0., 0.), 0.5, 0.25, 0.0);
        let env = EnvSnapshot::new(0.0, vec![o], vec![], unbounded(), 0.0, 4.0).unwrap();
        assert!(!env.segment_blocked_static(&v(100., 100., 100.), &v(120., 100., 100.)));
        assert!(env.segment_blocked_static(&v(0., -3., 0.), &v(0., 3., 0.)));
        // Passes beside the base but through the wide far end.
        assert!(env.segment_blocked_static(&v(4., -3., 1.2), &v(4., 3., 1.2)));
        assert!(!env.segment_blocked_static(&v(0., -3., 1.2), &v(0., 3., 1.2)));
    }

    #[test]
    fn cylinder_clearance_ignores_axis() {
        let cyl = DynamicObstacle::cylinder(0, v(0., 0., 0.), v(0., 0., 0.), 0.5, 0.0, 0.0);
        let env = EnvSnapshot::new(0.0, vec![], vec![cyl], unbounded(), 0.0, 4.0).unwrap();
        assert!(env.segment_blocked_static(&v(-1., 0., 30.), &v(1., 0., 30.)));
        assert!(!env.segment_blocked_static(&v(-1., 0.6, 30.), &v(1., 0.6, 30.)));
    }
}
