//! Central-difference check of the analytic objective gradient on seeded
//! random instances.

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trust_core::dynenv::{DynamicObstacle, EnvSnapshot, WorldBox};
use trust_core::utfminco::{objective_and_gradient, CostSpec, DecisionVars, InitState};
use trust_core::Vec3;

pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub seed: u64,
    pub segments: usize,
    pub dim: usize,
    pub max_rel_err: f64,
    /// Index of the worst coordinate.
    pub worst_index: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

fn rvec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

/// Random decision variables around an 8 m course with a moving sphere, a
/// tilted moving cylinder and a static sphere near the path.
pub fn instance(seed: u64, n: usize) -> (DecisionVars, InitState, EnvSnapshot, CostSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = InitState {
        p: Vec3::zeros(),
        v: rvec(&mut rng, 1.0),
        a: rvec(&mut rng, 1.0),
    };
    let goal = Vec3::new(8.0, 0.0, 0.0);
    let interior = (1..n).map(|i| goal * (i as f64 / n as f64) + rvec(&mut rng, 0.6)).collect();
    let vars = DecisionVars {
        p_f: goal + rvec(&mut rng, 0.5),
        v_f: rvec(&mut rng, 1.5),
        interior,
        tau: rng.gen_range(1.0..3.0),
    };
    let mut dynamic = Vec::new();
    let mut statics = Vec::new();
    for k in 0..3 {
        let c = Vec3::new(rng.gen_range(2.0..6.0), 0.0, 0.0) + rvec(&mut rng, 0.5);
        let r = rng.gen_range(0.6..1.2);
        match k {
            0 => dynamic.push(DynamicObstacle::sphere(k, c, rvec(&mut rng, 0.8), r, 0.1, 0.0)),
            1 => {
                let axis = rvec(&mut rng, 1.0) + Vec3::new(0.0, 0.0, 2.0);
                let rot = Rotation3::rotation_between(&Vec3::z(), &axis).expect("axis not antiparallel");
                dynamic.push(
                    DynamicObstacle::cylinder(k, c, Vec3::new(0.0, 0.5, 0.0), r, 0.05, 0.0)
                        .with_rotation(*rot.matrix()),
                )
            }
            _ => statics.push(DynamicObstacle::sphere(k, c, Vec3::zeros(), r, 0.0, 0.0)),
        }
    }
    let bounds = WorldBox::new(Vec3::repeat(-20.0), Vec3::repeat(20.0));
    let env = EnvSnapshot::new(0.0, dynamic, statics, bounds, 0.2, 4.0).expect("valid snapshot");
    let mut spec = CostSpec::new(goal, 2.0, 3.0);
    spec.lambda = [1.0, 0.5, 10.0, 1.0, 0.01];
    spec.d_eps = 12.0;
    spec.k_f_v = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 1.5);
    (vars, init, env, spec)
}

pub fn check(seed: u64, n: usize) -> GradReport {
    let (vars, init, env, spec) = instance(seed, n);
    let g = objective_and_gradient(&vars, &init, 0.0, &env, &spec).grad.to_vec();
    let x = vars.to_vec();
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = (0.0, 0);
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let eval = |d: f64| {
            let mut y = x.clone();
            y[i] += d;
            let v = DecisionVars::from_slice(&y, n).expect("same dimension");
            objective_and_gradient(&v, &init, 0.0, &env, &spec).value
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let err = (fd - g[i]).abs() / fd.abs().max(1e-3 * scale);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    GradReport {
        seed,
        segments: n,
        dim: x.len(),
        max_rel_err: worst.0,
        worst_index: worst.1,
    }
}

/// Alternates 4 and 8 segments over `count` seeds starting at `seed0`.
pub fn suite(count: usize, seed0: u64) -> Vec<GradReport> {
    (0..count as u64)
        .map(|k| check(seed0 + k, if k % 2 == 0 { 4 } else { 8 }))
        .collect()
}
