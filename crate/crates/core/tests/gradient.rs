use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trust_core::dynenv::{DynamicObstacle, EnvSnapshot, WorldBox};
use trust_core::utfminco::{cost_breakdown, objective_and_gradient, CostSpec, DecisionVars, InitState};
use trust_core::Vec3;

fn rvec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

fn instance(seed: u64, n: usize) -> (DecisionVars, InitState, EnvSnapshot, CostSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = InitState {
        p: Vec3::zeros(),
        v: rvec(&mut rng, 1.0),
        a: rvec(&mut rng, 1.0),
    };
    let goal = Vec3::new(8.0, 0.0, 0.0);
    let interior: Vec<Vec3> = (1..n)
        .map(|i| goal * (i as f64 / n as f64) + rvec(&mut rng, 0.6))
        .collect();
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
                let rot = nalgebra::Rotation3::rotation_between(&Vec3::z(), &axis).unwrap();
                dynamic.push(
                    DynamicObstacle::cylinder(k, c, Vec3::new(0.0, 0.5, 0.0), r, 0.05, 0.0)
                        .with_rotation(*rot.matrix()),
                )
            }
            _ => statics.push(DynamicObstacle::sphere(k, c, Vec3::zeros(), r, 0.0, 0.0)),
        }
    }
    let bounds = WorldBox::new(Vec3::new(-20.0, -20.0, -20.0), Vec3::new(20.0, 20.0, 20.0));
    let env = EnvSnapshot::new(0.0, dynamic, statics, bounds, 0.2, 4.0).unwrap();
    let mut spec = CostSpec::new(goal, 2.0, 3.0);
    spec.lambda = [1.0, 0.5, 10.0, 1.0, 0.01];
    spec.d_eps = 12.0;
    spec.k_f_v = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 1.5);
    (vars, init, env, spec)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut worst: f64 = 0.0;
    let mut engaged = 0;
    for seed in 0..20u64 {
        let n = if seed % 2 == 0 { 4 } else { 8 };
        let (vars, init, env, spec) = instance(seed, n);
        let obj = objective_and_gradient(&vars, &init, 0.0, &env, &spec);
        assert!(obj.value.is_finite());
        if cost_breakdown(&obj.traj, &env, &spec).i_o > 0.0 {
            engaged += 1;
        }
        let g = obj.grad.to_vec();
        let x = vars.to_vec();
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            let eval = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                let v = DecisionVars::from_slice(&y, n).unwrap();
                objective_and_gradient(&v, &init, 0.0, &env, &spec).value
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(1e-3 * scale);
            worst = worst.max(err);
            assert!(err < 1e-5, "seed {seed} index {i}: analytic {} fd {fd} rel {err}", g[i]);
        }
    }
    assert!(engaged >= 15, "obstacle penalty active in only {engaged} instances");
    eprintln!("worst relative error {worst:e}");
}
