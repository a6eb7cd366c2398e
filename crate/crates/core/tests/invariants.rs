use proptest::prelude::*;
use trust_core::dynenv::{build_pdc, DynamicObstacle};
use trust_core::utfminco::{assemble_and_solve, DecisionVars, InitState};
use trust_core::Vec3;

fn vec3(s: f64) -> impl Strategy<Value = Vec3> {
    (-s..s, -s..s, -s..s).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mapping_hits_every_condition(
        n in 1usize..10,
        p0 in vec3(5.0), v0 in vec3(2.0), a0 in vec3(2.0),
        p_f in vec3(10.0), v_f in vec3(2.0),
        pts in prop::collection::vec(vec3(10.0), 9),
        t_total in 0.3f64..15.0,
        t_start in 0.0f64..100.0,
    ) {
        let vars = DecisionVars { p_f, v_f, interior: pts[..n - 1].to_vec(), tau: 0.0 };
        let init = InitState { p: p0, v: v0, a: a0 };
        let traj = assemble_and_solve(&vars, t_total, &init, t_start).unwrap();
        // Continuity rows of high order are large on short segments; bound
        // the residual relative to the biggest derivative they compare.
        let h = traj.segment_duration();
        let scale = (1..n)
            .flat_map(|i| (0..5).map(move |d| (i, d)))
            .map(|(i, d)| traj.eval_derivative(t_start + h * i as f64, d).amax())
            .fold(1.0, f64::max);
        prop_assert!(traj.condition_residual(&vars) < 1e-12 * scale.max(1e4));
        prop_assert!((traj.position(t_start) - p0).amax() < 1e-8);
        prop_assert!((traj.end_position() - p_f).amax() < 1e-7);
        prop_assert!((traj.end_velocity() - v_f).amax() < 1e-7);
        prop_assert!(traj.acceleration(t_start + t_total).amax() < 1e-6);
    }

    /// Every point of the predicted, growing ball lies in the cone.
    #[test]
    fn cone_covers_the_predicted_ball(
        c in vec3(5.0), vel in vec3(1.5),
        r in 0.1f64..1.5, mu in 0.0f64..0.5,
        s in 0.0f64..1.0, dir in vec3(1.0), depth in 0.0f64..0.999,
    ) {
        prop_assume!(dir.norm() > 1e-3);
        let horizon = 4.0;
        let obs = DynamicObstacle::sphere(0, c, vel, r, mu, 0.0);
        let pdc = build_pdc(&obs, horizon, 5).unwrap();
        let t = s * horizon;
        let p = obs.predict_position(t).unwrap() + dir.normalize() * (depth * (r + mu * t));
        prop_assert!(pdc.contains(&p));
        prop_assert!(pdc.signed_distance(&p) <= 1e-9);
    }
}
