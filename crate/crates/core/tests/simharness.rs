use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trust_core::dynenv::{DynamicObstacle, WorldBox};
use trust_core::simharness::{
    estimator_step, generate_world, run_episode, run_monte_carlo, sim_budget, EstimatorParams, MotionModel,
    ObstacleTrack, Outcome, SimError, SimParams, World, WorldConfig,
};
use trust_core::topomgr::{PlannerConfig, Variant};
use trust_core::Vec3;

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn track_run(truth: impl Fn(f64) -> Vec3, steps: usize, sigma_z: f64, q: f64) -> Vec<ObstacleTrack> {
    let params = EstimatorParams::default();
    let dt = 0.1;
    let mut out: Vec<ObstacleTrack> = Vec::new();
    for k in 0..steps {
        let z = truth(k as f64 * dt);
        let t = estimator_step(out.last(), 0, &z, dt, sigma_z, q, &params);
        out.push(t);
    }
    out
}

#[test]
fn stationary_track_settles() {
    let tracks = track_run(|_| v(2., -1., 0.5), 50, 0.05, 0.01);
    let last = tracks.last().unwrap();
    assert!(last.velocity().norm() < 1e-3);
    assert!(tracks[2..].windows(2).all(|w| w[1].mu <= w[0].mu + 1e-15));
    assert!(last.mu < tracks[2].mu);
}

#[test]
fn linear_motion_velocity_converges() {
    let vel = v(0.8, -0.3, 0.1);
    let tracks = track_run(|t| v(1., 2., 3.) + vel * t, 31, 0.05, 0.1);
    for tr in &tracks[30..] {
        assert!((tr.velocity() - vel).norm() < 1e-3, "{:?}", tr.velocity());
    }
}

#[test]
fn covariance_stays_symmetric_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let params = EstimatorParams::default();
    let mut tr: Option<ObstacleTrack> = None;
    for k in 0..200 {
        let z = v(0.5, 0.0, 0.0) * (k as f64 * 0.1) + Vec3::from_fn(|_, _| noise.sample(&mut rng));
        let next = estimator_step(tr.as_ref(), 3, &z, 0.1, 0.05, 0.1, &params);
        assert!((next.cov - next.cov.transpose()).abs().max() < 1e-15);
        assert!(next.cov.symmetric_eigenvalues().min() > 0.0);
        assert!(next.mu >= 0.0 && next.mu <= params.mu_max);
        tr = Some(next);
    }
}

#[test]
fn noiseless_innovations_stay_small() {
    let vel = v(-1.0, 0.4, 0.0);
    let tracks = track_run(|t| v(0., 0., 1.) + vel * t, 60, 0.0, 0.1);
    assert!(tracks[5..].iter().all(|t| t.nis < 3.0));
}

fn open_box() -> WorldBox {
    WorldBox::new(v(-2., -4., -1.), v(14., 4., 5.))
}

fn planner(goal: Vec3, seed: u64) -> PlannerConfig {
    let mut cfg = PlannerConfig::new(goal, 2.0, 3.0, seed);
    cfg.budget = sim_budget();
    cfg
}

fn empty(bounds: WorldBox) -> World {
    World {
        bounds,
        static_obs: vec![],
        dynamic: vec![],
        motion_model: MotionModel::ConstVelBounce,
        pursuit_turn_rate: 2.0,
    }
}

#[test]
fn empty_world_arrives_no_faster_than_the_speed_limit() {
    let wc = WorldConfig::new(open_box(), v(0., 0., 2.), v(10., 0., 2.));
    let log = run_episode(&empty(wc.bounds), &wc, &planner(wc.p_goal, 1), &SimParams::default(), 1).unwrap();
    assert_eq!(log.outcome, Outcome::Success);
    let t = log.arrival_time.unwrap();
    // The vehicle has to cover 9.7 m to enter the arrival ball.
    assert!(t >= 9.7 / 2.0, "{t}");
    assert!(t < 12.0, "{t}");
    let m = log.metrics();
    assert!(m.max_speed <= 2.0 * 1.01);
    assert!(m.max_accel <= 3.0 * 1.01);
}

#[test]
fn short_time_limit_times_out() {
    let wc = WorldConfig::new(open_box(), v(0., 0., 2.), v(10., 0., 2.));
    let sim = SimParams {
        t_limit: 1.0,
        ..Default::default()
    };
    let log = run_episode(&empty(wc.bounds), &wc, &planner(wc.p_goal, 1), &sim, 1).unwrap();
    assert_eq!(log.outcome, Outcome::Timeout);
    assert_eq!(log.ticks.len(), 10);
    assert!(log.arrival_time.is_none());
}

#[test]
fn ticks_follow_the_chosen_polynomials() {
    let wc = WorldConfig {
        n_static: 3,
        n_dynamic: 4,
        seed: 5,
        ..WorldConfig::new(open_box(), v(0., 0., 2.), v(12., 0., 2.))
    };
    let world = generate_world(&wc).unwrap();
    let log = run_episode(&world, &wc, &planner(wc.p_goal, 5), &SimParams::default(), 5).unwrap();
    assert!(log.ticks.len() > 10);
    for (k, w) in log.ticks.windows(2).enumerate() {
        assert_eq!(w[0].cycle, k);
        assert!((w[1].t - w[0].t - 0.1).abs() < 1e-12);
        let c = &w[0].chosen;
        assert!((c.position(w[1].t) - w[1].p).norm() < 1e-9);
        assert!((c.velocity(w[1].t) - w[1].v).norm() < 1e-9);
        assert!((c.acceleration(w[1].t) - w[1].a).norm() < 1e-9);
    }
}

#[test]
fn episodes_are_reproducible() {
    let wc = WorldConfig {
        n_static: 2,
        n_dynamic: 5,
        seed: 9,
        ..WorldConfig::new(open_box(), v(0., 0., 2.), v(12., 0., 2.))
    };
    let world = generate_world(&wc).unwrap();
    let cfg = planner(wc.p_goal, 9);
    let sim = SimParams::default();
    let a = run_episode(&world, &wc, &cfg, &sim, 9).unwrap();
    let b = run_episode(&world, &wc, &cfg, &sim, 9).unwrap();
    assert_eq!(a.ticks, b.ticks);
    assert_eq!(a.outcome, b.outcome);
    let ja: Vec<String> = a.ticks.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
    let jb: Vec<String> = b.ticks.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
    assert_eq!(ja, jb);
}

#[test]
fn collisions_are_judged_on_ground_truth() {
    // A wide ball rushing head-on, far faster than the vehicle can dodge.
    let wc = WorldConfig::new(open_box(), v(0., 0., 2.), v(12., 0., 2.));
    let mut world = empty(wc.bounds);
    world.dynamic.push(DynamicObstacle::sphere(0, v(9., 0., 2.), v(-8., 0., 0.), 2.5, 0.0, 0.0));
    let log = run_episode(&world, &wc, &planner(wc.p_goal, 2), &SimParams::default(), 2).unwrap();
    assert_eq!(log.outcome, Outcome::Collision);
    assert!(log.min_clearance < 0.0);
}

#[test]
fn unreachable_goal_deadlocks() {
    let wc = WorldConfig {
        r_safe: 0.2,
        ..WorldConfig::new(open_box(), v(0., 0., 2.), v(6., 0., 2.))
    };
    let mut world = empty(wc.bounds);
    world.static_obs.push(DynamicObstacle::sphere(0, v(6., 0., 2.), Vec3::zeros(), 1.5, 0.0, 0.0));
    let sim = SimParams {
        t_limit: 40.0,
        ..Default::default()
    };
    let log = run_episode(&world, &wc, &planner(wc.p_goal, 4), &sim, 4).unwrap();
    assert_eq!(log.outcome, Outcome::Deadlock);
    assert!(log.min_clearance >= 0.0);
}

#[test]
fn invalid_sim_parameters_are_named() {
    let wc = WorldConfig::new(open_box(), v(0., 0., 2.), v(10., 0., 2.));
    let sim = SimParams {
        dt: 0.0,
        ..Default::default()
    };
    let err = run_episode(&empty(wc.bounds), &wc, &planner(wc.p_goal, 1), &sim, 1).unwrap_err();
    assert!(matches!(&err, SimError::Invalid(m) if m.starts_with("dt")));
}

#[test]
fn sweeping_obstacle_forces_a_branch_switch() {
    // A pillar splits the course into two gaps; the upper gap is shorter, and
    // a slab drifts down into it as the vehicle approaches.
    let bounds = WorldBox::new(v(-2., -6., 0.), v(18., 6., 4.));
    let wc = WorldConfig {
        r_safe: 0.1,
        sigma_z: 0.0,
        ..WorldConfig::new(bounds, v(0., 0., 2.), v(16., 0., 2.))
    };
    let mut world = empty(bounds);
    world.static_obs.push(DynamicObstacle::cylinder(0, v(8., -0.4, 2.), Vec3::zeros(), 1.6, 0.0, 0.0));
    world.static_obs.push(DynamicObstacle::cylinder(1, v(8., 4.6, 2.), Vec3::zeros(), 1.4, 0.0, 0.0));
    world.static_obs.push(DynamicObstacle::cylinder(2, v(8., -5.2, 2.), Vec3::zeros(), 1.4, 0.0, 0.0));
    world.dynamic.push(DynamicObstacle::cylinder(3, v(8., 5.5, 2.), v(0., -0.6, 0.), 0.9, 0.0, 0.0));
    let log = run_episode(&world, &wc, &planner(wc.p_goal, 3), &SimParams::default(), 3).unwrap();
    assert_eq!(log.outcome, Outcome::Success, "{:?}", log.min_clearance);
    let switched = log.ticks.windows(2).any(|w| {
        let (prev, next) = (&w[0], &w[1]);
        match (prev.chosen_id, next.chosen_id) {
            (Some(a), Some(b)) => a != b && prev.branches.iter().any(|s| s.id == b),
            _ => false,
        }
    });
    assert!(switched, "no switch onto a kept branch");
    // The vehicle passes the pillar below it.
    let at_pillar = log.ticks.iter().min_by(|a, b| (a.p.x - 8.).abs().total_cmp(&(b.p.x - 8.).abs())).unwrap();
    assert!(at_pillar.p.y < -0.4, "{:?}", at_pillar.p);
}

#[test]
fn single_empty_run_succeeds_for_every_variant() {
    let wc = WorldConfig::new(open_box(), v(0., 0., 2.), v(8., 0., 2.));
    let cfg = planner(wc.p_goal, 0);
    let sim = SimParams::default();
    let stats = run_monte_carlo(&wc, &cfg, &sim, &Variant::ALL, 1, 0).unwrap();
    assert_eq!(stats.variants.len(), 4);
    assert!(stats.variants.iter().all(|s| s.success_rate == 1.0 && s.n_runs == 1));
    let again = run_monte_carlo(&wc, &cfg, &sim, &Variant::ALL, 1, 0).unwrap();
    assert_eq!(stats.stats_csv(), again.stats_csv());
    assert_eq!(stats.runs_csv(), again.runs_csv());
}

#[test]
fn zero_runs_is_rejected() {
    let wc = WorldConfig::new(open_box(), v(0., 0., 2.), v(8., 0., 2.));
    let err = run_monte_carlo(&wc, &planner(wc.p_goal, 0), &SimParams::default(), &[Variant::Trust], 0, 0);
    assert!(err.is_err());
}

#[test]
fn campaign_is_reproducible_with_obstacles() {
    let wc = WorldConfig {
        n_static: 2,
        n_dynamic: 3,
        ..WorldConfig::new(open_box(), v(0., 0., 2.), v(10., 0., 2.))
    };
    let cfg = planner(wc.p_goal, 0);
    let sim = SimParams {
        t_limit: 20.0,
        ..Default::default()
    };
    let variants = [Variant::Trust, Variant::NoPersistence];
    let a = run_monte_carlo(&wc, &cfg, &sim, &variants, 2, 40).unwrap();
    let b = run_monte_carlo(&wc, &cfg, &sim, &variants, 2, 40).unwrap();
    assert_eq!(a.stats_csv(), b.stats_csv());
    assert_eq!(a.runs_csv(), b.runs_csv());
    assert_eq!(a.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![40, 41, 40, 41]);
}
