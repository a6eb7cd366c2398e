//! Subcommand bodies, kept apart from argument parsing so tests can call
//! them directly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use trust_core::dynenv::{DynamicObstacle, EnvSnapshot};
use trust_core::simharness::{generate_world, run_episode, run_monte_carlo, EpisodeLog, McStats};
use trust_core::topomgr::{plan_cycle, BranchQueue, CycleOutput};

use crate::artifacts::{self, write, EPISODE, TIMING};
use crate::gradcheck::{GradReport, TOLERANCE};
use crate::{CliError, RunConfig};

pub const STATS: &str = "stats.csv";
pub const RUNS: &str = "runs.csv";
pub const TIMING_STATS: &str = "timing_stats.csv";

/// One planning cycle from the configured ego state against the generated
/// world, with every obstacle known exactly.
pub fn plan(cfg: &RunConfig) -> Result<CycleOutput, CliError> {
    let wc = cfg.world_config();
    let world = generate_world(&wc)?;
    let planner = cfg.planner_config();
    let (ego, t) = cfg.ego_state();
    let at_t = |o: &DynamicObstacle| DynamicObstacle { t_obs: t, ..o.clone() };
    let env = EnvSnapshot::new(
        t,
        world.dynamic.iter().map(at_t).collect(),
        world.static_obs.iter().map(at_t).collect(),
        world.bounds,
        wc.r_safe,
        planner.frontend.horizon,
    )
    .map_err(|e| CliError::Sim(e.into()))?;
    let mut queue = BranchQueue::new(planner.capacity);
    Ok(plan_cycle(&mut queue, &ego, t, &env, &planner))
}

pub fn branch_table(out: &CycleOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>10} {:>10} {:>10} {:>12}  main", "id", "J", "H_t", "H_s", "I_e");
    for b in &out.branches {
        let main = if Some(b.id) == out.chosen_id { "*" } else { "" };
        let _ = writeln!(
            s,
            "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>12.4}  {main}",
            b.id, b.j, b.h_t, b.h_s, b.i_e
        );
    }
    if out.degraded {
        s.push_str("no feasible branch: emergency stop\n");
    }
    s
}

/// Runs one episode and writes its artifacts, the stored log and, when
/// asked, the wall-clock timing file.
pub fn sim(cfg: &RunConfig, out_dir: &Path, timing: bool) -> Result<(EpisodeLog, Vec<PathBuf>), CliError> {
    let wc = cfg.world_config();
    let world = generate_world(&wc)?;
    let log = run_episode(&world, &wc, &cfg.planner_config(), &cfg.sim_params(), cfg.seed)?;
    let mut manifest = artifacts::export_artifacts(&log, out_dir)?;
    manifest.push(artifacts::save_log(&log, &out_dir.join(EPISODE))?);
    if timing {
        manifest.push(write(&out_dir.join(TIMING), &artifacts::timing_csv(&log.timings))?);
    }
    Ok((log, manifest))
}

pub fn export(log_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let log = artifacts::load_log(log_path)?;
    artifacts::export_artifacts(&log, out_dir)
}

pub fn mc(
    cfg: &RunConfig,
    runs: usize,
    seed0: u64,
    out_dir: &Path,
    timing: bool,
) -> Result<(McStats, Vec<PathBuf>), CliError> {
    if runs == 0 {
        return Err(CliError::Invalid("runs: must be at least 1".into()));
    }
    let stats = run_monte_carlo(
        &cfg.world_config(),
        &cfg.planner_config(),
        &cfg.sim_params(),
        &cfg.mc.variants,
        runs,
        seed0,
    )?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut manifest = vec![
        write(&out_dir.join(STATS), &stats.stats_csv())?,
        write(&out_dir.join(RUNS), &stats.runs_csv())?,
    ];
    if timing {
        manifest.push(write(&out_dir.join(TIMING_STATS), &stats.timing_csv())?);
    }
    Ok((stats, manifest))
}

/// Fails when any instance exceeds the tolerance.
pub fn gradcheck_verdict(reports: &[GradReport]) -> Result<(), CliError> {
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("seed {} ({:e})", r.seed, r.max_rel_err))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient mismatch above {TOLERANCE:e} in {}",
            bad.join(", ")
        )))
    }
}
