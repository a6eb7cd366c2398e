//! Plot-ready files written from an episode log.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trust_core::fmt::{float17, to_json_line};
use trust_core::simharness::{EpisodeLog, EpisodeMetrics};
use trust_core::topomgr::{BranchSummary, PhaseTimings, Variant};

use crate::CliError;

pub const TRAJECTORY: &str = "trajectory.jsonl";
pub const BRANCHES: &str = "branches.json";
pub const SPEED_PROFILE: &str = "speed_profile.csv";
pub const METRICS: &str = "metrics.json";
pub const TIMING: &str = "timing.csv";
/// Full log, readable by `export`.
pub const EPISODE: &str = "episode.json";

#[derive(Debug, Serialize)]
struct QueueSnapshot<'a> {
    cycle: usize,
    t: f64,
    chosen_id: Option<u64>,
    degraded: bool,
    branches: &'a [BranchSummary],
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    seed: u64,
    variant: Variant,
    final_p: [f64; 3],
    #[serde(flatten)]
    metrics: &'a EpisodeMetrics,
}

/// Log as stored on disk. Wall-clock timings are left out.
#[derive(Debug, Serialize, Deserialize)]
struct StoredLog {
    seed: u64,
    variant: Variant,
    ticks: Vec<trust_core::simharness::TickRecord>,
    outcome: trust_core::simharness::Outcome,
    arrival_time: Option<f64>,
    final_p: [f64; 3],
    #[serde(deserialize_with = "trust_core::fmt::f64_or_inf")]
    min_clearance: f64,
}

pub(crate) fn write(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn json(value: &impl Serialize) -> Result<String, CliError> {
    to_json_line(value).map_err(|e| CliError::Parse(e.to_string()))
}

/// Writes the deterministic artifacts of `log` into `out_dir` and returns
/// the written paths.
pub fn export_artifacts(log: &EpisodeLog, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut manifest = Vec::new();

    let mut lines = String::new();
    for tick in &log.ticks {
        lines.push_str(&json(tick)?);
        lines.push('\n');
    }
    manifest.push(write(&out_dir.join(TRAJECTORY), &lines)?);

    let snapshots: Vec<QueueSnapshot> = log
        .ticks
        .iter()
        .map(|t| QueueSnapshot {
            cycle: t.cycle,
            t: t.t,
            chosen_id: t.chosen_id,
            degraded: t.degraded,
            branches: &t.branches,
        })
        .collect();
    manifest.push(write(&out_dir.join(BRANCHES), &(json(&snapshots)? + "\n"))?);

    let mut csv = String::from("t,speed,accel,clearance\n");
    for t in &log.ticks {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            float17(t.t),
            float17(t.v.norm()),
            float17(t.a.norm()),
            float17(t.clearance)
        ));
    }
    manifest.push(write(&out_dir.join(SPEED_PROFILE), &csv)?);

    let metrics = log.metrics();
    let m = MetricsFile {
        seed: log.seed,
        variant: log.variant,
        final_p: log.final_p.into(),
        metrics: &metrics,
    };
    manifest.push(write(&out_dir.join(METRICS), &(json(&m)? + "\n"))?);
    Ok(manifest)
}

/// Per-cycle wall-clock phase times; these differ between runs.
pub fn timing_csv(timings: &[PhaseTimings]) -> String {
    let mut s = String::from("cycle,march_ms,replan_ms,explore_ms\n");
    for (k, t) in timings.iter().enumerate() {
        s.push_str(&format!(
            "{k},{},{},{}\n",
            float17(t.march_ms),
            float17(t.replan_ms),
            float17(t.explore_ms)
        ));
    }
    s
}

pub fn save_log(log: &EpisodeLog, path: &Path) -> Result<PathBuf, CliError> {
    let stored = StoredLog {
        seed: log.seed,
        variant: log.variant,
        ticks: log.ticks.clone(),
        outcome: log.outcome,
        arrival_time: log.arrival_time,
        final_p: log.final_p.into(),
        min_clearance: log.min_clearance,
    };
    write(path, &(json(&stored)? + "\n"))
}

pub fn load_log(path: &Path) -> Result<EpisodeLog, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let s: StoredLog =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    Ok(EpisodeLog {
        seed: s.seed,
        variant: s.variant,
        ticks: s.ticks,
        timings: Vec::new(),
        outcome: s.outcome,
        arrival_time: s.arrival_time,
        final_p: s.final_p.into(),
        min_clearance: s.min_clearance,
    })
}
