//! Visibility roadmap over static obstacles and predictive cones, terminated
//! on a goal guidance sphere, and extraction of spatially distinct guidance
//! paths.
//!
//! Guards are mutually invisible anchors; a connector sees exactly two guards
//! and links them. The goal is represented by a single surface guard: a node
//! sees it when the straight segment to its anchor (the nearest point of the
//! sphere along the ray towards the goal) is free.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynenv::{pdc_surface_samples, EnvSnapshot, WorldBox};
use crate::Vec3;

/// Minimum length gain for a new connector to displace an equivalent one.
pub const CONNECTOR_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DevPrmError {
    #[error("sample {0:?} lies outside the world bounds")]
    OutOfBounds([f64; 3]),
    #[error("sample {0:?} lies inside an obstacle")]
    InsideObstacle([f64; 3]),
}

/// Radius of the goal guidance sphere. Zero collapses it onto the goal.
pub fn ggs_radius(p_s: &Vec3, p_g: &Vec3, horizon: f64, v_max: f64) -> f64 {
    ((p_s - p_g).norm() - horizon * v_max).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Guard,
    Connector,
    StartGuard,
    GgsGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadmapNode {
    pub id: usize,
    pub kind: NodeKind,
    /// For the surface guard this is the sphere center.
    pub pos: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    NewGuard,
    NewConnector,
    Rejected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingBudget {
    /// Wall-clock cap in milliseconds; `None` leaves only the count cap.
    pub t_max_ms: Option<f64>,
    pub n_max: usize,
    pub beam_width: usize,
    pub k_paths: usize,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        Self {
            t_max_ms: Some(20.0),
            n_max: 600,
            beam_width: 12,
            k_paths: 8,
        }
    }
}

impl SamplingBudget {
    /// Count-bounded budget, reproducible across machines.
    pub fn deterministic(n_max: usize) -> Self {
        Self {
            t_max_ms: None,
            n_max,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DevPrmParams {
    /// Prediction horizon `T_h` (s).
    pub horizon: f64,
    pub v_max: f64,
    /// Samples per path in the visibility deformation test.
    pub n_check: usize,
    /// Seed cone boundary samples before random ones.
    pub obstacle_aware: bool,
    pub cone_slices: usize,
    pub cone_ring: usize,
    /// Let cone samples that see no guard become guards themselves.
    pub cone_guards: bool,
    /// Inflation of the sampling box around start and goal sphere (m).
    pub region_margin: f64,
    pub seed: u64,
}

impl DevPrmParams {
    pub fn new(horizon: f64, v_max: f64, seed: u64) -> Self {
        Self {
            horizon,
            v_max,
            n_check: 20,
            obstacle_aware: true,
            cone_slices: 4,
            cone_ring: 8,
            cone_guards: false,
            region_margin: 2.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoPath {
    pub waypoints: Vec<Vec3>,
    pub length: f64,
    pub class_id: usize,
}

impl TopoPath {
    pub fn new(waypoints: Vec<Vec3>) -> Self {
        let length = polyline_length(&waypoints);
        Self {
            waypoints,
            length,
            class_id: 0,
        }
    }

    /// Point at normalized arc length `s` in `[0, 1]`.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let target = s.clamp(0.0, 1.0) * self.length;
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let l = (w[1] - w[0]).norm();
            if acc + l >= target && l > 0.0 {
                return w[0] + (w[1] - w[0]) * ((target - acc) / l);
            }
            acc += l;
        }
        *self.waypoints.last().expect("path has waypoints")
    }
}

fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Spatial homotopy test by uniform visibility deformation.
pub fn uvd_equivalent(a: &TopoPath, b: &TopoPath, env: &EnvSnapshot, n_check: usize) -> bool {
    let n = n_check.max(2);
    (0..n).all(|k| {
        let s = k as f64 / (n - 1) as f64;
        let pa = a.point_at(s);
        let pb = b.point_at(s);
        pa == pb || !env.segment_blocked_static(&pa, &pb)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Roadmap {
    pub nodes: Vec<RoadmapNode>,
    pub edges: Vec<(usize, usize)>,
    pub p_g: Vec3,
    pub r_des: f64,
    /// Connector ids per guard pair `(lower id, higher id)`.
    connectors: BTreeMap<(usize, usize), Vec<usize>>,
    n_check: usize,
}

pub const START_ID: usize = 0;
pub const GGS_ID: usize = 1;

impl Roadmap {
    /// Roadmap holding only the start guard and the surface guard. The two
    /// are linked directly when the start sees the goal sphere.
    pub fn new(p_s: Vec3, p_g: Vec3, r_des: f64, env: &EnvSnapshot, n_check: usize) -> Self {
        let mut rm = Self {
            nodes: vec![
                RoadmapNode {
                    id: START_ID,
                    kind: NodeKind::StartGuard,
                    pos: p_s,
                },
                RoadmapNode {
                    id: GGS_ID,
                    kind: NodeKind::GgsGuard,
                    pos: p_g,
                },
            ],
            edges: Vec::new(),
            p_g,
            r_des,
            connectors: BTreeMap::new(),
            n_check,
        };
        if rm.sees(GGS_ID, &p_s, env) {
            rm.edges.push((START_ID, GGS_ID));
        }
        rm
    }

    pub fn start(&self) -> Vec3 {
        self.nodes[START_ID].pos
    }

    /// Where a straight move from `p` first reaches the goal sphere.
    pub fn anchor(&self, p: &Vec3) -> Vec3 {
        let d = p - self.p_g;
        let dist = d.norm();
        if dist <= self.r_des {
            *p
        } else if dist == 0.0 {
            self.p_g
        } else {
            self.p_g + d * (self.r_des / dist)
        }
    }

    pub fn connector_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Connector).count()
    }

    pub fn guard_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind != NodeKind::Connector)
            .map(|n| n.id)
    }

    /// Whether `p` sees guard `g`.
    fn sees(&self, g: usize, p: &Vec3, env: &EnvSnapshot) -> bool {
        let target = if g == GGS_ID {
            self.anchor(p)
        } else {
            self.nodes[g].pos
        };
        target == *p || !env.segment_blocked_static(p, &target)
    }

    /// Guard-to-guard path through a connector placed at `c`.
    fn connector_path(&self, g1: usize, g2: usize, c: &Vec3) -> TopoPath {
        let end = if g2 == GGS_ID { self.anchor(c) } else { self.nodes[g2].pos };
        TopoPath::new(vec![self.nodes[g1].pos, *c, end])
    }

    fn push_node(&mut self, kind: NodeKind, pos: Vec3) -> usize {
        let id = self.nodes.len();
        self.nodes.push(RoadmapNode { id, kind, pos });
        id
    }

    /// Classifies a free sample against the current guards and inserts it.
    /// Samples inside the goal sphere are rejected: they already count as
    /// arrived.
    pub fn classify_and_insert(&mut self, sample: Vec3, env: &EnvSnapshot) -> Result<InsertOutcome, DevPrmError> {
        self.insert(sample, env, true)
    }

    fn insert(&mut self, sample: Vec3, env: &EnvSnapshot, allow_guard: bool) -> Result<InsertOutcome, DevPrmError> {
        if !env.bounds.contains(&sample) {
            return Err(DevPrmError::OutOfBounds(sample.into()));
        }
        if env.point_blocked_static(&sample) {
            return Err(DevPrmError::InsideObstacle(sample.into()));
        }
        if (sample - self.p_g).norm() < self.r_des {
            return Ok(InsertOutcome::Rejected);
        }
        let mut visible = Vec::with_capacity(3);
        for g in self.guard_ids().collect::<Vec<_>>() {
            if self.sees(g, &sample, env) {
                visible.push(g);
                if visible.len() > 2 {
                    return Ok(InsertOutcome::Rejected);
                }
            }
        }
        match visible.as_slice() {
            [] if allow_guard => {
                self.push_node(NodeKind::Guard, sample);
                Ok(InsertOutcome::NewGuard)
            }
            [g1, g2] => Ok(self.offer_connector(*g1, *g2, sample, env)),
            _ => Ok(InsertOutcome::Rejected),
        }
    }

    fn offer_connector(&mut self, g1: usize, g2: usize, sample: Vec3, env: &EnvSnapshot) -> InsertOutcome {
        let (g1, g2) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let cand = self.connector_path(g1, g2, &sample);
        let existing = self.connectors.get(&(g1, g2)).cloned().unwrap_or_default();
        for c in existing {
            let inc = self.connector_path(g1, g2, &self.nodes[c].pos);
            if uvd_equivalent(&cand, &inc, env, self.n_check) {
                if cand.length < inc.length - CONNECTOR_IMPROVEMENT {
                    self.nodes[c].pos = sample;
                    return InsertOutcome::NewConnector;
                }
                return InsertOutcome::Rejected;
            }
        }
        let id = self.push_node(NodeKind::Connector, sample);
        self.edges.push((g1, id));
        self.edges.push((id, g2));
        self.connectors.entry((g1, g2)).or_default().push(id);
        InsertOutcome::NewConnector
    }

    fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Debug dump: nodes, edges and the given paths.
    pub fn to_json(&self, paths: &[TopoPath]) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.nodes,
            "edges": self.edges.iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
            "paths": paths.iter().map(|p| &p.waypoints).collect::<Vec<_>>(),
            "p_g": self.p_g,
            "r_des": self.r_des,
        })
    }
}

/// Axis-aligned box around the start and the goal sphere, inflated by
/// `margin` and clipped to the world.
pub fn sampling_region(p_s: &Vec3, p_g: &Vec3, r_des: f64, margin: f64, bounds: &WorldBox) -> WorldBox {
    let r = Vec3::repeat(r_des);
    let lo = p_s.inf(&(p_g - r)) - Vec3::repeat(margin);
    let hi = p_s.sup(&(p_g + r)) + Vec3::repeat(margin);
    WorldBox::new(lo, hi).intersect(bounds)
}

/// Builds the roadmap: cone boundary samples first, then uniform samples
/// until either cap of the budget is reached.
pub fn build_roadmap(
    p_s: &Vec3,
    p_g: &Vec3,
    env: &EnvSnapshot,
    budget: &SamplingBudget,
    params: &DevPrmParams,
) -> Roadmap {
    let clock = Instant::now();
    let out_of_time = |clock: &Instant| {
        budget
            .t_max_ms
            .is_some_and(|cap| clock.elapsed().as_secs_f64() * 1e3 >= cap)
    };
    let r_des = ggs_radius(p_s, p_g, params.horizon, params.v_max);
    let mut rm = Roadmap::new(*p_s, *p_g, r_des, env, params.n_check);
    let region = sampling_region(p_s, p_g, r_des, params.region_margin, &env.bounds);

    if params.obstacle_aware {
        insert_cone_samples(&mut rm, env, &region, params, &clock, budget);
    }

    let ext = region.extent();
    if ext.iter().any(|e| *e < 0.0) {
        return rm;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..budget.n_max {
        if out_of_time(&clock) {
            break;
        }
        let p = Vec3::new(
            region.min.x + rng.gen::<f64>() * ext.x,
            region.min.y + rng.gen::<f64>() * ext.y,
            region.min.z + rng.gen::<f64>() * ext.z,
        );
        let _ = rm.classify_and_insert(p, env);
    }
    rm
}

/// Cone boundary samples go in before any random sample.
fn insert_cone_samples(
    rm: &mut Roadmap,
    env: &EnvSnapshot,
    region: &WorldBox,
    params: &DevPrmParams,
    clock: &Instant,
    budget: &SamplingBudget,
) {
    for cone in &env.pdcs {
        for p in pdc_surface_samples(cone, params.cone_slices, params.cone_ring) {
            if budget.t_max_ms.is_some_and(|cap| clock.elapsed().as_secs_f64() * 1e3 >= cap) {
                return;
            }
            if region.contains(&p) {
                // Samples swallowed by another obstacle are skipped.
                let _ = rm.insert(p, env, params.cone_guards);
            }
        }
    }
}

/// Breadth-first search from the start guard keeping at most `beam_width`
/// partial paths per depth, ranked by length plus remaining distance to the
/// goal sphere. Returns up to `k` loop-free paths sorted by length.
pub fn beam_search_paths(rm: &Roadmap, beam_width: usize, k: usize) -> Vec<TopoPath> {
    let adj = rm.neighbors();
    let dist_to_ggs = |p: &Vec3| ((p - rm.p_g).norm() - rm.r_des).max(0.0);
    let mut beam: Vec<(Vec<usize>, f64)> = vec![(vec![START_ID], 0.0)];
    let mut done: Vec<TopoPath> = Vec::new();
    while !beam.is_empty() && beam_width > 0 {
        let mut next: Vec<(Vec<usize>, f64, f64)> = Vec::new();
        for (seq, len) in &beam {
            let last = *seq.last().expect("non-empty");
            let lp = rm.nodes[last].pos;
            for &nb in &adj[last] {
                if seq.contains(&nb) {
                    continue;
                }
                if nb == GGS_ID {
                    let mut wps: Vec<Vec3> = seq.iter().map(|&i| rm.nodes[i].pos).collect();
                    wps.push(rm.anchor(&lp));
                    done.push(TopoPath::new(wps));
                    continue;
                }
                let np = rm.nodes[nb].pos;
                let l = len + (np - lp).norm();
                let mut s = seq.clone();
                s.push(nb);
                next.push((s, l, l + dist_to_ggs(&np)));
            }
        }
        next.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
        next.truncate(beam_width);
        beam = next.into_iter().map(|(s, l, _)| (s, l)).collect();
    }
    done.sort_by(|a, b| a.length.total_cmp(&b.length));
    done.truncate(k);
    done
}

/// Keeps the shortest path of every visibility-deformation class and tags
/// the survivors with consecutive class ids.
pub fn select_distinct(paths: Vec<TopoPath>, env: &EnvSnapshot, n_check: usize, k: usize) -> Vec<TopoPath> {
    let mut kept: Vec<TopoPath> = Vec::new();
    for p in paths {
        if kept.len() >= k {
            break;
        }
        if kept.iter().all(|q| !uvd_equivalent(&p, q, env, n_check)) {
            kept.push(TopoPath {
                class_id: kept.len(),
                ..p
            });
        }
    }
    kept
}

/// Drops cones that swallow the start or the goal; from inside such a cone
/// nothing would be visible.
fn frontend_view(env: &EnvSnapshot, p_s: &Vec3, p_g: &Vec3) -> Option<EnvSnapshot> {
    if env.pdcs.iter().all(|c| !c.contains(p_s) && !c.contains(p_g)) {
        return None;
    }
    let mut view = env.clone();
    view.pdcs.retain(|c| !c.contains(p_s) && !c.contains(p_g));
    Some(view)
}

/// Full frontend: roadmap, beam search and homotopy filtering. Returns the
/// roadmap (for debugging) and at most `k_paths` distinct paths.
pub fn plan_topo_paths_with_roadmap(
    p_s: &Vec3,
    p_g: &Vec3,
    env: &EnvSnapshot,
    budget: &SamplingBudget,
    params: &DevPrmParams,
) -> (Roadmap, Vec<TopoPath>) {
    let view = frontend_view(env, p_s, p_g);
    let env = view.as_ref().unwrap_or(env);
    let rm = build_roadmap(p_s, p_g, env, budget, params);
    if budget.k_paths == 0 {
        return (rm, Vec::new());
    }
    let raw = beam_search_paths(&rm, budget.beam_width, usize::MAX);
    let paths = select_distinct(raw, env, params.n_check, budget.k_paths);
    (rm, paths)
}

pub fn plan_topo_paths(
    p_s: &Vec3,
    p_g: &Vec3,
    env: &EnvSnapshot,
    budget: &SamplingBudget,
    params: &DevPrmParams,
) -> Vec<TopoPath> {
    plan_topo_paths_with_roadmap(p_s, p_g, env, budget, params).1
}
