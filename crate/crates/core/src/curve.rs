//! Multiscale curve construction through a net sequence.
//!
//! Generation `k0` joins every pair of vertices, short pairs by edges and long pairs
//! by bridges. Each later generation builds a new part around every vertex `v`:
//! when the nets are not flat near `v` (`alpha >= epsilon`) all pairs in
//! `B(v, 65 C* 2^{-k} r0)` are joined as at generation `k0`; otherwise the vertices
//! near `v` are ordered along `l_{k,v}` and joined to the left and right by short
//! edges, with terminal vertices either left alone or bridged to their neighbour
//! depending on the previous generation. Bridges persist in every later generation.
//!
//! A phantom-length ledger and the cores of terminal bridges are recorded for the
//! length certificate.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    canonical_sign, dist, dist_to_segment, dot, fit_line, lerp, lex_cmp, norm, segment_distance,
    sub, Line, Norm, Point,
};
use crate::nets::{alpha_defect, AlphaAssignment, NetSequence, NEIGHBOURHOOD};

/// Edges are shorter than `EDGE_LIMIT C* 2^{-k} r0`.
pub const EDGE_LIMIT: f64 = 30.0;
/// Bridges after the first generation are shorter than `BRIDGE_LIMIT C* 2^{-k} r0`.
pub const BRIDGE_LIMIT: f64 = 130.0;
/// Default flatness threshold.
pub const DEFAULT_EPSILON: f64 = 1.0 / 32.0;
/// Geometric tolerance for incidence tests.
pub const TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Edge,
    Bridge,
    /// Joins separately drawn curves.
    Connector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "by")]
pub enum Owner {
    /// Generation `k0` pair.
    Initial,
    /// New part around vertex `v` of generation `k`.
    Vertex {
        k: usize,
        v: usize,
    },
    Bridge {
        id: usize,
    },
    Connector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: usize,
    pub b: usize,
    pub kind: SegmentKind,
    pub gen: usize,
    pub owner: Owner,
}

/// Vertices and straight segments between them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveGraph {
    pub vertices: Vec<Point>,
    pub segments: Vec<Segment>,
    #[serde(skip)]
    lookup: HashMap<Vec<u64>, usize>,
}

impl CurveGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Identifier of the vertex at `x`, adding it if no vertex has exactly these coordinates.
    pub fn vertex(&mut self, x: &Point) -> usize {
        if self.lookup.len() != self.vertices.len() {
            self.lookup = self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, p)| (key(p), i))
                .collect();
        }
        let next = self.vertices.len();
        let id = *self.lookup.entry(key(x)).or_insert(next);
        if id == next {
            self.vertices.push(x.clone());
        }
        id
    }

    /// Adds `[a, b]` unless the endpoints coincide; returns the segment index.
    pub fn segment(
        &mut self,
        a: usize,
        b: usize,
        kind: SegmentKind,
        gen: usize,
        owner: Owner,
    ) -> Option<usize> {
        if a == b {
            return None;
        }
        self.segments.push(Segment {
            a,
            b,
            kind,
            gen,
            owner,
        });
        Some(self.segments.len() - 1)
    }

    pub fn segment_length(&self, s: &Segment) -> f64 {
        dist(&self.vertices[s.a], &self.vertices[s.b])
    }

    /// The same vertices with a subset of the segments.
    pub fn restrict(&self, segments: &[usize]) -> CurveGraph {
        CurveGraph {
            vertices: self.vertices.clone(),
            segments: segments.iter().map(|&i| self.segments[i].clone()).collect(),
            lookup: self.lookup.clone(),
        }
    }

    /// Adds the vertices and segments of `other`, returning the vertex id map.
    pub fn absorb(&mut self, other: &CurveGraph) -> Vec<usize> {
        let map: Vec<usize> = other.vertices.iter().map(|p| self.vertex(p)).collect();
        for s in &other.segments {
            let owner = match s.owner {
                Owner::Bridge { .. } => Owner::Bridge { id: usize::MAX },
                o => o,
            };
            self.segment(map[s.a], map[s.b], s.kind, s.gen, owner);
        }
        map
    }

    /// Distance from `x` to the union of segments and vertices used by segments.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for s in &self.segments {
            best = best.min(dist_to_segment(x, &self.vertices[s.a], &self.vertices[s.b]));
        }
        if self.segments.is_empty() {
            for v in &self.vertices {
                best = best.min(dist(v, x));
            }
        }
        best
    }
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter()
        .map(|c| if *c == 0.0 { 0 } else { c.to_bits() })
        .collect()
}

/// Greedy chain `v = v_0, v_1 in V_{k+1}, ...` of nearest next-generation vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    /// `(generation, index)` of each chain vertex, starting with `(k, v)`.
    pub indices: Vec<(usize, usize)>,
    pub points: Vec<Point>,
    pub length: f64,
}

/// The extension `E[k, v]` truncated at the last level.
pub fn extension_chain(nets: &NetSequence, k: usize, v: usize) -> Extension {
    let mut indices = vec![(k, v)];
    let mut points = vec![nets.levels[k][v].clone()];
    let mut length = 0.0;
    for j in k + 1..nets.levels.len() {
        let prev = points.last().expect("chain starts with v");
        let i = nets.nearest(j, prev);
        length += dist(prev, &nets.levels[j][i]);
        indices.push((j, i));
        points.push(nets.levels[j][i].clone());
    }
    Extension {
        indices,
        points,
        length,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeOrigin {
    Initial,
    CaseOne,
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeRecord {
    pub k: usize,
    /// Indices into `V_k` with `a < b`.
    pub a: usize,
    pub b: usize,
    pub origin: BridgeOrigin,
    pub extension_a: Vec<(usize, usize)>,
    pub extension_b: Vec<(usize, usize)>,
    /// The central `9/10` of `[v_a, v_b]`.
    pub core: [Point; 2],
    pub length: f64,
    pub segments: Vec<usize>,
}

impl BridgeRecord {
    /// `I[k, a, b]`.
    pub fn index_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.extension_a.iter().chain(&self.extension_b).copied()
    }

    pub fn core_length(&self) -> f64 {
        dist(&self.core[0], &self.core[1])
    }
}

/// How the new part around a vertex was built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub case_one: usize,
    pub not_terminal: usize,
    pub terminal_kept: usize,
    pub terminal_bridged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageAccount {
    pub k: usize,
    pub edge_length: f64,
    /// Length of the bridges of this generation.
    pub bridge_length: f64,
    pub phantom_length: f64,
    /// Length of the cores of this generation's terminal bridges.
    pub core_length: f64,
    /// `sum_v alpha_{k,v}^2 2^{-k} r0`.
    pub alpha_sum: f64,
    pub cases: CaseCounts,
    pub edges: usize,
    pub bridges: usize,
}

/// Phantom index sets `Phantom(k)` of `(generation, vertex)` pairs, one per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomLedger {
    pub k0: usize,
    pub stages: Vec<BTreeSet<(usize, usize)>>,
    pub c_star: f64,
    pub r0: f64,
}

impl PhantomLedger {
    pub fn stage(&self, k: usize) -> &BTreeSet<(usize, usize)> {
        &self.stages[k - self.k0]
    }

    /// `p_{j,u} = 3 C* 2^{-j} r0`.
    pub fn phantom(&self, j: usize) -> f64 {
        3.0 * self.c_star * self.r0 * 0.5f64.powi(j as i32)
    }

    pub fn total(&self, k: usize) -> f64 {
        self.stage(k).iter().map(|(j, _)| self.phantom(*j)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowViolation {
    pub k: usize,
    pub a: usize,
    pub b: usize,
    pub kind: SegmentKind,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub k0: Option<usize>,
    pub depth: usize,
    pub r0: f64,
    pub c_star: f64,
    pub epsilon: f64,
    pub stages: Vec<StageAccount>,
    pub edge_sum: f64,
    pub bridge_sum: f64,
    pub phantom_sum: f64,
    pub core_sum: f64,
    /// `sum_{k > k0} sum_v alpha_{k,v}^2 2^{-k} r0`.
    pub alpha_sum: f64,
    pub length_naive: f64,
    pub length_dedup: f64,
    /// Bound on the length of the extension tails omitted by truncating at the last level.
    pub tail_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub k: usize,
    pub segments: Vec<usize>,
}

/// Output of [`construct_curve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub nets: NetSequence,
    pub alphas: AlphaAssignment,
    /// Every segment created at any generation.
    pub graph: CurveGraph,
    /// Segments forming each `Gamma_k`.
    pub snapshots: Vec<Snapshot>,
    /// `vertex_ids[k][v]`: graph vertex of `V_k`'s `v`-th point.
    pub vertex_ids: Vec<Vec<usize>>,
    pub bridges: Vec<BridgeRecord>,
    /// Bridges created by terminal vertices; their cores must be disjoint.
    pub core_registry: Vec<usize>,
    pub ledger: PhantomLedger,
    pub window_violations: Vec<WindowViolation>,
    pub accounting: Accounting,
}

impl Construction {
    /// `Gamma_k` as a standalone graph.
    pub fn snapshot(&self, k: usize) -> Option<CurveGraph> {
        self.snapshots
            .iter()
            .find(|s| s.k == k)
            .map(|s| self.graph.restrict(&s.segments))
    }

    /// The last `Gamma_K`.
    pub fn curve(&self) -> CurveGraph {
        match self.snapshots.last() {
            Some(s) => self.graph.restrict(&s.segments),
            None => {
                let mut g = CurveGraph::new();
                for p in self.nets.levels.last().into_iter().flatten() {
                    g.vertex(p);
                }
                g
            }
        }
    }
}

struct Builder<'a> {
    nets: &'a NetSequence,
    alphas: &'a AlphaAssignment,
    graph: CurveGraph,
    ids: Vec<Vec<usize>>,
    next: Vec<Vec<usize>>,
    bridges: Vec<BridgeRecord>,
    bridge_lookup: HashMap<(usize, usize, usize), usize>,
    chain_segments: HashMap<(usize, usize), Option<usize>>,
    bridge_segments: Vec<usize>,
    core_registry: Vec<usize>,
    window_violations: Vec<WindowViolation>,
    k0: usize,
}

impl Builder<'_> {
    fn scale(&self, k: usize) -> f64 {
        self.nets.scale(k)
    }

    fn point(&self, k: usize, v: usize) -> &Point {
        &self.nets.levels[k][v]
    }

    fn chain(&self, k: usize, v: usize) -> Vec<(usize, usize)> {
        let mut out = vec![(k, v)];
        let (mut j, mut u) = (k, v);
        while j + 1 < self.nets.levels.len() {
            u = self.next[j][u];
            j += 1;
            out.push((j, u));
        }
        out
    }

    fn check_window(&mut self, k: usize, a: usize, b: usize, kind: SegmentKind) {
        let d = dist(self.point(k, a), self.point(k, b));
        let unit = self.nets.c_star * self.scale(k);
        let ok = match kind {
            SegmentKind::Edge => d < EDGE_LIMIT * unit,
            _ => d >= EDGE_LIMIT * unit && (k == self.k0 || d < BRIDGE_LIMIT * unit),
        };
        if !ok {
            self.window_violations.push(WindowViolation {
                k,
                a,
                b,
                kind,
                distance: d,
            });
        }
    }

    fn edge(&mut self, k: usize, a: usize, b: usize, owner: Owner) -> Option<usize> {
        self.check_window(k, a, b, SegmentKind::Edge);
        self.graph
            .segment(self.ids[k][a], self.ids[k][b], SegmentKind::Edge, k, owner)
    }

    /// Adds `B[k, a, b]` once; returns its id.
    fn bridge(&mut self, k: usize, a: usize, b: usize, origin: BridgeOrigin) -> usize {
        let (a, b) = (a.min(b), a.max(b));
        if let Some(&id) = self.bridge_lookup.get(&(k, a, b)) {
            if origin == BridgeOrigin::Terminal && !self.core_registry.contains(&id) {
                self.core_registry.push(id);
            }
            return id;
        }
        self.check_window(k, a, b, SegmentKind::Bridge);
        let id = self.bridges.len();
        let mut segments = Vec::new();
        if let Some(s) = self.graph.segment(
            self.ids[k][a],
            self.ids[k][b],
            SegmentKind::Bridge,
            k,
            Owner::Bridge { id },
        ) {
            segments.push(s);
            self.bridge_segments.push(s);
        }
        let ext_a = self.chain(k, a);
        let ext_b = self.chain(k, b);
        let mut length = dist(self.point(k, a), self.point(k, b));
        for ext in [&ext_a, &ext_b] {
            for w in ext.windows(2) {
                let (j, u) = w[0];
                let (j1, u1) = w[1];
                length += dist(self.point(j, u), self.point(j1, u1));
                let seg = match self.chain_segments.get(&(j, u)) {
                    Some(s) => *s,
                    None => {
                        let s = self.graph.segment(
                            self.ids[j][u],
                            self.ids[j1][u1],
                            SegmentKind::Bridge,
                            k,
                            Owner::Bridge { id },
                        );
                        self.chain_segments.insert((j, u), s);
                        if let Some(s) = s {
                            self.bridge_segments.push(s);
                        }
                        s
                    }
                };
                if let Some(s) = seg {
                    segments.push(s);
                }
            }
        }
        let pa = self.point(k, a).clone();
        let pb = self.point(k, b).clone();
        let core = [Point(lerp(&pa, &pb, 0.05)), Point(lerp(&pa, &pb, 0.95))];
        self.bridges.push(BridgeRecord {
            k,
            a,
            b,
            origin,
            extension_a: ext_a,
            extension_b: ext_b,
            core,
            length,
            segments,
        });
        self.bridge_lookup.insert((k, a, b), id);
        if origin == BridgeOrigin::Terminal {
            self.core_registry.push(id);
        }
        id
    }
}

/// Runs the construction through every level of `nets`.
pub fn construct_curve(
    nets: &NetSequence,
    alphas: &AlphaAssignment,
    epsilon: f64,
) -> Result<Construction> {
    if !(epsilon > 0.0 && epsilon <= 1.0 / 32.0) {
        return Err(invalid(
            "epsilon",
            format!("{epsilon} is outside (0, 1/32]"),
        ));
    }
    if alphas.levels.len() != nets.levels.len()
        || (1..nets.levels.len()).any(|k| alphas.levels[k].len() != nets.levels[k].len())
    {
        return Err(invalid("alphas", "shape differs from the nets"));
    }
    let defect = alpha_defect(nets, alphas);
    if defect > 1e-9 {
        return Err(Error::Hypothesis(format!(
            "alphas fall short of the net distances by {defect:e}"
        )));
    }
    let depth = nets.depth();
    let mut graph = CurveGraph::new();
    let ids: Vec<Vec<usize>> = nets
        .levels
        .iter()
        .map(|l| l.iter().map(|p| graph.vertex(p)).collect())
        .collect();
    let next: Vec<Vec<usize>> = (0..nets.levels.len())
        .map(|k| {
            if k + 1 < nets.levels.len() {
                nets.levels[k]
                    .iter()
                    .map(|p| nets.nearest(k + 1, p))
                    .collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let c_star = nets.c_star;
    let r0 = nets.r0;
    let Some(k0) = nets.k0() else {
        let accounting = Accounting {
            k0: None,
            depth,
            r0,
            c_star,
            epsilon,
            stages: Vec::new(),
            edge_sum: 0.0,
            bridge_sum: 0.0,
            phantom_sum: 0.0,
            core_sum: 0.0,
            alpha_sum: 0.0,
            length_naive: 0.0,
            length_dedup: 0.0,
            tail_bound: 0.0,
        };
        return Ok(Construction {
            nets: nets.clone(),
            alphas: alphas.clone(),
            graph,
            snapshots: Vec::new(),
            vertex_ids: ids,
            bridges: Vec::new(),
            core_registry: Vec::new(),
            ledger: PhantomLedger {
                k0: depth,
                stages: Vec::new(),
                c_star,
                r0,
            },
            window_violations: Vec::new(),
            accounting,
        });
    };
    let mut b = Builder {
        nets,
        alphas,
        graph,
        ids,
        next,
        bridges: Vec::new(),
        bridge_lookup: HashMap::new(),
        chain_segments: HashMap::new(),
        bridge_segments: Vec::new(),
        core_registry: Vec::new(),
        window_violations: Vec::new(),
        k0,
    };
    let mut snapshots = Vec::new();
    let mut ledger_stages: Vec<BTreeSet<(usize, usize)>> = Vec::new();
    let mut stages = Vec::new();

    // Generation k0.
    {
        let k = k0;
        let s = b.scale(k);
        let m = nets.levels[k].len();
        let mut edges = Vec::new();
        let mut phantom: BTreeSet<(usize, usize)> = (0..m).map(|v| (k, v)).collect();
        let first_bridge = b.bridges.len();
        for i in 0..m {
            for j in i + 1..m {
                if dist(b.point(k, i), b.point(k, j)) < EDGE_LIMIT * c_star * s {
                    edges.extend(b.edge(k, i, j, Owner::Initial));
                } else {
                    let id = b.bridge(k, i, j, BridgeOrigin::Initial);
                    phantom.extend(b.bridges[id].index_set());
                }
            }
        }
        stages.push(stage_account(
            &b,
            k,
            &edges,
            first_bridge,
            &phantom,
            CaseCounts::default(),
        ));
        let mut segs = edges;
        segs.extend(b.bridge_segments.iter().copied());
        snapshots.push(Snapshot { k, segments: segs });
        ledger_stages.push(phantom);
    }

    for k in k0 + 1..=depth {
        let s = b.scale(k);
        let unit = c_star * s;
        let m = nets.levels[k].len();
        let mut phantom: BTreeSet<(usize, usize)> = ledger_stages
            .last()
            .expect("stage k0 exists")
            .iter()
            .filter(|(j, _)| *j != k - 1 && *j != k)
            .copied()
            .collect();
        let mut edges = Vec::new();
        let mut seen = vec![false; m * m];
        let mut counts = CaseCounts::default();
        let first_bridge = b.bridges.len();
        for v in 0..m {
            let centre = b.point(k, v).clone();
            let near = nets.within(k, &centre, NEIGHBOURHOOD * unit);
            let entry = alphas.get(k, v);
            if entry.alpha >= epsilon {
                counts.case_one += 1;
                for (x, &i) in near.iter().enumerate() {
                    phantom.insert((k, i));
                    for &j in &near[x + 1..] {
                        let (lo, hi) = (i.min(j), i.max(j));
                        if std::mem::replace(&mut seen[lo * m + hi], true) {
                            continue;
                        }
                        if dist(b.point(k, lo), b.point(k, hi)) < EDGE_LIMIT * unit {
                            edges.extend(b.edge(k, lo, hi, Owner::Vertex { k, v }));
                        } else {
                            let id = b.bridge(k, lo, hi, BridgeOrigin::CaseOne);
                            phantom.extend(b.bridges[id].index_set());
                        }
                    }
                }
                continue;
            }
            let line = &entry.line;
            let order = ordered(&nets.levels[k], &near, line);
            let pos = order
                .iter()
                .position(|&i| i == v)
                .expect("v lies in its own neighbourhood");
            for dir in [Direction::Right, Direction::Left] {
                let step = |i: usize| -> Option<usize> {
                    match dir {
                        Direction::Right => (i + 1 < order.len()).then(|| i + 1),
                        Direction::Left => i.checked_sub(1),
                    }
                };
                let mut i = pos;
                let mut t = 0;
                while let Some(nx) = step(i) {
                    let (cur, nxt) = (order[i], order[nx]);
                    let d = dist(b.point(k, cur), b.point(k, nxt));
                    if d < EDGE_LIMIT * unit && dist(&centre, b.point(k, nxt)) < EDGE_LIMIT * unit {
                        let (lo, hi) = (cur.min(nxt), cur.max(nxt));
                        if !std::mem::replace(&mut seen[lo * m + hi], true) {
                            edges.extend(b.edge(k, lo, hi, Owner::Vertex { k, v }));
                        }
                        t += 1;
                        i = nx;
                    } else {
                        break;
                    }
                }
                if t > 0 {
                    counts.not_terminal += 1;
                    continue;
                }
                if terminal_bridges(nets, k, &centre, line, dir) {
                    let Some(nx) = step(pos) else {
                        return Err(Error::Construction(format!(
                            "vertex {v} of generation {k} needs a bridge to its {dir:?} neighbour but has none; forward proximity fails"
                        )));
                    };
                    counts.terminal_bridged += 1;
                    let id = b.bridge(k, v, order[nx], BridgeOrigin::Terminal);
                    phantom.extend(b.bridges[id].index_set());
                } else {
                    counts.terminal_kept += 1;
                    phantom.insert((k, v));
                }
            }
        }
        stages.push(stage_account(&b, k, &edges, first_bridge, &phantom, counts));
        let mut segs = edges;
        segs.extend(b.bridge_segments.iter().copied());
        snapshots.push(Snapshot { k, segments: segs });
        ledger_stages.push(phantom);
    }

    let ledger = PhantomLedger {
        k0,
        stages: ledger_stages,
        c_star,
        r0,
    };
    let last = snapshots.last().expect("at least generation k0");
    let final_graph = b.graph.restrict(&last.segments);
    let (length_naive, length_dedup) = curve_length(&final_graph);
    let last_stage = stages.last().expect("at least generation k0");
    let accounting = Accounting {
        k0: Some(k0),
        depth,
        r0,
        c_star,
        epsilon,
        edge_sum: last_stage.edge_length,
        bridge_sum: b.bridges.iter().map(|r| r.length).sum(),
        phantom_sum: last_stage.phantom_length,
        core_sum: b
            .core_registry
            .iter()
            .map(|&i| b.bridges[i].core_length())
            .sum(),
        alpha_sum: stages.iter().skip(1).map(|s| s.alpha_sum).sum(),
        stages,
        length_naive,
        length_dedup,
        tail_bound: 2.0 * c_star * nets.scale(depth),
    };
    Ok(Construction {
        nets: nets.clone(),
        alphas: alphas.clone(),
        graph: b.graph,
        snapshots,
        vertex_ids: b.ids,
        bridges: b.bridges,
        core_registry: b.core_registry,
        ledger,
        window_violations: b.window_violations,
        accounting,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Right,
    Left,
}

/// Indices sorted by position along `line`, ties broken lexicographically.
fn ordered(points: &[Point], indices: &[usize], line: &Line) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = indices
        .iter()
        .map(|&i| (line.param(&points[i]), i))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| lex_cmp(&points[a.1], &points[b.1]))
    });
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Whether a vertex terminal in direction `dir` is bridged to its neighbour: decided by
/// the previous generation's vertices near it.
fn terminal_bridges(
    nets: &NetSequence,
    k: usize,
    centre: &Point,
    line: &Line,
    dir: Direction,
) -> bool {
    let unit = nets.c_star * nets.scale(k);
    let mut near = nets.within(k - 1, centre, NEIGHBOURHOOD * unit);
    let w = nets.nearest(k - 1, centre);
    if !near.contains(&w) {
        near.push(w);
    }
    let mut order = ordered(&nets.levels[k - 1], &near, line);
    if dir == Direction::Left {
        order.reverse();
    }
    let start = order.iter().position(|&i| i == w).expect("w was inserted");
    let walk = &order[start..];
    let parent_unit = nets.c_star * nets.scale(k - 1);
    let r = walk
        .iter()
        .rposition(|&i| dist(&nets.levels[k - 1][i], centre) < parent_unit)
        .unwrap_or(0);
    if r + 1 >= walk.len() {
        return false;
    }
    let gap = dist(
        &nets.levels[k - 1][walk[r]],
        &nets.levels[k - 1][walk[r + 1]],
    );
    gap < EDGE_LIMIT * parent_unit
}

fn stage_account(
    b: &Builder,
    k: usize,
    edges: &[usize],
    first_bridge: usize,
    phantom: &BTreeSet<(usize, usize)>,
    cases: CaseCounts,
) -> StageAccount {
    let edge_length = edges
        .iter()
        .map(|&e| b.graph.segment_length(&b.graph.segments[e]))
        .sum();
    let new_bridges = &b.bridges[first_bridge..];
    let phantom_length = phantom
        .iter()
        .map(|(j, _)| 3.0 * b.nets.c_star * b.scale(*j))
        .sum();
    let core_length = b
        .core_registry
        .iter()
        .filter(|&&i| b.bridges[i].k == k)
        .map(|&i| b.bridges[i].core_length())
        .sum();
    let alpha_sum = if k >= 1 {
        b.alphas.levels[k]
            .iter()
            .map(|e| e.alpha * e.alpha)
            .sum::<f64>()
            * b.scale(k)
    } else {
        0.0
    };
    StageAccount {
        k,
        edge_length,
        bridge_length: new_bridges.iter().map(|r| r.length).sum(),
        phantom_length,
        core_length,
        alpha_sum,
        cases,
        edges: edges.len(),
        bridges: new_bridges.len(),
    }
}

/// Result of a connectivity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connectivity {
    pub connected: bool,
    pub components: usize,
    /// Pairs of segments whose union joined two components, forming a spanning forest.
    pub spanning: Vec<(usize, usize)>,
    /// When disconnected: the segments in the component of segment 0, and the rest.
    pub bipartition: Option<(Vec<usize>, Vec<usize>)>,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Whether the union of the segments is connected, joining segments through shared
/// vertices and through geometric contact within [`TOLERANCE`].
pub fn verify_connected(graph: &CurveGraph) -> Connectivity {
    let m = graph.segments.len();
    if m == 0 {
        return Connectivity {
            connected: true,
            components: usize::from(!graph.vertices.is_empty()),
            spanning: Vec::new(),
            bipartition: None,
        };
    }
    let mut dsu = Dsu((0..m).collect());
    let mut spanning = Vec::new();
    let mut by_vertex: HashMap<usize, usize> = HashMap::new();
    for (i, s) in graph.segments.iter().enumerate() {
        for v in [s.a, s.b] {
            match by_vertex.get(&v) {
                Some(&j) => {
                    if dsu.union(i, j) {
                        spanning.push((j, i));
                    }
                }
                None => {
                    by_vertex.insert(v, i);
                }
            }
        }
    }
    let roots = |dsu: &mut Dsu| (0..m).filter(|&i| dsu.find(i) == i).count();
    if roots(&mut dsu) > 1 {
        geometric_unions(graph, &mut dsu, &mut spanning);
    }
    let components = roots(&mut dsu);
    let bipartition = (components > 1).then(|| {
        let r0 = dsu.find(0);
        (0..m).partition(|&i| dsu.find(i) == r0)
    });
    Connectivity {
        connected: components == 1,
        components,
        spanning,
        bipartition,
    }
}

fn geometric_unions(graph: &CurveGraph, dsu: &mut Dsu, spanning: &mut Vec<(usize, usize)>) {
    let m = graph.segments.len();
    let n = graph.vertices[0].dim();
    let mut lengths: Vec<f64> = graph
        .segments
        .iter()
        .map(|s| graph.segment_length(s))
        .collect();
    lengths.sort_by(f64::total_cmp);
    let cell = lengths[m / 2].max(1e-9);
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, s) in graph.segments.iter().enumerate() {
        let (a, b) = (&graph.vertices[s.a], &graph.vertices[s.b]);
        let lo: Vec<i64> = (0..n)
            .map(|d| ((a[d].min(b[d]) - TOLERANCE) / cell).floor() as i64)
            .collect();
        let hi: Vec<i64> = (0..n)
            .map(|d| ((a[d].max(b[d]) + TOLERANCE) / cell).floor() as i64)
            .collect();
        let mut c = lo.clone();
        'cells: loop {
            grid.entry(c.clone()).or_default().push(i);
            for d in (0..n).rev() {
                c[d] += 1;
                if c[d] <= hi[d] {
                    continue 'cells;
                }
                c[d] = lo[d];
            }
            break;
        }
    }
    let mut keys: Vec<&Vec<i64>> = grid.keys().collect();
    keys.sort();
    for key in keys {
        let list = &grid[key];
        for (x, &i) in list.iter().enumerate() {
            for &j in &list[x + 1..] {
                if dsu.find(i) == dsu.find(j) {
                    continue;
                }
                let (si, sj) = (&graph.segments[i], &graph.segments[j]);
                let d = segment_distance(
                    &graph.vertices[si.a],
                    &graph.vertices[si.b],
                    &graph.vertices[sj.a],
                    &graph.vertices[sj.b],
                );
                if d <= TOLERANCE && dsu.union(i, j) {
                    spanning.push((i, j));
                }
            }
        }
    }
}

/// Sum of segment lengths, and the length of their union after merging collinear overlaps.
pub fn curve_length(graph: &CurveGraph) -> (f64, f64) {
    let naive: f64 = graph.segments.iter().map(|s| graph.segment_length(s)).sum();
    if graph.segments.is_empty() {
        return (0.0, 0.0);
    }
    let extent = graph
        .vertices
        .iter()
        .flat_map(|p| p.iter().map(|c| c.abs()))
        .fold(1.0, f64::max);
    let dir_q = 1e-9;
    let off_q = 1e-9 * extent;
    let mut lines: HashMap<Vec<i64>, Vec<(f64, f64)>> = HashMap::new();
    for s in &graph.segments {
        let (a, b) = (&graph.vertices[s.a], &graph.vertices[s.b]);
        let mut d = sub(b, a);
        let len = norm(&d);
        d.iter_mut().for_each(|x| *x /= len);
        canonical_sign(&mut d);
        let ta = dot(a, &d);
        let tb = dot(b, &d);
        let foot: Vec<f64> = a.iter().zip(&d).map(|(x, u)| x - ta * u).collect();
        let mut key: Vec<i64> = d.iter().map(|x| (x / dir_q).round() as i64).collect();
        key.extend(foot.iter().map(|x| (x / off_q).round() as i64));
        lines.entry(key).or_default().push((ta.min(tb), ta.max(tb)));
    }
    let mut keys: Vec<&Vec<i64>> = lines.keys().collect();
    keys.sort();
    let mut dedup = 0.0;
    for key in keys {
        let mut iv = lines[key].clone();
        iv.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let (mut lo, mut hi) = iv[0];
        for &(a, b) in &iv[1..] {
            if a > hi {
                dedup += hi - lo;
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        dedup += hi - lo;
    }
    (naive, dedup.min(naive))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "property")]
pub enum LedgerViolation {
    /// A bridge of generation `stage` whose index set is not tracked.
    Bridge {
        stage: usize,
        bridge: usize,
        missing: (usize, usize),
    },
    /// A one-sided vertex of generation `stage` not tracked.
    Terminal { stage: usize, vertex: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreOverlap {
    pub first: usize,
    pub second: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub cores: usize,
    pub core_overlaps: Vec<CoreOverlap>,
    pub ledger_violations: Vec<LedgerViolation>,
    pub window_violations: usize,
    pub length_naive: f64,
    pub length_dedup: f64,
    /// `2^{-k0} r0 + sum alpha^2 2^{-k} r0`.
    pub budget: f64,
    /// `H^1(Gamma_K) / budget`, using the deduplicated length.
    pub c_hat: f64,
    /// Phantom length of every bridge index set, `12 C* 2^{-k} r0` for untruncated extensions.
    pub bridge_phantom_totals: Vec<(usize, f64)>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.core_overlaps.is_empty()
            && self.ledger_violations.is_empty()
            && self.window_violations == 0
    }
}

/// Rechecks core disjointness and both ledger properties at every stage, and computes
/// the empirical length constant.
pub fn certify(c: &Construction) -> Certificate {
    let acc = &c.accounting;
    let mut core_overlaps = Vec::new();
    for (x, &i) in c.core_registry.iter().enumerate() {
        for &j in &c.core_registry[x + 1..] {
            let (p, q) = (&c.bridges[i].core, &c.bridges[j].core);
            let d = segment_distance(&p[0], &p[1], &q[0], &q[1]);
            if d <= TOLERANCE {
                core_overlaps.push(CoreOverlap {
                    first: i,
                    second: j,
                    distance: d,
                });
            }
        }
    }
    let ledger_violations = match acc.k0 {
        Some(k0) => ledger_violations(c, k0),
        None => Vec::new(),
    };
    let budget = acc.k0.map_or(0.0, |k0| c.nets.scale(k0)) + acc.alpha_sum;
    let bridge_phantom_totals = c
        .bridges
        .iter()
        .map(|r| (r.k, r.index_set().map(|(j, _)| c.ledger.phantom(j)).sum()))
        .collect();
    Certificate {
        cores: c.core_registry.len(),
        core_overlaps,
        ledger_violations,
        window_violations: c.window_violations.len(),
        length_naive: acc.length_naive,
        length_dedup: acc.length_dedup,
        budget,
        c_hat: if budget > 0.0 {
            acc.length_dedup / budget
        } else {
            0.0
        },
        bridge_phantom_totals,
    }
}

fn ledger_violations(c: &Construction, k0: usize) -> Vec<LedgerViolation> {
    let mut out = Vec::new();
    let nets = &c.nets;
    for k in k0..=nets.depth() {
        let phantom = c.ledger.stage(k);
        for (id, r) in c.bridges.iter().enumerate().filter(|(_, r)| r.k == k) {
            if let Some(missing) = r.index_set().find(|p| !phantom.contains(p)) {
                out.push(LedgerViolation::Bridge {
                    stage: k,
                    bridge: id,
                    missing,
                });
            }
        }
        if k == k0 {
            continue;
        }
        let s = nets.scale(k);
        let radius = EDGE_LIMIT * nets.c_star * s;
        for w in 0..nets.levels[k].len() {
            if phantom.contains(&(k, w)) {
                continue;
            }
            let centre = &nets.levels[k][w];
            let near = nets.within(k, centre, radius);
            let pts: Vec<Point> = near.iter().map(|&i| nets.levels[k][i].clone()).collect();
            let mut candidates = vec![c.alphas.get(k, w).line.clone()];
            if let Ok(fit) = fit_line(&pts, &vec![1.0; pts.len()], Norm::Sup) {
                candidates.push(fit.line);
            }
            for line in candidates {
                if pts.iter().any(|y| line.dist(y) >= c.accounting.epsilon * s) {
                    continue;
                }
                let t = line.param(centre);
                let left = pts.iter().any(|y| line.param(y) < t);
                let right = pts.iter().any(|y| line.param(y) > t);
                if !(left && right) {
                    out.push(LedgerViolation::Terminal {
                        stage: k,
                        vertex: w,
                    });
                    break;
                }
            }
        }
    }
    out
}

/// As [`certify`], failing on the first violated property.
pub fn length_certificate(c: &Construction) -> Result<Certificate> {
    let cert = certify(c);
    if let Some(v) = cert.ledger_violations.first() {
        return Err(Error::Construction(match v {
            LedgerViolation::Bridge {
                stage,
                bridge,
                missing,
            } => {
                format!("stage {stage}: bridge {bridge} index pair {missing:?} missing from the phantom ledger")
            }
            LedgerViolation::Terminal { stage, vertex } => {
                format!("stage {stage}: one-sided vertex ({stage}, {vertex}) missing from the phantom ledger")
            }
        }));
    }
    if let Some(o) = cert.core_overlaps.first() {
        return Err(Error::Construction(format!(
            "cores of bridges {} and {} intersect",
            o.first, o.second
        )));
    }
    if let Some(w) = c.window_violations.first() {
        return Err(Error::Construction(format!(
            "generation {}: {:?} between {} and {} has length {:e} outside its window",
            w.k, w.kind, w.a, w.b, w.distance
        )));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{fit_alphas, nets_from_points};

    fn pts(list: &[[f64; 2]]) -> Vec<Point> {
        list.iter().map(|p| Point(p.to_vec())).collect()
    }

    #[test]
    fn length_of_duplicates() {
        let mut g = CurveGraph::new();
        let a = g.vertex(&Point(vec![0.0, 0.0]));
        let b = g.vertex(&Point(vec![1.0, 0.0]));
        g.segment(a, b, SegmentKind::Edge, 0, Owner::Initial);
        assert_eq!(curve_length(&g), (1.0, 1.0));
        g.segment(b, a, SegmentKind::Edge, 0, Owner::Initial);
        assert_eq!(curve_length(&g), (2.0, 1.0));
    }

    #[test]
    fn connectivity_cases() {
        let mut g = CurveGraph::new();
        let v: Vec<usize> = pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [3.0, 3.0], [4.0, 3.0]])
            .iter()
            .map(|p| g.vertex(p))
            .collect();
        g.segment(v[0], v[1], SegmentKind::Edge, 0, Owner::Initial);
        g.segment(v[1], v[2], SegmentKind::Edge, 0, Owner::Initial);
        assert!(verify_connected(&g).connected);
        g.segment(v[3], v[4], SegmentKind::Edge, 0, Owner::Initial);
        let c = verify_connected(&g);
        assert!(!c.connected);
        assert_eq!(c.bipartition, Some((vec![0, 1], vec![2])));
        // A crossing segment joins the pieces without sharing a vertex.
        let x = g.vertex(&Point(vec![0.5, -0.5]));
        let y = g.vertex(&Point(vec![3.5, 3.0]));
        g.segment(x, y, SegmentKind::Connector, 0, Owner::Connector);
        let c = verify_connected(&g);
        assert!(c.connected, "{c:?}");
    }

    #[test]
    fn refining_segment_nets() {
        let e: Vec<Point> = (0..=256)
            .map(|i| Point(vec![i as f64 / 256.0, 0.0]))
            .collect();
        let nets = nets_from_points(&e, 1.0, 6).unwrap();
        let alphas = fit_alphas(&nets, None).unwrap();
        let c = construct_curve(&nets, &alphas, DEFAULT_EPSILON).unwrap();
        assert!(c.core_registry.is_empty());
        let (_, dedup) = curve_length(&c.curve());
        assert!(
            (1.0 - 1e-12..=1.0 + 8.0 * 2.0 / 64.0).contains(&dedup),
            "{dedup}"
        );
        let cert = length_certificate(&c).unwrap();
        assert!(cert.passed());
        for k in 0..=6 {
            assert!(verify_connected(&c.snapshot(k).unwrap()).connected);
        }
    }

    #[test]
    fn nested_extensions_are_trivial() {
        let e: Vec<Point> = (0..=16)
            .map(|i| Point(vec![i as f64 / 16.0, 0.0]))
            .collect();
        let nets = nets_from_points(&e, 1.0, 4).unwrap();
        let ext = extension_chain(&nets, 2, 1);
        assert_eq!(ext.length, 0.0);
        assert!(ext.points.iter().all(|p| p == &ext.points[0]));
    }

    #[test]
    fn far_pair_is_bridged() {
        let a = Point(vec![0.0, 0.0]);
        let b = Point(vec![100.0, 0.0]);
        let nets = NetSequence::new(1.0, 2.0, a.clone(), vec![vec![a.clone(), b.clone()]]).unwrap();
        let alphas = AlphaAssignment {
            levels: vec![Vec::new()],
        };
        let c = construct_curve(&nets, &alphas, DEFAULT_EPSILON).unwrap();
        assert_eq!(c.bridges.len(), 1);
        assert_eq!(c.graph.segments[0].kind, SegmentKind::Bridge);
        assert!(construct_curve(&nets, &alphas, 0.5).is_err());
    }

    #[test]
    fn dropped_ledger_pair_fails() {
        let e: Vec<Point> = (0..=64)
            .map(|i| Point(vec![i as f64 / 64.0, 0.0]))
            .collect();
        let nets = nets_from_points(&e, 1.0, 5).unwrap();
        let alphas = fit_alphas(&nets, None).unwrap();
        let mut c = construct_curve(&nets, &alphas, DEFAULT_EPSILON).unwrap();
        let k = 5;
        let stage = k - c.ledger.k0;
        let victim = *c.ledger.stages[stage]
            .iter()
            .find(|(j, _)| *j == k)
            .unwrap();
        c.ledger.stages[stage].remove(&victim);
        assert!(length_certificate(&c).is_err());
    }
}
