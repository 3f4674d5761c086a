//! Net sequences `V_k`: multiscale separated point sets with forward and backward
//! proximity, and the lines and flatness numbers attached to each net point.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeTree, DyadicCube};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{dist, fit_line, lex_cmp, Line, Norm, Point};
use crate::measure::{DiscreteMeasure, Region};

/// Radius factor of the neighbourhood in which lines must fit the nets.
pub const NEIGHBOURHOOD: f64 = 65.0;

/// A finite sequence of nets `V_0, ..., V_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSequence {
    pub r0: f64,
    pub c_star: f64,
    /// Center of the containing ball `B(x0, C* r0)`.
    pub x0: Point,
    /// `levels[k]` is `V_k`.
    pub levels: Vec<Vec<Point>>,
    /// For nets built from a tree: the cube `Q_{k,v}` whose triple has center of mass `v`.
    pub witnesses: Option<Vec<Vec<DyadicCube>>>,
}

impl NetSequence {
    pub fn new(r0: f64, c_star: f64, x0: Point, levels: Vec<Vec<Point>>) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(invalid("r0", format!("{r0} must be positive")));
        }
        if !(c_star.is_finite() && c_star > 1.0) {
            return Err(invalid("c_star", format!("{c_star} must exceed 1")));
        }
        if levels.is_empty() || levels.iter().any(|l| l.is_empty()) {
            return Err(Error::Empty("every net level needs a point"));
        }
        for p in levels.iter().flatten() {
            check_dim(x0.dim(), p.dim())?;
        }
        Ok(NetSequence {
            r0,
            c_star,
            x0,
            levels,
            witnesses: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    /// Index `K` of the last level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[Point] {
        &self.levels[k]
    }

    /// `2^{-k} r0`.
    pub fn scale(&self, k: usize) -> f64 {
        self.r0 * 0.5f64.powi(k as i32)
    }

    /// Least `k0` with `#V_k >= 2` for every `k0 <= k <= K`; `None` if `#V_K = 1`.
    pub fn k0(&self) -> Option<usize> {
        let mut k0 = None;
        for k in (0..self.levels.len()).rev() {
            if self.levels[k].len() >= 2 {
                k0 = Some(k);
            } else {
                break;
            }
        }
        k0
    }

    /// Indices of `V_k` within open distance `radius` of `x`, in level order.
    pub fn within(&self, k: usize, x: &[f64], radius: f64) -> Vec<usize> {
        self.levels[k]
            .iter()
            .enumerate()
            .filter(|(_, p)| dist(p, x) < radius)
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of a point of `V_k` closest to `x`, ties broken lexicographically.
    pub fn nearest(&self, k: usize, x: &[f64]) -> usize {
        nearest_in(&self.levels[k], x)
    }

    /// Infimum of the constants `C*` for which the proximity and containment conditions hold.
    pub fn smallest_c_star(&self) -> f64 {
        let mut c: f64 = 0.0;
        for k in 0..self.levels.len() {
            let s = self.scale(k);
            for v in &self.levels[k] {
                c = c.max(dist(v, &self.x0) / self.r0);
                if k + 1 < self.levels.len() {
                    let j = self.nearest(k + 1, v);
                    c = c.max(dist(v, &self.levels[k + 1][j]) / s);
                }
                if k >= 1 {
                    let j = self.nearest(k - 1, v);
                    c = c.max(dist(v, &self.levels[k - 1][j]) / s);
                }
            }
        }
        c
    }
}

pub(crate) fn nearest_in(points: &[Point], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist(p, x);
        if d < best_d || (d == best_d && lex_cmp(p, &points[best]).is_lt()) {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Greedy maximal `sep`-separated subset in the given order; returns positions into `candidates`.
fn greedy_net(candidates: &[&[f64]], sep: f64) -> Vec<usize> {
    use std::collections::HashMap;
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut chosen = Vec::new();
    let cell = |x: &[f64]| -> Vec<i64> { x.iter().map(|c| (c / sep).floor() as i64).collect() };
    for (i, x) in candidates.iter().enumerate() {
        let key = cell(x);
        let n = key.len();
        let mut ok = true;
        let mut offset = vec![-1i64; n];
        'scan: loop {
            let probe: Vec<i64> = key.iter().zip(&offset).map(|(a, b)| a + b).collect();
            if let Some(list) = grid.get(&probe) {
                if list.iter().any(|&j| dist(candidates[j], x) < sep) {
                    ok = false;
                    break 'scan;
                }
            }
            for d in (0..n).rev() {
                offset[d] += 1;
                if offset[d] <= 1 {
                    continue 'scan;
                }
                offset[d] = -1;
            }
            break;
        }
        if ok {
            grid.entry(key).or_default().push(i);
            chosen.push(i);
        }
    }
    chosen
}

/// Nets `V_0..V_K` of a point set by greedy maximal `2^{-k} r0` separation in input order.
///
/// The sequence is tagged with `C* = 2` and centered at the first point.
pub fn nets_from_points(e: &[Point], r0: f64, k_max: usize) -> Result<NetSequence> {
    let first = e.first().ok_or(Error::Empty("point set"))?;
    for p in e {
        check_dim(first.dim(), p.dim())?;
    }
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(invalid("r0", format!("{r0} must be positive")));
    }
    let refs: Vec<&[f64]> = e.iter().map(|p| p.coords()).collect();
    let levels = (0..=k_max)
        .map(|k| {
            let sep = r0 * 0.5f64.powi(k as i32);
            greedy_net(&refs, sep)
                .into_iter()
                .map(|i| e[i].clone())
                .collect()
        })
        .collect();
    NetSequence::new(r0, 2.0, first.clone(), levels)
}

/// Nets built from centers of mass `z_{3Q}` of the cubes of a tree, level `k` being the
/// cubes `k` generations below the top. The sequence uses `C* = 4` and is centered at
/// the center of the top cube.
pub fn nets_from_tree(mu: &DiscreteMeasure, tree: &CubeTree, r0: f64) -> Result<NetSequence> {
    let top = tree.top();
    check_dim(mu.dim(), top.dim())?;
    let mut levels = Vec::new();
    let mut witnesses = Vec::new();
    for (k, cubes) in tree.by_scale() {
        let rel = (k - top.k) as usize;
        let mut z = Vec::with_capacity(cubes.len());
        for q in &cubes {
            let region = Region::Box(q.triple());
            if mu.mass(&region)? <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "cube {:?} at scale {} has a triple of zero mass",
                    q.idx, q.k
                )));
            }
            z.push(mu.center_of_mass(&region)?);
        }
        let refs: Vec<&[f64]> = z.iter().map(|p| p.coords()).collect();
        let chosen = greedy_net(&refs, r0 * 0.5f64.powi(rel as i32));
        levels.push(chosen.iter().map(|&i| z[i].clone()).collect::<Vec<_>>());
        witnesses.push(chosen.iter().map(|&i| cubes[i].clone()).collect::<Vec<_>>());
    }
    let mut nets = NetSequence::new(r0, 4.0, top.center(), levels)?;
    nets.witnesses = Some(witnesses);
    Ok(nets)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetCondition {
    /// Distinct points of one level at least `2^{-k} r0` apart.
    Separation,
    /// Some point of the next level closer than `C* 2^{-k} r0`.
    Forward,
    /// Some point of the previous level closer than `C* 2^{-k} r0`.
    Backward,
    /// Every point inside `B(x0, C* r0)`.
    Containment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetViolation {
    pub condition: NetCondition,
    pub level: usize,
    pub point: usize,
    /// The other point of the pair: same level for separation, the nearest point of the
    /// adjacent level for proximity, absent for containment.
    pub other: Option<usize>,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetValidation {
    pub c_star: f64,
    pub violations: Vec<NetViolation>,
    pub smallest_c_star: f64,
}

impl NetValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks separation, forward and backward proximity and containment for a given `C*`.
pub fn validate_nets(nets: &NetSequence, c_star: f64) -> NetValidation {
    let mut violations = Vec::new();
    for (k, level) in nets.levels.iter().enumerate() {
        let s = nets.scale(k);
        for (i, v) in level.iter().enumerate() {
            for (j, w) in level.iter().enumerate().skip(i + 1) {
                let d = dist(v, w);
                if d < s {
                    violations.push(NetViolation {
                        condition: NetCondition::Separation,
                        level: k,
                        point: i,
                        other: Some(j),
                        distance: d,
                        bound: s,
                    });
                }
            }
            let d0 = dist(v, &nets.x0);
            if d0 >= c_star * nets.r0 {
                violations.push(NetViolation {
                    condition: NetCondition::Containment,
                    level: k,
                    point: i,
                    other: None,
                    distance: d0,
                    bound: c_star * nets.r0,
                });
            }
            let mut proximity = |condition, adjacent: usize| {
                let j = nets.nearest(adjacent, v);
                let d = dist(v, &nets.levels[adjacent][j]);
                if d >= c_star * s {
                    violations.push(NetViolation {
                        condition,
                        level: k,
                        point: i,
                        other: Some(j),
                        distance: d,
                        bound: c_star * s,
                    });
                }
            };
            if k + 1 < nets.levels.len() {
                proximity(NetCondition::Forward, k + 1);
            }
            if k >= 1 {
                proximity(NetCondition::Backward, k - 1);
            }
        }
    }
    NetValidation {
        c_star,
        violations,
        smallest_c_star: nets.smallest_c_star(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub line: Line,
    pub alpha: f64,
}

/// Lines `l_{k,v}` and numbers `alpha_{k,v}` for `k >= 1`; `levels[0]` is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaAssignment {
    pub levels: Vec<Vec<AlphaEntry>>,
}

impl AlphaAssignment {
    pub fn get(&self, k: usize, v: usize) -> &AlphaEntry {
        &self.levels[k][v]
    }

    /// `sum_{k >= from} sum_v alpha_{k,v}^2 2^{-k} r0`.
    pub fn square_sum(&self, nets: &NetSequence, from: usize) -> f64 {
        self.levels
            .iter()
            .enumerate()
            .skip(from.max(1))
            .map(|(k, l)| l.iter().map(|e| e.alpha * e.alpha).sum::<f64>() * nets.scale(k))
            .sum()
    }
}

/// Points of `V_{k-1}` and `V_k` in `B(v, 65 C* 2^{-k} r0)`.
pub fn alpha_neighbourhood(nets: &NetSequence, k: usize, v: usize) -> Vec<&Point> {
    let (prev, cur) = neighbourhood_indices(nets, k, v);
    prev.into_iter()
        .map(|i| &nets.levels[k - 1][i])
        .chain(cur.into_iter().map(|i| &nets.levels[k][i]))
        .collect()
}

fn neighbourhood_indices(nets: &NetSequence, k: usize, v: usize) -> (Vec<usize>, Vec<usize>) {
    let centre = &nets.levels[k][v];
    let r = NEIGHBOURHOOD * nets.c_star * nets.scale(k);
    (nets.within(k - 1, centre, r), nets.within(k, centre, r))
}

fn alpha_for(nets: &NetSequence, k: usize, v: usize, line: &Line) -> f64 {
    alpha_neighbourhood(nets, k, v)
        .iter()
        .map(|x| line.dist(x))
        .fold(0.0, f64::max)
        / nets.scale(k)
}

/// Alphas for supplied lines, or for sup-norm best-fit lines of each neighbourhood.
pub fn fit_alphas(nets: &NetSequence, lines: Option<&[Vec<Line>]>) -> Result<AlphaAssignment> {
    if let Some(ls) = lines {
        if ls.len() != nets.levels.len()
            || (1..ls.len()).any(|k| ls[k].len() != nets.levels[k].len())
        {
            return Err(invalid("lines", "shape differs from the nets"));
        }
    }
    let jobs: Vec<(usize, usize)> = (1..nets.levels.len())
        .flat_map(|k| (0..nets.levels[k].len()).map(move |v| (k, v)))
        .collect();
    let lines: Vec<Line> = match lines {
        Some(ls) => jobs.iter().map(|&(k, v)| ls[k][v].clone()).collect(),
        None => {
            // Coarse levels give many net points the same neighbourhood; fit each distinct one once.
            let keys: Vec<(usize, Vec<usize>, Vec<usize>)> = jobs
                .par_iter()
                .map(|&(k, v)| {
                    let (prev, cur) = neighbourhood_indices(nets, k, v);
                    (k, prev, cur)
                })
                .collect();
            let mut slot: BTreeMap<&(usize, Vec<usize>, Vec<usize>), usize> = BTreeMap::new();
            let mut distinct = Vec::new();
            let assignment: Vec<usize> = keys
                .iter()
                .map(|key| {
                    *slot.entry(key).or_insert_with(|| {
                        distinct.push(key);
                        distinct.len() - 1
                    })
                })
                .collect();
            let fitted = distinct
                .par_iter()
                .map(|(k, prev, cur)| {
                    let pts: Vec<Point> = prev
                        .iter()
                        .map(|&i| nets.levels[k - 1][i].clone())
                        .chain(cur.iter().map(|&i| nets.levels[*k][i].clone()))
                        .collect();
                    assert!(!pts.is_empty(), "a net point lies in its own neighbourhood");
                    Ok(fit_line(&pts, &vec![1.0; pts.len()], Norm::Sup)?.line)
                })
                .collect::<Result<Vec<Line>>>()?;
            assignment.into_iter().map(|i| fitted[i].clone()).collect()
        }
    };
    let entries: Vec<AlphaEntry> = jobs
        .par_iter()
        .zip(lines)
        .map(|(&(k, v), line)| {
            let alpha = alpha_for(nets, k, v, &line);
            AlphaEntry { line, alpha }
        })
        .collect();
    let mut levels: Vec<Vec<AlphaEntry>> = vec![Vec::new(); nets.levels.len()];
    for ((k, _), e) in jobs.into_iter().zip(entries) {
        levels[k].push(e);
    }
    Ok(AlphaAssignment { levels })
}

/// Largest relative excess of the fitting condition over all `(k, v)`; at most 0 when it holds.
pub fn alpha_defect(nets: &NetSequence, alphas: &AlphaAssignment) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 1..nets.levels.len() {
        for v in 0..nets.levels[k].len() {
            let e = alphas.get(k, v);
            let need = alpha_for(nets, k, v, &e.line);
            worst = worst.max(need - e.alpha);
        }
    }
    worst.max(0.0)
}

/// The final level and the bound `2 C* 2^{-K} r0` on its Hausdorff distance to the limit set.
pub fn net_limit(nets: &NetSequence) -> (Vec<Point>, f64) {
    let k = nets.depth();
    (nets.levels[k].clone(), 2.0 * nets.c_star * nets.scale(k))
}
