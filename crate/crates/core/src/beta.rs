//! Beta numbers: fixed-line, best-line, sup-norm set variants and the
//! multi-cube variants `beta*`, `beta**` and `beta^{*,c}`.
//!
//! The multi-cube variants are minimax problems
//! `inf_l max_{R in Delta*(Q)} s_R beta_p(mu, 3R, l)` over all lines. They are
//! solved by an active-set method: candidate lines from per-cube principal axes,
//! followed by a global angle scan with exact convex offset search in the plane
//! (simplex search in higher dimension) restricted to the currently binding
//! cubes, enlarged until no cube outside the set exceeds the restricted optimum.
//! Reported values are always the exact objective at the returned line and hence
//! upper bounds for the infimum.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, NearbyCubes};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::fit::{fit_refs, plane_line, pow_p, refine_line};
use crate::geometry::{Line, Norm, Point};
use crate::measure::{DiscreteMeasure, Region};
use crate::optim::golden_section;

/// Mass weighting of the multi-cube variants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant", content = "c")]
pub enum MultiVariant {
    /// Scores `beta_p(mu,3R,l)^2 min(mu(3R)/diam 3R, 1)`.
    Star,
    /// Scores `beta_p(mu,3R,l)` with no mass weighting.
    StarStar,
    /// Only cubes with `mu(3R) >= c diam 3R`, scored by `beta_p(mu,3R,l)^2 min(c,1)`.
    StarC(f64),
}

impl MultiVariant {
    fn validate(self) -> Result<()> {
        match self {
            MultiVariant::StarC(c) if !(c.is_finite() && c > 0.0) => {
                Err(invalid("c", format!("{c} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn code(self) -> (u8, u64) {
        match self {
            MultiVariant::Star => (0, 0),
            MultiVariant::StarStar => (1, 0),
            MultiVariant::StarC(c) => (2, c.to_bits()),
        }
    }
}

/// Which beta number a [`BetaValue`] reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaKind {
    Best,
    SupSet,
    Multi(MultiVariant),
}

/// A beta number with the line attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaValue {
    pub value: f64,
    /// `None` when the value is 0 by convention (null region or empty family).
    pub line: Option<Line>,
    pub kind: BetaKind,
    /// Exponent; `None` for the sup-norm set variant.
    pub p: Option<f64>,
    /// Cube the value belongs to, if any.
    pub cube: Option<DyadicCube>,
    /// `true` when the fitting algorithm is exact rather than an upper bound.
    pub exact: bool,
    /// Number of cubes entering the maximum (1 for single-region variants).
    pub contributing: usize,
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(invalid("p", format!("{p} is not a finite exponent >= 1")))
    }
}

fn positive_diam(region: &Region) -> Result<f64> {
    let d = region.diam();
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(Error::Degenerate(format!("region diameter {d}")))
    }
}

/// `beta_p(mu, E, l) = (mu(E)^{-1} sum_{x in E} w (dist(x,l)/diam E)^p)^{1/p}`, 0 when `mu(E) = 0`.
pub fn beta_fixed_line(mu: &DiscreteMeasure, region: &Region, line: &Line, p: f64) -> Result<f64> {
    check_p(p)?;
    check_dim(mu.dim(), line.dim())?;
    let diam = positive_diam(region)?;
    let idx = mu.atoms_in(region)?;
    Ok(fixed_line_on(mu, &idx, line, p, diam))
}

fn fixed_line_on(mu: &DiscreteMeasure, idx: &[usize], line: &Line, p: f64, diam: f64) -> f64 {
    let mut mass = 0.0;
    let mut acc = 0.0;
    for &i in idx {
        let w = mu.weights()[i];
        mass += w;
        acc += w * pow_p(line.dist(&mu.points()[i]) / diam, p);
    }
    if mass == 0.0 {
        0.0
    } else {
        (acc / mass).powf(1.0 / p)
    }
}

/// `beta_p(mu, E) = inf_l beta_p(mu, E, l)`.
pub fn beta_best(mu: &DiscreteMeasure, region: &Region, p: f64) -> Result<BetaValue> {
    check_p(p)?;
    let diam = positive_diam(region)?;
    let idx = mu.atoms_in(region)?;
    let cube = match region {
        Region::Cube(q) => Some(q.clone()),
        _ => None,
    };
    best_on(mu, &idx, p, diam, cube)
}

fn best_on(
    mu: &DiscreteMeasure,
    idx: &[usize],
    p: f64,
    diam: f64,
    cube: Option<DyadicCube>,
) -> Result<BetaValue> {
    if idx.is_empty() {
        return Ok(BetaValue {
            value: 0.0,
            line: None,
            kind: BetaKind::Best,
            p: Some(p),
            cube,
            exact: true,
            contributing: 0,
        });
    }
    let refs: Vec<&[f64]> = idx.iter().map(|&i| mu.points()[i].coords()).collect();
    let w: Vec<f64> = idx.iter().map(|&i| mu.weights()[i]).collect();
    let fit = fit_refs(&refs, &w, Norm::P(p), &[])?;
    let value = fixed_line_on(mu, idx, &fit.line, p, diam);
    Ok(BetaValue {
        value,
        line: Some(fit.line),
        kind: BetaKind::Best,
        p: Some(p),
        cube,
        exact: p == 2.0 || value == 0.0,
        contributing: 1,
    })
}

/// `beta_E(Q) = inf_l max_{x in E cap Q} dist(x,l) / diam Q`, 0 when `E cap Q` is empty.
pub fn beta_sup_set(points: &[Point], region: &Region) -> Result<BetaValue> {
    let diam = positive_diam(region)?;
    let mut inside: Vec<&[f64]> = Vec::new();
    for p in points {
        check_dim(region.dim(), p.dim())?;
        if region.contains(p) {
            inside.push(p.coords());
        }
    }
    let cube = match region {
        Region::Cube(q) => Some(q.clone()),
        _ => None,
    };
    if inside.is_empty() {
        return Ok(BetaValue {
            value: 0.0,
            line: None,
            kind: BetaKind::SupSet,
            p: None,
            cube,
            exact: true,
            contributing: 0,
        });
    }
    let ones = vec![1.0; inside.len()];
    let fit = fit_refs(&inside, &ones, Norm::Sup, &[])?;
    let value = inside.iter().map(|x| fit.line.dist(x)).fold(0.0, f64::max) / diam;
    Ok(BetaValue {
        value,
        line: Some(fit.line),
        kind: BetaKind::SupSet,
        p: None,
        cube,
        exact: region.dim() == 2 || value == 0.0,
        contributing: 1,
    })
}

/// One of `beta*`, `beta**`, `beta^{*,c}` for a single cube.
///
/// For many cubes over the same measure use a shared [`BetaEngine`].
pub fn beta_multi(
    mu: &DiscreteMeasure,
    q: &DyadicCube,
    p: f64,
    variant: MultiVariant,
) -> Result<BetaValue> {
    BetaEngine::new(mu).multi(q, p, variant)
}

/// Atoms whose closed triple-cube neighbourhood meets a given cube, with centered moments.
#[derive(Debug)]
pub(crate) struct Group {
    pub cube: DyadicCube,
    pub atoms: Vec<usize>,
    pub mass: f64,
    pub centroid: Vec<f64>,
    /// Row-major `sum w (x - g)(x - g)^T`.
    pub scatter: Vec<f64>,
}

impl Group {
    fn build(mu: &DiscreteMeasure, cube: DyadicCube, atoms: Vec<usize>) -> Self {
        let n = mu.dim();
        let mut mass = 0.0;
        let mut centroid = vec![0.0; n];
        for &i in &atoms {
            let w = mu.weights()[i];
            mass += w;
            for (c, x) in centroid.iter_mut().zip(mu.points()[i].iter()) {
                *c += w * x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= mass);
        let mut scatter = vec![0.0; n * n];
        for &i in &atoms {
            let w = mu.weights()[i];
            let x = &mu.points()[i];
            for a in 0..n {
                let da = x[a] - centroid[a];
                for b in 0..n {
                    scatter[a * n + b] += w * da * (x[b] - centroid[b]);
                }
            }
        }
        Group {
            cube,
            atoms,
            mass,
            centroid,
            scatter,
        }
    }

    fn quad(&self, u: &[f64]) -> f64 {
        let n = u.len();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += u[a] * self.scatter[a * n + b] * u[b];
            }
        }
        s
    }

    /// Mean squared distance to the line from the moments.
    fn msd(&self, line: &Line) -> f64 {
        let n = line.dim();
        let trace: f64 = (0..n).map(|a| self.scatter[a * n + a]).sum();
        let along = self.quad(&line.direction);
        let g = line.dist(&self.centroid);
        ((trace - along) / self.mass).max(0.0) + g * g
    }
}

/// Occupied cubes at one scale: every cube `R` with `mu(3R) > 0`.
#[derive(Debug)]
struct ScaleIndex {
    groups: BTreeMap<Vec<i64>, Arc<Group>>,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl ScaleIndex {
    fn build(mu: &DiscreteMeasure, k: i32) -> Self {
        let n = mu.dim();
        let scale = (2f64).powi(k);
        let mut members: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (i, x) in mu.points().iter().enumerate() {
            // x lies in the closed triple [(j-1)s, (j+2)s] iff t - 2 <= j <= t + 1.
            let ranges: Vec<(i64, i64)> = x
                .iter()
                .map(|c| {
                    let t = c * scale;
                    ((t - 2.0).ceil() as i64, (t + 1.0).floor() as i64)
                })
                .collect();
            let mut key: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            'outer: loop {
                members.entry(key.clone()).or_default().push(i);
                for d in (0..n).rev() {
                    key[d] += 1;
                    if key[d] <= ranges[d].1 {
                        continue 'outer;
                    }
                    key[d] = ranges[d].0;
                }
                break;
            }
        }
        let mut lo = vec![i64::MAX; n];
        let mut hi = vec![i64::MIN; n];
        let groups = members
            .into_iter()
            .map(|(key, atoms)| {
                for d in 0..n {
                    lo[d] = lo[d].min(key[d]);
                    hi[d] = hi[d].max(key[d]);
                }
                let g = Group::build(mu, DyadicCube::new(k, key.clone()), atoms);
                (key, Arc::new(g))
            })
            .collect();
        ScaleIndex { groups, lo, hi }
    }

    /// Ranges clipped to the occupied bounding box; `None` if they cover every occupied cube.
    fn clip(&self, ranges: &[(i64, i64)]) -> Option<Vec<(i64, i64)>> {
        if self.groups.is_empty() {
            return None;
        }
        let covers = ranges
            .iter()
            .enumerate()
            .all(|(d, (a, b))| *a <= self.lo[d] && self.hi[d] <= *b);
        if covers {
            None
        } else {
            Some(
                ranges
                    .iter()
                    .enumerate()
                    .map(|(d, (a, b))| ((*a).max(self.lo[d]), (*b).min(self.hi[d])))
                    .collect(),
            )
        }
    }

    fn select(&self, ranges: &Option<Vec<(i64, i64)>>, out: &mut Vec<Arc<Group>>) {
        match ranges {
            None => out.extend(self.groups.values().cloned()),
            Some(r) => {
                if r.iter().any(|(a, b)| a > b) {
                    return;
                }
                let n = r.len();
                let mut from = vec![i64::MIN; n];
                let mut to = vec![i64::MAX; n];
                from[0] = r[0].0;
                to[0] = r[0].1;
                for (key, g) in self.groups.range(from..=to) {
                    if key.iter().zip(r).all(|(j, (a, b))| a <= j && j <= b) {
                        out.push(g.clone());
                    }
                }
            }
        }
    }
}

type MemoKey = (
    i32,
    u8,
    u64,
    u64,
    Option<Vec<(i64, i64)>>,
    Option<Vec<(i64, i64)>>,
);

/// Cached multi-cube result: value, attaining line and contributing cube count.
type Memo = (f64, Option<Line>, usize);

/// Shared state for evaluating many beta numbers over one measure.
///
/// Occupied cubes per scale and multi-cube results are cached; cubes with the
/// same clipped window share one minimax solve. All methods take `&self` and may be
/// called from several threads.
pub struct BetaEngine<'a> {
    mu: &'a DiscreteMeasure,
    scales: Mutex<HashMap<i32, Arc<ScaleIndex>>>,
    memo: Mutex<HashMap<MemoKey, Arc<Memo>>>,
}

impl<'a> BetaEngine<'a> {
    pub fn new(mu: &'a DiscreteMeasure) -> Self {
        BetaEngine {
            mu,
            scales: Mutex::new(HashMap::new()),
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        self.mu
    }

    fn scale(&self, k: i32) -> Arc<ScaleIndex> {
        if let Some(s) = self.scales.lock().expect("scale cache").get(&k) {
            return s.clone();
        }
        let built = Arc::new(ScaleIndex::build(self.mu, k));
        self.scales
            .lock()
            .expect("scale cache")
            .entry(k)
            .or_insert(built)
            .clone()
    }

    /// `mu(3Q)`.
    pub fn triple_mass(&self, q: &DyadicCube) -> f64 {
        self.scale(q.k).groups.get(&q.idx).map_or(0.0, |g| g.mass)
    }

    /// Atom indices in the closed triple `3Q`.
    pub fn triple_atoms(&self, q: &DyadicCube) -> Vec<usize> {
        self.scale(q.k)
            .groups
            .get(&q.idx)
            .map_or_else(Vec::new, |g| g.atoms.clone())
    }

    /// Center of mass of `3Q`.
    pub fn triple_center(&self, q: &DyadicCube) -> Option<Point> {
        self.scale(q.k)
            .groups
            .get(&q.idx)
            .map(|g| Point(g.centroid.clone()))
    }

    /// `beta_p(mu, 3Q)`.
    pub fn triple_best(&self, q: &DyadicCube, p: f64) -> Result<BetaValue> {
        check_p(p)?;
        check_dim(self.mu.dim(), q.dim())?;
        let atoms = self.triple_atoms(q);
        best_on(self.mu, &atoms, p, q.triple_diam(), Some(q.clone()))
    }

    /// `beta_p(mu, 3R, l)` for a dyadic cube `R`.
    pub fn triple_fixed(&self, r: &DyadicCube, line: &Line, p: f64) -> f64 {
        let atoms = self.triple_atoms(r);
        fixed_line_on(self.mu, &atoms, line, p, r.triple_diam())
    }

    /// Every cube of scale `k` whose triple carries mass, in lexicographic order.
    pub fn occupied(&self, k: i32) -> Vec<DyadicCube> {
        self.scale(k)
            .groups
            .values()
            .map(|g| g.cube.clone())
            .collect()
    }

    /// Cubes of `Delta*(Q)` with `mu(3R) > 0`.
    pub fn occupied_nearby(&self, q: &DyadicCube) -> Vec<DyadicCube> {
        let near = NearbyCubes::of(q);
        let mut groups = Vec::new();
        let fine = self.scale(q.k);
        fine.select(&fine.clip(&near.same), &mut groups);
        let coarse = self.scale(q.k - 1);
        coarse.select(&coarse.clip(&near.coarse), &mut groups);
        groups.iter().map(|g| g.cube.clone()).collect()
    }

    /// `beta*`, `beta**` or `beta^{*,c}` of `Q`.
    pub fn multi(&self, q: &DyadicCube, p: f64, variant: MultiVariant) -> Result<BetaValue> {
        check_p(p)?;
        variant.validate()?;
        check_dim(self.mu.dim(), q.dim())?;
        let near = NearbyCubes::of(q);
        let fine = self.scale(q.k);
        let coarse = self.scale(q.k - 1);
        let fine_clip = fine.clip(&near.same);
        let coarse_clip = coarse.clip(&near.coarse);
        let (code, c_bits) = variant.code();
        let key: MemoKey = (
            q.k,
            code,
            p.to_bits(),
            c_bits,
            fine_clip.clone(),
            coarse_clip.clone(),
        );
        let cached = self.memo.lock().expect("beta memo").get(&key).cloned();
        let result = match cached {
            Some(r) => r,
            None => {
                let mut groups = Vec::new();
                fine.select(&fine_clip, &mut groups);
                coarse.select(&coarse_clip, &mut groups);
                let r = Arc::new(self.solve(groups, p, variant));
                self.memo.lock().expect("beta memo").insert(key, r.clone());
                r
            }
        };
        Ok(BetaValue {
            value: result.0,
            line: result.1.clone(),
            kind: BetaKind::Multi(variant),
            p: Some(p),
            cube: Some(q.clone()),
            exact: result.0 == 0.0,
            contributing: result.2,
        })
    }

    fn solve(
        &self,
        groups: Vec<Arc<Group>>,
        p: f64,
        variant: MultiVariant,
    ) -> (f64, Option<Line>, usize) {
        let weighted: Vec<Scored> = groups
            .into_iter()
            .filter_map(|g| {
                let diam3 = g.cube.triple_diam();
                let density = g.mass / diam3;
                let s = match variant {
                    MultiVariant::Star => density.min(1.0).sqrt(),
                    MultiVariant::StarStar => 1.0,
                    MultiVariant::StarC(c) => {
                        if g.mass >= c * diam3 {
                            c.min(1.0).sqrt()
                        } else {
                            return None;
                        }
                    }
                };
                Some(Scored {
                    factor: s / diam3,
                    group: g,
                })
            })
            .collect();
        if weighted.is_empty() {
            return (0.0, None, 0);
        }
        let count = weighted.len();
        let solver = Minimax {
            mu: self.mu,
            groups: weighted,
            p,
        };
        let (line, value) = solver.run();
        (value, Some(line), count)
    }
}

struct Scored {
    factor: f64,
    group: Arc<Group>,
}

struct Minimax<'m> {
    mu: &'m DiscreteMeasure,
    groups: Vec<Scored>,
    p: f64,
}

impl Minimax<'_> {
    fn exact_score(&self, s: &Scored, line: &Line) -> f64 {
        let mut acc = 0.0;
        for &i in &s.group.atoms {
            acc += self.mu.weights()[i] * pow_p(line.dist(&self.mu.points()[i]), self.p);
        }
        s.factor * (acc / s.group.mass).powf(1.0 / self.p)
    }

    /// Objective on a subset; uses moments when `p = 2`.
    fn fast_score(&self, s: &Scored, line: &Line) -> f64 {
        if self.p == 2.0 {
            s.factor * s.group.msd(line).sqrt()
        } else {
            self.exact_score(s, line)
        }
    }

    fn exact_max(&self, line: &Line) -> f64 {
        self.groups
            .iter()
            .map(|s| self.exact_score(s, line))
            .fold(0.0, f64::max)
    }

    fn union_atoms(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .groups
            .iter()
            .flat_map(|s| s.group.atoms.iter().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    fn group_axis(&self, g: &Group) -> Option<Line> {
        let refs = [g.centroid.as_slice()];
        let n = g.centroid.len();
        let scatter = nalgebra::DMatrix::from_row_slice(n, n, &g.scatter);
        let eig = nalgebra::SymmetricEigen::new(scatter);
        let mut best = 0;
        for i in 1..n {
            if eig.eigenvalues[i] > eig.eigenvalues[best] {
                best = i;
            }
        }
        let dir: Vec<f64> = eig.eigenvectors.column(best).iter().cloned().collect();
        Line::new(Point::from(refs[0]), dir).ok()
    }

    fn run(&self) -> (Line, f64) {
        let atoms = self.union_atoms();
        let refs: Vec<&[f64]> = atoms
            .iter()
            .map(|&i| self.mu.points()[i].coords())
            .collect();
        let w: Vec<f64> = atoms.iter().map(|&i| self.mu.weights()[i]).collect();
        let global = fit_refs(&refs, &w, Norm::P(2.0), &[])
            .expect("union of occupied cubes has positive mass")
            .line;
        let global_value = self.exact_max(&global);
        if global_value <= 1e-14 {
            return (global, global_value);
        }
        let mut candidates = vec![global];
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        order.sort_by(|&a, &b| {
            let ka = self.groups[a].group.mass * self.groups[a].factor;
            let kb = self.groups[b].group.mass * self.groups[b].factor;
            kb.total_cmp(&ka).then(a.cmp(&b))
        });
        for &i in order.iter().take(32) {
            if let Some(l) = self.group_axis(&self.groups[i].group) {
                candidates.push(l);
            }
        }
        let fast_max = |line: &Line| {
            self.groups
                .iter()
                .map(|s| self.fast_score(s, line))
                .fold(0.0, f64::max)
        };
        let mut best = candidates[0].clone();
        let mut best_fast = f64::INFINITY;
        for c in candidates {
            let v = fast_max(&c);
            if v < best_fast {
                best_fast = v;
                best = c;
            }
        }
        let scale = {
            let (mut lo, mut hi) = (
                vec![f64::INFINITY; self.mu.dim()],
                vec![f64::NEG_INFINITY; self.mu.dim()],
            );
            for x in &refs {
                for d in 0..x.len() {
                    lo[d] = lo[d].min(x[d]);
                    hi[d] = hi[d].max(x[d]);
                }
            }
            lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max)
        };
        let mut active: Vec<usize> = self.top_groups(&best, 24, &[]);
        for _round in 0..10 {
            let subset: Vec<&Scored> = active.iter().map(|&i| &self.groups[i]).collect();
            let restricted = if self.mu.dim() == 2 {
                self.solve_plane(&subset)
            } else {
                let start = best.clone();
                refine_line(start, scale, |l| {
                    subset
                        .iter()
                        .map(|s| self.fast_score(s, l))
                        .fold(0.0, f64::max)
                })
                .0
            };
            let restricted_value = subset
                .iter()
                .map(|s| self.fast_score(s, &restricted))
                .fold(0.0, f64::max);
            let full = fast_max(&restricted);
            if full < best_fast {
                best_fast = full;
                best = restricted.clone();
            }
            if full <= restricted_value * (1.0 + 1e-9) {
                break;
            }
            let extra = self.top_groups(&restricted, 16, &active);
            let threshold = restricted_value * (1.0 + 1e-9);
            let mut added = false;
            for i in extra {
                if self.fast_score(&self.groups[i], &restricted) > threshold {
                    active.push(i);
                    added = true;
                }
            }
            if !added {
                break;
            }
        }
        let value = self.exact_max(&best);
        (best, value)
    }

    fn top_groups(&self, line: &Line, count: usize, exclude: &[usize]) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = (0..self.groups.len())
            .filter(|i| !exclude.contains(i))
            .map(|i| (self.fast_score(&self.groups[i], line), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(count).map(|(_, i)| i).collect()
    }

    /// Minimax over planar lines `<x, u_t> = c` restricted to `subset`.
    fn solve_plane(&self, subset: &[&Scored]) -> Line {
        let p = self.p;
        let profile = |t: f64| -> (f64, f64) {
            let (s, c) = t.sin_cos();
            let u = [-s, c];
            let projected: Vec<Projected> = subset
                .iter()
                .map(|sc| {
                    let g = &sc.group;
                    if p == 2.0 {
                        Projected {
                            factor: sc.factor,
                            mean: u[0] * g.centroid[0] + u[1] * g.centroid[1],
                            var: g.quad(&u) / g.mass,
                            q: Vec::new(),
                            w: Vec::new(),
                            mass: g.mass,
                        }
                    } else {
                        let q: Vec<f64> = g
                            .atoms
                            .iter()
                            .map(|&i| {
                                let x = &self.mu.points()[i];
                                u[0] * x[0] + u[1] * x[1]
                            })
                            .collect();
                        Projected {
                            factor: sc.factor,
                            mean: 0.0,
                            var: 0.0,
                            w: g.atoms.iter().map(|&i| self.mu.weights()[i]).collect(),
                            q,
                            mass: g.mass,
                        }
                    }
                })
                .collect();
            let (lo, hi) =
                projected
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
                        if p == 2.0 {
                            (lo.min(g.mean), hi.max(g.mean))
                        } else {
                            g.q.iter()
                                .fold((lo, hi), |(a, b), q| (a.min(*q), b.max(*q)))
                        }
                    });
            let f = |c: f64| projected.iter().map(|g| g.value(c, p)).fold(0.0, f64::max);
            golden_section(f, lo, hi, 90)
        };
        let steps = if subset.len() > 48 { 360 } else { 720 };
        let h = std::f64::consts::PI / steps as f64;
        let scan: Vec<(f64, f64)> = (0..steps)
            .map(|i| {
                let t = i as f64 * h;
                (t, profile(t).1)
            })
            .collect();
        let mut minima: Vec<(f64, f64)> = (0..steps)
            .filter(|&i| {
                let prev = scan[(i + steps - 1) % steps].1;
                let next = scan[(i + 1) % steps].1;
                scan[i].1 <= prev && scan[i].1 <= next
            })
            .map(|i| scan[i])
            .collect();
        minima.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut best = (0.0, 0.0, f64::INFINITY);
        for &(t0, _) in minima.iter().take(6) {
            let (t, _) = golden_section(|t| profile(t).1, t0 - h, t0 + h, 60);
            let (c, v) = profile(t);
            if v < best.2 {
                best = (t, c, v);
            }
        }
        plane_line(best.0, best.1)
    }
}

struct Projected {
    factor: f64,
    mean: f64,
    var: f64,
    q: Vec<f64>,
    w: Vec<f64>,
    mass: f64,
}

impl Projected {
    fn value(&self, c: f64, p: f64) -> f64 {
        if p == 2.0 {
            let d = self.mean - c;
            self.factor * (self.var + d * d).max(0.0).sqrt()
        } else {
            let acc: f64 = self
                .q
                .iter()
                .zip(&self.w)
                .map(|(q, w)| w * pow_p((q - c).abs(), p))
                .sum();
            self.factor * (acc / self.mass).powf(1.0 / p)
        }
    }
}
