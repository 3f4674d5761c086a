//! Trees of dyadic cubes, good/bad localization, curves through tree leaves, and a
//! finite-data estimator of the rectifiable part of a measure.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{BetaEngine, MultiVariant};
use crate::curve::{
    certify, construct_curve, Certificate, Construction, CurveGraph, Owner, SegmentKind,
    DEFAULT_EPSILON,
};
use crate::dyadic::{CubeTree, DyadicCube};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{dist, Line, Point};
use crate::jones::{jones_with, square_sum, JonesVariant, SquareSum};
use crate::measure::{DiscreteMeasure, Region};
use crate::nets::{
    alpha_neighbourhood, fit_alphas, nets_from_tree, AlphaAssignment, AlphaEntry, NetSequence,
};

/// Output of [`localize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub good: Option<CubeTree>,
    pub bad: BTreeSet<DyadicCube>,
    /// Atoms of `Top` with `S_{T,b}(mu, x) <= N`.
    pub a_atoms: Vec<usize>,
    pub a_mass: f64,
    /// Mass of `A` outside every bad cube.
    pub a_prime_mass: f64,
    pub top_mass: f64,
    pub good_sum: f64,
    /// `N / epsilon`.
    pub budget: f64,
    pub n: f64,
    pub epsilon: f64,
    pub properties: LocalizationChecks,
}

/// The four localization properties as rechecked on the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationChecks {
    pub good_is_tree: bool,
    pub bad_closed_downward: bool,
    pub mass_retained: bool,
    pub sum_bounded: bool,
}

impl LocalizationChecks {
    pub fn all(&self) -> bool {
        self.good_is_tree && self.bad_closed_downward && self.mass_retained && self.sum_bounded
    }
}

/// Masses `mu(Q)` of half-open tree cubes and, per atom of `Top`, its tree chain.
struct TreeMasses {
    mass: HashMap<DyadicCube, f64>,
    chains: Vec<(usize, Vec<DyadicCube>)>,
}

fn tree_masses(tree: &CubeTree, mu: &DiscreteMeasure) -> TreeMasses {
    let top = tree.top();
    let deepest = tree.max_scale();
    let mut mass: HashMap<DyadicCube, f64> = HashMap::new();
    let mut chains = Vec::new();
    for (i, (x, w)) in mu.atoms().enumerate() {
        if !top.contains(x) {
            continue;
        }
        let mut chain = Vec::new();
        for k in top.k..=deepest {
            let q = DyadicCube::at(x, k);
            if !tree.contains(&q) {
                break;
            }
            *mass.entry(q.clone()).or_insert(0.0) += w;
            chain.push(q);
        }
        chains.push((i, chain));
    }
    TreeMasses { mass, chains }
}

/// `S_{T,b}(mu, x)` for every atom of `Top(T)`, as `(atom index, value)`.
pub fn normalized_sums(
    tree: &CubeTree,
    mu: &DiscreteMeasure,
    b: impl Fn(&DyadicCube) -> f64,
) -> Result<Vec<(usize, f64)>> {
    check_dim(mu.dim(), tree.top().dim())?;
    let tm = tree_masses(tree, mu);
    let values: HashMap<&DyadicCube, f64> = tm.mass.keys().map(|q| (q, b(q))).collect();
    Ok(tm
        .chains
        .iter()
        .map(|(i, chain)| (*i, chain.iter().map(|q| values[q] / tm.mass[q]).sum()))
        .collect())
}

/// Splits `tree` into good and bad cubes: `Q` is bad when some `R` in the tree with
/// `Q ⊆ R` has `mu(A ∩ R) <= epsilon mu(A) mu(R)`. Every cube is bad when `mu(A) = 0`.
pub fn localize(
    tree: &CubeTree,
    b: impl Fn(&DyadicCube) -> f64,
    mu: &DiscreteMeasure,
    n: f64,
    epsilon: f64,
) -> Result<LocalizationResult> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(invalid("N", format!("{n} must be finite and nonnegative")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("epsilon", format!("{epsilon} must be positive")));
    }
    check_dim(mu.dim(), tree.top().dim())?;
    let tm = tree_masses(tree, mu);
    let values: HashMap<DyadicCube, f64> = tree.members().map(|q| (q.clone(), b(q))).collect();
    if let Some((q, v)) = values.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(invalid(
            "b",
            format!("value {v} at {q:?} is not finite and nonnegative"),
        ));
    }
    let weights = mu.weights();
    let top_mass: f64 = tm.chains.iter().map(|(i, _)| weights[*i]).sum();
    let mut a_atoms = Vec::new();
    let mut a_cube_mass: HashMap<&DyadicCube, f64> = HashMap::new();
    for (i, chain) in &tm.chains {
        let s: f64 = chain.iter().map(|q| values[q] / tm.mass[q]).sum();
        if s <= n {
            a_atoms.push(*i);
            for q in chain {
                *a_cube_mass.entry(q).or_insert(0.0) += weights[*i];
            }
        }
    }
    let a_mass: f64 = a_atoms.iter().map(|&i| weights[i]).sum();
    let mut bad = BTreeSet::new();
    if a_mass == 0.0 {
        bad.extend(tree.members().cloned());
    } else {
        for (_, cubes) in tree.by_scale() {
            for q in cubes {
                let inherited = q.k > tree.top().k && bad.contains(&q.parent());
                let m = tm.mass.get(&q).copied().unwrap_or(0.0);
                let am = a_cube_mass.get(&q).copied().unwrap_or(0.0);
                if inherited || am <= epsilon * a_mass * m {
                    bad.insert(q);
                }
            }
        }
    }
    let good_cubes: Vec<DyadicCube> = tree
        .members()
        .filter(|q| !bad.contains(q))
        .cloned()
        .collect();
    let good_sum: f64 = good_cubes.iter().map(|q| values[q]).sum();
    let a_set: BTreeSet<usize> = a_atoms.iter().copied().collect();
    let a_prime_mass: f64 = tm
        .chains
        .iter()
        .filter(|(i, chain)| a_set.contains(i) && chain.iter().all(|q| !bad.contains(q)))
        .map(|(i, _)| weights[*i])
        .sum();
    let good = if good_cubes.is_empty() {
        None
    } else {
        CubeTree::new(tree.top().clone(), good_cubes.iter().cloned()).ok()
    };
    let properties = LocalizationChecks {
        good_is_tree: good_cubes.is_empty()
            || good
                .as_ref()
                .is_some_and(|g| g.top() == tree.top() && g.len() == good_cubes.len()),
        bad_closed_downward: bad.iter().all(|q| {
            q.children()
                .iter()
                .all(|c| !tree.contains(c) || bad.contains(c))
        }),
        mass_retained: a_prime_mass >= (1.0 - epsilon * top_mass) * a_mass - 1e-12 * a_mass,
        sum_bounded: a_mass == 0.0 || good_sum < n / epsilon,
    };
    Ok(LocalizationResult {
        good,
        bad,
        a_atoms,
        a_mass,
        a_prime_mass,
        top_mass,
        good_sum,
        budget: n / epsilon,
        n,
        epsilon,
        properties,
    })
}

/// Predicate used to grow a tree from a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum TreeRegime {
    /// `mu(3R) >= c diam 3R` along every branch.
    LowerRegular { c: f64 },
    /// `mu(3R^) <= (12 sqrt n)^D mu(3R)` along every branch, `R^` the parent of `R`.
    Doubling { d: f64 },
}

/// Output of [`grow_tree`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrownTree {
    pub tree: Option<CubeTree>,
    /// Largest ladder radius below which the pointwise predicate held on the whole ladder.
    pub r_x: Option<f64>,
    pub q_x: Option<DyadicCube>,
    pub diagnostic: Option<String>,
}

fn ball_mass(mu: &DiscreteMeasure, x: &[f64], r: f64) -> f64 {
    mu.mass(&Region::Ball {
        center: Point::from(x),
        radius: r,
    })
    .unwrap_or(0.0)
}

fn regime_holds(engine: &BetaEngine, q: &DyadicCube, regime: TreeRegime) -> bool {
    let m = engine.triple_mass(q);
    match regime {
        TreeRegime::LowerRegular { c } => m >= c * q.triple_diam(),
        TreeRegime::Doubling { d } => {
            let n = q.dim() as f64;
            m > 0.0 && engine.triple_mass(&q.parent()) <= (12.0 * n.sqrt()).powf(d) * m
        }
    }
}

/// Grows the tree `T_x` of cubes under `Q_x` whose branches satisfy the regime predicate,
/// down to scale `k_max`.
pub fn grow_tree(
    mu: &DiscreteMeasure,
    x: &[f64],
    regime: TreeRegime,
    k_max: i32,
) -> Result<GrownTree> {
    check_dim(mu.dim(), x.len())?;
    if k_max < 0 {
        return Err(invalid("k_max", "must be nonnegative"));
    }
    let n = mu.dim() as f64;
    let holds_at = |j: i32| {
        let r = 0.5f64.powi(j);
        match regime {
            TreeRegime::LowerRegular { c } => ball_mass(mu, x, r) >= 3.0 * n.sqrt() * c * r,
            TreeRegime::Doubling { d } => {
                ball_mass(mu, x, 2.0 * r) <= 2f64.powf(d) * ball_mass(mu, x, r)
            }
        }
    };
    match regime {
        TreeRegime::LowerRegular { c } if !(c.is_finite() && c > 0.0) => {
            return Err(invalid("c", "must be positive"))
        }
        TreeRegime::Doubling { d } if !(d.is_finite() && d >= 1.0) => {
            return Err(invalid("D", "must be at least 1"))
        }
        _ => {}
    }
    let mut j_x = None;
    for j in (0..=k_max).rev() {
        if holds_at(j) {
            j_x = Some(j);
        } else {
            break;
        }
    }
    let Some(j_r) = j_x else {
        return Ok(GrownTree {
            tree: None,
            r_x: None,
            q_x: None,
            diagnostic: Some(format!(
                "pointwise predicate fails at the finest radius 2^-{k_max}"
            )),
        });
    };
    let r_x = 0.5f64.powi(j_r);
    let shift = match regime {
        TreeRegime::LowerRegular { .. } => 0,
        TreeRegime::Doubling { .. } => (6.0 * n.sqrt()).log2().ceil() as i32 - 1,
    };
    let k_x = (j_r + shift).min(k_max);
    let q_x = DyadicCube::at(x, k_x);
    let engine = BetaEngine::new(mu);
    if !regime_holds(&engine, &q_x, regime) {
        return Ok(GrownTree {
            tree: None,
            r_x: Some(r_x),
            q_x: Some(q_x),
            diagnostic: Some("tree predicate fails at the top cube".into()),
        });
    }
    let mut members = vec![q_x.clone()];
    let mut level = vec![q_x.clone()];
    for _ in k_x..k_max {
        level = level
            .iter()
            .flat_map(|q| q.children())
            .filter(|c| regime_holds(&engine, c, regime))
            .collect();
        if level.is_empty() {
            break;
        }
        members.extend(level.iter().cloned());
    }
    Ok(GrownTree {
        tree: Some(CubeTree::new(q_x.clone(), members)?),
        r_x: Some(r_x),
        q_x: Some(q_x),
        diagnostic: None,
    })
}

/// Smallest `D` with `mu(3Q^) <= 2^D mu(3Q)` for every non-top member.
pub fn tree_doubling_exponent(mu: &DiscreteMeasure, tree: &CubeTree) -> f64 {
    let engine = BetaEngine::new(mu);
    tree.members()
        .filter(|q| q.k > tree.top().k)
        .map(|q| (engine.triple_mass(&q.parent()) / engine.triple_mass(q)).log2())
        .fold(0.0, f64::max)
}

/// How lines and alphas are chosen when drawing through a tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum DrawRegime {
    LowerRegular { c: f64 },
    StarStar,
    Doubling { d: f64 },
}

/// Output of [`draw_through_tree`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawReport {
    pub regime: DrawRegime,
    pub p: f64,
    pub top: DyadicCube,
    pub k_max: i32,
    /// Members kept after dropping cubes that do not reach `k_max`.
    pub tree_size: usize,
    pub construction: Construction,
    pub certificate: Certificate,
    /// Vertices whose regime alpha fell short of the measured distances and was raised.
    pub alpha_repairs: usize,
    /// Tree sum of the regime's squared betas times `diam Q`.
    pub tree_sum: f64,
    /// `diam Top + factor * tree_sum` for the regime's factor.
    pub budget: f64,
    pub leaf_tolerance: f64,
    pub max_leaf_distance: f64,
    pub leaves_covered: bool,
}

impl DrawReport {
    pub fn curve(&self) -> CurveGraph {
        self.construction.curve()
    }
}

fn check_hypothesis(engine: &BetaEngine, tree: &CubeTree, regime: DrawRegime) -> Result<()> {
    for q in tree.members() {
        match regime {
            DrawRegime::LowerRegular { c } => {
                if engine.triple_mass(q) < c * q.triple_diam() {
                    return Err(Error::Hypothesis(format!(
                        "cube {:?} at scale {} is below density {c}",
                        q.idx, q.k
                    )));
                }
            }
            DrawRegime::Doubling { d } => {
                if q.k > tree.top().k
                    && engine.triple_mass(&q.parent()) > 2f64.powf(d) * engine.triple_mass(q)
                {
                    return Err(Error::Hypothesis(format!(
                        "cube {:?} at scale {} breaks doubling with D = {d}",
                        q.idx, q.k
                    )));
                }
            }
            DrawRegime::StarStar => {}
        }
    }
    Ok(())
}

/// Line and alpha for `(k, v)` from the regime's beta rule.
fn regime_entry(
    engine: &BetaEngine,
    nets: &NetSequence,
    tree: &CubeTree,
    k: usize,
    v: usize,
    p: f64,
    regime: DrawRegime,
) -> Result<Option<AlphaEntry>> {
    let witnesses = nets
        .witnesses
        .as_ref()
        .expect("nets built from a tree carry witnesses");
    let q = &witnesses[k][v];
    let n = q.dim() as f64;
    let (beta, line, factor) = match regime {
        DrawRegime::LowerRegular { c } => {
            let b = engine.multi(q, p, MultiVariant::StarC(c))?;
            (b.value, b.line, 4.0 * c.powf(-0.5).max(1.0))
        }
        DrawRegime::StarStar => {
            let b = engine.multi(q, p, MultiVariant::StarStar)?;
            (b.value, b.line, 4.0)
        }
        DrawRegime::Doubling { d } => {
            let hat = covering_cube(nets, witnesses, tree, k, v);
            let b = engine.triple_best(&hat, p)?;
            (
                b.value,
                b.line,
                6400.0 * n.sqrt() * (3200.0 * n.sqrt()).powf(d / p),
            )
        }
    };
    Ok(line.map(|line| AlphaEntry {
        line,
        alpha: factor * beta,
    }))
}

/// Minimal ancestor of `Q_{k,v}` in the tree whose triple holds the triples of the
/// witnesses of neighbouring vertices; the top when none does.
fn covering_cube(
    nets: &NetSequence,
    witnesses: &[Vec<DyadicCube>],
    tree: &CubeTree,
    k: usize,
    v: usize,
) -> DyadicCube {
    let centre = &nets.levels[k][v];
    let radius = crate::nets::NEIGHBOURHOOD * nets.c_star * nets.scale(k);
    let mut boxes = Vec::new();
    for j in [k - 1, k] {
        for u in nets.within(j, centre, radius) {
            boxes.push(witnesses[j][u].triple());
        }
    }
    let mut hat = witnesses[k][v].clone();
    loop {
        let t = hat.triple();
        let (lo, hi) = (t.lower(), t.upper());
        let covers = boxes.iter().all(|b| {
            let (bl, bh) = (b.lower(), b.upper());
            (0..lo.len()).all(|i| bl[i] >= lo[i] && bh[i] <= hi[i])
        });
        if covers || hat.k <= tree.top().k {
            return hat;
        }
        hat = hat.parent();
    }
}

/// Draws a curve through the leaves of `tree` at scale `k_max`.
pub fn draw_through_tree(
    mu: &DiscreteMeasure,
    tree: &CubeTree,
    p: f64,
    regime: DrawRegime,
    k_max: i32,
) -> Result<DrawReport> {
    check_dim(mu.dim(), tree.top().dim())?;
    if !(p.is_finite() && p >= 1.0) {
        return Err(invalid("p", format!("{p} is not a finite exponent >= 1")));
    }
    match regime {
        DrawRegime::LowerRegular { c } if !(c.is_finite() && c > 0.0) => {
            return Err(invalid("c", "must be positive"))
        }
        DrawRegime::Doubling { d } if !(d.is_finite() && d > 0.0) => {
            return Err(invalid("D", "must be positive"))
        }
        _ => {}
    }
    let engine = BetaEngine::new(mu);
    check_hypothesis(&engine, tree, regime)?;
    let pruned = tree
        .prune_to_depth(k_max)
        .ok_or_else(|| Error::Hypothesis(format!("no branch of the tree reaches scale {k_max}")))?;
    let top = pruned.top().clone();
    let r0 = 3.0 * top.diam();
    let nets = nets_from_tree(mu, &pruned, r0)?;
    let jobs: Vec<(usize, usize)> = (1..nets.levels.len())
        .flat_map(|k| (0..nets.levels[k].len()).map(move |v| (k, v)))
        .collect();
    let chosen = jobs
        .par_iter()
        .map(|&(k, v)| regime_entry(&engine, &nets, &pruned, k, v, p, regime))
        .collect::<Result<Vec<_>>>()?;
    let mut lines: Vec<Vec<Line>> = vec![Vec::new(); nets.levels.len()];
    let mut formula: Vec<Vec<f64>> = vec![Vec::new(); nets.levels.len()];
    for (&(k, v), entry) in jobs.iter().zip(&chosen) {
        let (line, alpha) = match entry {
            Some(e) => (e.line.clone(), e.alpha),
            None => (fallback_line(&nets, k, v)?, 0.0),
        };
        lines[k].push(line);
        formula[k].push(alpha);
    }
    let measured = fit_alphas(&nets, Some(&lines))?;
    let mut alpha_repairs = 0;
    let mut levels: Vec<Vec<AlphaEntry>> = vec![Vec::new(); nets.levels.len()];
    for k in 1..nets.levels.len() {
        for (v, e) in measured.levels[k].iter().enumerate() {
            let a = formula[k][v];
            if e.alpha > a {
                alpha_repairs += 1;
            }
            levels[k].push(AlphaEntry {
                line: e.line.clone(),
                alpha: a.max(e.alpha),
            });
        }
    }
    let alphas = AlphaAssignment { levels };
    let construction = construct_curve(&nets, &alphas, DEFAULT_EPSILON)?;
    let certificate = certify(&construction);
    let (tree_sum, factor) = regime_budget(mu, &pruned, p, regime)?;
    let n = top.dim() as f64;
    let leaf_side = 0.5f64.powi(k_max);
    let leaf_tolerance = 2.0 * nets.c_star * nets.scale(nets.depth()) + leaf_side * n.sqrt();
    let curve = construction.curve();
    let anchors = used_vertices(&curve);
    let mut max_leaf_distance: f64 = 0.0;
    for leaf in pruned.leaves(k_max)? {
        let c = leaf.center();
        let d = anchors
            .iter()
            .map(|a| dist(a, &c))
            .fold(f64::INFINITY, f64::min);
        max_leaf_distance = max_leaf_distance.max(d);
    }
    Ok(DrawReport {
        regime,
        p,
        top: top.clone(),
        k_max,
        tree_size: pruned.len(),
        certificate,
        alpha_repairs,
        tree_sum,
        budget: top.diam() + factor * tree_sum,
        leaf_tolerance,
        max_leaf_distance,
        leaves_covered: max_leaf_distance <= leaf_tolerance,
        construction,
    })
}

/// Line through `v` used when the regime's beta has no line (a null family).
fn fallback_line(nets: &NetSequence, k: usize, v: usize) -> Result<Line> {
    let pts: Vec<Point> = alpha_neighbourhood(nets, k, v)
        .into_iter()
        .cloned()
        .collect();
    Ok(crate::geometry::fit_line(&pts, &vec![1.0; pts.len()], crate::geometry::Norm::Sup)?.line)
}

/// Vertices lying on the curve: segment endpoints, or every vertex when there are no segments.
fn used_vertices(g: &CurveGraph) -> Vec<Point> {
    if g.segments.is_empty() {
        return g.vertices.clone();
    }
    let ids: BTreeSet<usize> = g.segments.iter().flat_map(|s| [s.a, s.b]).collect();
    ids.into_iter().map(|i| g.vertices[i].clone()).collect()
}

fn regime_budget(
    mu: &DiscreteMeasure,
    tree: &CubeTree,
    p: f64,
    regime: DrawRegime,
) -> Result<(f64, f64)> {
    let n = tree.top().dim() as f64;
    Ok(match regime {
        DrawRegime::LowerRegular { c } => (
            square_sum(&SquareSum::StarCTree { mu, tree, p, c })?.total,
            c.recip().max(1.0),
        ),
        DrawRegime::StarStar => {
            let engine = BetaEngine::new(mu);
            let mut total = 0.0;
            for q in tree.members() {
                let b = engine.multi(q, p, MultiVariant::StarStar)?.value;
                total += b * b * q.diam();
            }
            (total, 1.0)
        }
        DrawRegime::Doubling { d } => (
            square_sum(&SquareSum::Tree { mu, tree, p })?.total,
            (3200.0 * n.sqrt()).powf(2.0 * d / p),
        ),
    })
}

/// Output of [`cover_support`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub tops: Vec<DyadicCube>,
    /// Per-top summaries; tops whose tree dies out before `k_max` are skipped.
    pub pieces: Vec<CoverPiece>,
    pub graph: CurveGraph,
    pub connector_length: f64,
    pub length_naive: f64,
    pub length_dedup: f64,
    pub support_diam: f64,
    /// `S**_p` over the scales of the tops down to `k_max`.
    pub s_star_star: f64,
    /// `length_dedup / (support_diam + s_star_star)`.
    pub ratio: f64,
    /// Atoms farther than the leaf tolerance from every curve vertex.
    pub uncovered_atoms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverPiece {
    pub top: DyadicCube,
    pub tree_size: usize,
    pub length_dedup: f64,
    pub alpha_sum: f64,
    pub certificate_passed: bool,
    pub leaves_covered: bool,
}

/// Curves through the trees `{Q ⊆ Q0 : mu(3Q) > 0}` of the maximal cubes `Q0` with
/// `mu(3Q0) > 0` and side at most the support diameter, joined by nearest-vertex connectors.
pub fn cover_support(mu: &DiscreteMeasure, p: f64, k_max: i32) -> Result<CoverReport> {
    if mu.is_empty() {
        return Err(Error::Empty("measure has no atoms"));
    }
    let diam = mu.support_diam();
    let k_top = if diam > 0.0 {
        (-diam.log2()).ceil() as i32
    } else {
        k_max
    };
    if k_top > k_max {
        return Err(invalid(
            "k_max",
            format!("finer than the top scale {k_top} is required"),
        ));
    }
    let engine = BetaEngine::new(mu);
    let tops = engine.occupied(k_top);
    let mut pieces = Vec::new();
    let mut graph = CurveGraph::new();
    let mut parts: Vec<Vec<usize>> = Vec::new();
    let mut tolerance: f64 = 0.0;
    for top in &tops {
        let mut members = vec![top.clone()];
        let mut level = vec![top.clone()];
        for _ in k_top..k_max {
            level = level
                .iter()
                .flat_map(|q| q.children())
                .filter(|c| engine.triple_mass(c) > 0.0)
                .collect();
            members.extend(level.iter().cloned());
        }
        let tree = CubeTree::new(top.clone(), members)?;
        if tree.prune_to_depth(k_max).is_none() {
            continue;
        }
        let report = draw_through_tree(mu, &tree, p, DrawRegime::StarStar, k_max)?;
        tolerance = tolerance.max(report.leaf_tolerance);
        let curve = report.curve();
        let map = graph.absorb(&curve);
        let ids: BTreeSet<usize> = if curve.segments.is_empty() {
            map.iter().copied().collect()
        } else {
            curve
                .segments
                .iter()
                .flat_map(|s| [map[s.a], map[s.b]])
                .collect()
        };
        parts.push(ids.into_iter().collect());
        pieces.push(CoverPiece {
            top: top.clone(),
            tree_size: report.tree_size,
            length_dedup: report.certificate.length_dedup,
            alpha_sum: report.construction.accounting.alpha_sum,
            certificate_passed: report.certificate.passed(),
            leaves_covered: report.leaves_covered,
        });
    }
    let mut connector_length = 0.0;
    for w in parts.windows(2) {
        let mut best = (f64::INFINITY, 0, 0);
        for &a in &w[0] {
            for &b in &w[1] {
                let d = dist(&graph.vertices[a], &graph.vertices[b]);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        if graph
            .segment(best.1, best.2, SegmentKind::Connector, 0, Owner::Connector)
            .is_some()
        {
            connector_length += best.0;
        }
    }
    let (length_naive, length_dedup) = crate::curve::curve_length(&graph);
    let s_star_star = square_sum(&SquareSum::star_star(mu, k_top..=k_max, p))?.total;
    let anchors = used_vertices(&graph);
    let uncovered_atoms = mu
        .points()
        .par_iter()
        .filter(|x| anchors.iter().all(|a| dist(a, x) > tolerance))
        .count();
    let budget = diam + s_star_star;
    Ok(CoverReport {
        tops,
        pieces,
        graph,
        connector_length,
        length_naive,
        length_dedup,
        support_diam: diam,
        s_star_star,
        ratio: if budget > 0.0 {
            length_dedup / budget
        } else {
            0.0
        },
        uncovered_atoms,
    })
}

/// Parameters of [`decompose_estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub p: f64,
    /// Density levels `c`, tried in order.
    pub c_ladder: Vec<f64>,
    /// Caps `N` on the truncated Jones function, tried in increasing order when localizing.
    pub n_ladder: Vec<f64>,
    /// Localization parameters as fractions of `mu(Top)`, each in `(0, 1)`.
    pub eps_ladder: Vec<f64>,
    /// Finest scale of Jones sums, density ladders and trees.
    pub k_max: i32,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            p: 2.0,
            c_ladder: vec![0.1, 0.03, 0.01],
            n_ladder: vec![1.0],
            eps_ladder: vec![0.5, 0.1],
            k_max: 8,
        }
    }
}

impl DecomposeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(invalid("p", "must be a finite exponent >= 1"));
        }
        if self.c_ladder.is_empty() || self.c_ladder.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(invalid("c_ladder", "needs positive values"));
        }
        if self.n_ladder.is_empty() || self.n_ladder.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(invalid("n_ladder", "needs finite nonnegative values"));
        }
        if self.eps_ladder.is_empty() || self.eps_ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(invalid("eps_ladder", "needs fractions in (0, 1)"));
        }
        if self.k_max < 0 {
            return Err(invalid("k_max", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomClass {
    RectCandidate,
    UnrectCandidate,
}

/// Why an atom was not labelled rectifiable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    LowDensity,
    JonesAboveCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomLabel {
    pub lower_density: f64,
    /// Truncated `J^{*,c}_p` for the ladder `c` that decided the label.
    pub jones: f64,
    pub c: f64,
    pub class: AtomClass,
    pub failure: Option<Failure>,
    pub captured: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawnCurve {
    pub top: DyadicCube,
    pub c: f64,
    pub n: f64,
    pub epsilon: f64,
    pub good_cubes: usize,
    pub length: f64,
    pub captured_atoms: usize,
    pub localization_ok: bool,
    pub certificate_passed: bool,
}

/// Output of [`decompose_estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub config: DecomposeConfig,
    pub atoms: Vec<AtomLabel>,
    pub curves: Vec<DrawnCurve>,
    pub rect_mass: f64,
    pub captured_mass: f64,
    /// `captured_mass / rect_mass`, 1 when no atom is a rect candidate.
    pub captured_fraction: f64,
}

impl DecompositionReport {
    pub fn rect_atoms(&self) -> Vec<usize> {
        (0..self.atoms.len())
            .filter(|&i| self.atoms[i].class == AtomClass::RectCandidate)
            .collect()
    }
}

/// Labels atoms by lower density and truncated Jones value, then draws curves through
/// localized lower-regular trees grown from the rect candidates.
pub fn decompose_estimate(
    mu: &DiscreteMeasure,
    config: &DecomposeConfig,
) -> Result<DecompositionReport> {
    config.validate()?;
    let n = mu.dim() as f64;
    let k_max = config.k_max;
    let cap = config.n_ladder.iter().copied().fold(0.0, f64::max);
    let radii: Vec<f64> = (0..=k_max).map(|j| 0.5f64.powi(j)).collect();
    let engine = BetaEngine::new(mu);
    let mut labels: Vec<AtomLabel> = mu
        .points()
        .par_iter()
        .map(|x| -> Result<AtomLabel> {
            let lower = mu.density_profile(x, &radii)?.lower_estimate;
            let mut label = AtomLabel {
                lower_density: lower,
                jones: f64::INFINITY,
                c: config.c_ladder[0],
                class: AtomClass::UnrectCandidate,
                failure: Some(Failure::LowDensity),
                captured: false,
            };
            for &c in &config.c_ladder {
                if lower <= 1.5 * n.sqrt() * c {
                    continue;
                }
                let j = jones_with(&engine, x, config.p, k_max, JonesVariant::StarC(c))?.sum;
                if label.failure == Some(Failure::LowDensity) || j < label.jones {
                    label.jones = j;
                    label.c = c;
                    label.failure = Some(Failure::JonesAboveCap);
                }
                if j <= cap {
                    label.class = AtomClass::RectCandidate;
                    label.failure = None;
                    break;
                }
            }
            Ok(label)
        })
        .collect::<Result<Vec<_>>>()?;

    let weights = mu.weights();
    let mut curves = Vec::new();
    let mut ladder = config.n_ladder.clone();
    ladder.sort_by(f64::total_cmp);
    let mut tried: BTreeSet<(DyadicCube, u64)> = BTreeSet::new();
    for y in 0..labels.len() {
        if labels[y].class != AtomClass::RectCandidate || labels[y].captured {
            continue;
        }
        let c = labels[y].c;
        let grown = grow_tree(mu, &mu.points()[y], TreeRegime::LowerRegular { c }, k_max)?;
        let Some(tree) = grown.tree else { continue };
        if !tried.insert((tree.top().clone(), c.to_bits())) {
            continue;
        }
        let eta = tree_masses(&tree, mu)
            .chains
            .iter()
            .map(|(i, _)| weights[*i])
            .sum::<f64>();
        let b = |q: &DyadicCube| {
            engine
                .multi(q, config.p, MultiVariant::StarC(c))
                .map_or(0.0, |v| v.value * v.value * q.diam())
        };
        let cache: HashMap<DyadicCube, f64> = tree.members().map(|q| (q.clone(), b(q))).collect();
        'ladder: for &cap_n in &ladder {
            for &frac in &config.eps_ladder {
                let eps = frac * eta;
                let loc = localize(&tree, |q| cache[q], mu, cap_n, eps)?;
                let Some(good) = loc.good.as_ref() else {
                    continue;
                };
                if good.prune_to_depth(k_max).is_none() {
                    continue;
                }
                let report =
                    draw_through_tree(mu, good, config.p, DrawRegime::LowerRegular { c }, k_max)?;
                let anchors = used_vertices(&report.curve());
                let mut captured_atoms = 0;
                for (i, x) in mu.points().iter().enumerate() {
                    if labels[i].class == AtomClass::RectCandidate
                        && !labels[i].captured
                        && anchors.iter().any(|a| dist(a, x) <= report.leaf_tolerance)
                    {
                        labels[i].captured = true;
                        captured_atoms += 1;
                    }
                }
                curves.push(DrawnCurve {
                    top: tree.top().clone(),
                    c,
                    n: cap_n,
                    epsilon: eps,
                    good_cubes: good.len(),
                    length: report.certificate.length_dedup,
                    captured_atoms,
                    localization_ok: loc.properties.all(),
                    certificate_passed: report.certificate.passed(),
                });
                let remaining = loc
                    .a_atoms
                    .iter()
                    .any(|&i| labels[i].class == AtomClass::RectCandidate && !labels[i].captured);
                if !remaining {
                    break 'ladder;
                }
            }
        }
    }
    let rect_mass: f64 = labels
        .iter()
        .zip(weights)
        .filter(|(l, _)| l.class == AtomClass::RectCandidate)
        .map(|(_, w)| w)
        .sum();
    let captured_mass: f64 = labels
        .iter()
        .zip(weights)
        .filter(|(l, _)| l.captured)
        .map(|(_, w)| w)
        .sum();
    Ok(DecompositionReport {
        config: config.clone(),
        atoms: labels,
        curves,
        rect_mass,
        captured_mass,
        captured_fraction: if rect_mass > 0.0 {
            captured_mass / rect_mass
        } else {
            1.0
        },
    })
}

/// Sorted `(scale, count)` pairs of a tree, handy for reports.
pub fn tree_profile(tree: &CubeTree) -> BTreeMap<i32, usize> {
    tree.by_scale()
        .into_iter()
        .map(|(k, v)| (k, v.len()))
        .collect()
}
