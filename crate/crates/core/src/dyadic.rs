//! Half-open dyadic cubes, dilations, nearby-cube families and trees of cubes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::Point;

/// `1600^2`; for integer `t > 0`, `t <= 1600 sqrt(n)` iff `t^2 <= 1600^2 n`.
const BIG_DILATION_SQ_TIMES_N: i128 = 2_560_000;

/// Side length `2^{-k}`.
#[inline]
pub fn side_of_scale(k: i32) -> f64 {
    (2f64).powi(-k)
}

/// The half-open cube `prod [j_i 2^{-k}, (j_i + 1) 2^{-k})`.
///
/// Cubes order by scale first and then lexicographically by corner index,
/// which is the deterministic traversal order used throughout the crate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub k: i32,
    pub idx: Vec<i64>,
}

impl DyadicCube {
    pub fn new(k: i32, idx: Vec<i64>) -> Self {
        DyadicCube { k, idx }
    }

    /// The unique scale-`k` cube containing `x`.
    pub fn at(x: &[f64], k: i32) -> Self {
        let scale = (2f64).powi(k);
        DyadicCube {
            k,
            idx: x.iter().map(|c| (c * scale).floor() as i64).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.idx.len()
    }

    pub fn side(&self) -> f64 {
        side_of_scale(self.k)
    }

    pub fn diam(&self) -> f64 {
        self.side() * (self.dim() as f64).sqrt()
    }

    pub fn lower(&self) -> Vec<f64> {
        let s = self.side();
        self.idx.iter().map(|&j| j as f64 * s).collect()
    }

    pub fn center(&self) -> Point {
        let s = self.side();
        Point(self.idx.iter().map(|&j| (j as f64 + 0.5) * s).collect())
    }

    /// Half-open containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && DyadicCube::at(x, self.k) == *self
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            k: self.k - 1,
            idx: self.idx.iter().map(|j| j.div_euclid(2)).collect(),
        }
    }

    /// The ancestor at scale `k <= self.k`.
    pub fn ancestor(&self, k: i32) -> DyadicCube {
        debug_assert!(k <= self.k);
        let shift = (self.k - k) as u32;
        DyadicCube {
            k,
            idx: self
                .idx
                .iter()
                .map(|j| j.div_euclid(1i64 << shift))
                .collect(),
        }
    }

    /// The `2^n` children in lexicographic order.
    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..(1usize << n))
            .map(|mask| DyadicCube {
                k: self.k + 1,
                idx: (0..n)
                    .map(|i| 2 * self.idx[i] + ((mask >> (n - 1 - i)) & 1) as i64)
                    .collect(),
            })
            .collect()
    }

    /// Whether `self` is contained in `other` (as half-open cubes).
    pub fn is_within(&self, other: &DyadicCube) -> bool {
        self.k >= other.k && self.ancestor(other.k) == *other
    }

    /// The concentric box with side `lambda * side(Q)`.
    pub fn dilate(&self, lambda: f64) -> Result<Box> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(
                "lambda",
                format!("{lambda} is not a positive dilation"),
            ));
        }
        Ok(Box {
            center: self.center(),
            half_side: 0.5 * lambda * self.side(),
        })
    }

    /// The closed triple `3Q`.
    pub fn triple(&self) -> Box {
        Box {
            center: self.center(),
            half_side: 1.5 * self.side(),
        }
    }

    /// Diameter of the triple, `3 side(Q) sqrt(n)`.
    pub fn triple_diam(&self) -> f64 {
        3.0 * self.diam()
    }

    /// The family `Delta*(Q)` of nearby cubes.
    pub fn nearby(&self) -> NearbyCubes {
        NearbyCubes::of(self)
    }
}

/// Closed axis-parallel box with given center and half side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub center: Point,
    pub half_side: f64,
}

impl Box {
    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn diam(&self) -> f64 {
        self.side() * (self.dim() as f64).sqrt()
    }

    /// Closed containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self
                .center
                .iter()
                .zip(x)
                .all(|(c, xi)| (xi - c).abs() <= self.half_side)
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.half_side).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.half_side).collect()
    }
}

/// `Delta*(Q)`: cubes `R` with `side Q <= side R <= 2 side Q` and `3R` inside the
/// closed box `1600 sqrt(n) Q`.
///
/// The family is a product of index intervals per scale, so it is stored as
/// ranges rather than an explicit list (in the plane it has about five million members).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearbyCubes {
    pub cube: DyadicCube,
    /// Inclusive index ranges per coordinate for same-scale members.
    pub same: Vec<(i64, i64)>,
    /// Inclusive index ranges per coordinate for members one scale up.
    pub coarse: Vec<(i64, i64)>,
}

fn within_big_dilation(lhs_twice: i128, n: usize) -> bool {
    lhs_twice <= 0 || lhs_twice * lhs_twice <= BIG_DILATION_SQ_TIMES_N * n as i128
}

/// Offset range `d = j - i` for same-scale `R`: `3R` inside the dilation iff
/// `2d + 3 <= 1600 sqrt(n)` and `-2d + 3 <= 1600 sqrt(n)`.
fn same_offset_ok(d: i64, n: usize) -> bool {
    within_big_dilation(2 * d as i128 + 3, n) && within_big_dilation(-2 * d as i128 + 3, n)
}

/// For a parent-scale index `j` and child index `i` (units of side Q):
/// `3R = [2j - 2, 2j + 4]`, `1600 sqrt(n) Q = [i + 1/2 -+ 800 sqrt(n)]`.
fn coarse_index_ok(j: i64, i: i64, n: usize) -> bool {
    let (j, i) = (j as i128, i as i128);
    within_big_dilation(2 * i + 1 - 4 * j + 4, n) && within_big_dilation(4 * j + 8 - 2 * i - 1, n)
}

impl NearbyCubes {
    pub fn of(q: &DyadicCube) -> Self {
        let n = q.dim();
        let approx = (800.0 * (n as f64).sqrt()) as i64;
        let mut m = approx + 2;
        while !same_offset_ok(m, n) {
            m -= 1;
        }
        let same = q.idx.iter().map(|&i| (i - m, i + m)).collect();
        let coarse = q
            .idx
            .iter()
            .map(|&i| {
                let centre = i.div_euclid(2);
                let mut lo = centre - approx / 2 - 3;
                while !coarse_index_ok(lo, i, n) {
                    lo += 1;
                }
                let mut hi = centre + approx / 2 + 3;
                while !coarse_index_ok(hi, i, n) {
                    hi -= 1;
                }
                (lo, hi)
            })
            .collect();
        NearbyCubes {
            cube: q.clone(),
            same,
            coarse,
        }
    }

    pub fn ranges(&self, k: i32) -> Option<&[(i64, i64)]> {
        if k == self.cube.k {
            Some(&self.same)
        } else if k == self.cube.k - 1 {
            Some(&self.coarse)
        } else {
            None
        }
    }

    pub fn count(&self) -> u128 {
        let prod = |r: &[(i64, i64)]| r.iter().map(|(a, b)| (b - a + 1) as u128).product::<u128>();
        prod(&self.same) + prod(&self.coarse)
    }

    pub fn contains(&self, r: &DyadicCube) -> bool {
        match self.ranges(r.k) {
            Some(ranges) if r.dim() == self.cube.dim() => r
                .idx
                .iter()
                .zip(ranges)
                .all(|(j, (lo, hi))| lo <= j && j <= hi),
            _ => false,
        }
    }

    /// Checks membership directly from the defining inequalities.
    pub fn satisfies_definition(q: &DyadicCube, r: &DyadicCube) -> bool {
        let n = q.dim();
        if r.dim() != n {
            return false;
        }
        if r.k == q.k {
            r.idx
                .iter()
                .zip(&q.idx)
                .all(|(j, i)| same_offset_ok(j - i, n))
        } else if r.k == q.k - 1 {
            r.idx
                .iter()
                .zip(&q.idx)
                .all(|(j, i)| coarse_index_ok(*j, *i, n))
        } else {
            false
        }
    }

    /// Enumerates all members (same scale first, then the coarser scale), each lexicographically.
    pub fn iter(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        let k = self.cube.k;
        box_iter(&self.same)
            .map(move |idx| DyadicCube::new(k, idx))
            .chain(box_iter(&self.coarse).map(move |idx| DyadicCube::new(k - 1, idx)))
    }

    /// The closed box `1600 sqrt(n) Q`.
    pub fn window(&self) -> Box {
        let n = self.cube.dim();
        Box {
            center: self.cube.center(),
            half_side: 800.0 * (n as f64).sqrt() * self.cube.side(),
        }
    }
}

fn box_iter(ranges: &[(i64, i64)]) -> impl Iterator<Item = Vec<i64>> + '_ {
    let total: u128 = ranges
        .iter()
        .map(|(a, b)| (b - a + 1).max(0) as u128)
        .product();
    (0..total).map(move |mut t| {
        let mut idx = vec![0; ranges.len()];
        for d in (0..ranges.len()).rev() {
            let (a, b) = ranges[d];
            let w = (b - a + 1) as u128;
            idx[d] = a + (t % w) as i64;
            t /= w;
        }
        idx
    })
}

/// The cubes of scales `0..=k_max` containing `x`, coarsest first.
pub fn chain_of_cubes(x: &[f64], k_max: i32) -> Result<Vec<DyadicCube>> {
    if k_max < 0 {
        return Err(invalid("k_max", "must be nonnegative"));
    }
    Ok((0..=k_max).map(|k| DyadicCube::at(x, k)).collect())
}

/// An upward-closed family of dyadic cubes with a unique maximal element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeTree {
    top: DyadicCube,
    members: BTreeSet<DyadicCube>,
}

impl CubeTree {
    /// Validates upward closure between every member and `top`.
    pub fn new(top: DyadicCube, members: impl IntoIterator<Item = DyadicCube>) -> Result<Self> {
        let mut set: BTreeSet<DyadicCube> = members.into_iter().collect();
        set.insert(top.clone());
        for q in &set {
            check_dim(top.dim(), q.dim())?;
            if !q.is_within(&top) {
                return Err(Error::Input(format!(
                    "cube {q:?} is not inside the top cube"
                )));
            }
            if q.k > top.k && !set.contains(&q.parent()) {
                return Err(Error::Input(format!("tree is not upward closed at {q:?}")));
            }
        }
        Ok(CubeTree { top, members: set })
    }

    /// Every descendant of `top` down to scale `k_max`.
    pub fn full(top: DyadicCube, k_max: i32) -> Self {
        let mut members = BTreeSet::new();
        let mut level = vec![top.clone()];
        while let Some(first) = level.first() {
            if first.k > k_max {
                break;
            }
            members.extend(level.iter().cloned());
            level = level.iter().flat_map(|q| q.children()).collect();
        }
        CubeTree { top, members }
    }

    /// The chain of cubes containing `x` from `top` down to scale `k_max`.
    pub fn branch(top: DyadicCube, x: &[f64], k_max: i32) -> Result<Self> {
        if !top.contains(x) {
            return Err(Error::Input("branch point is outside the top cube".into()));
        }
        let members = (top.k..=k_max.max(top.k)).map(|k| DyadicCube::at(x, k));
        CubeTree::new(top, members)
    }

    pub fn top(&self) -> &DyadicCube {
        &self.top
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, q: &DyadicCube) -> bool {
        self.members.contains(q)
    }

    pub fn members(&self) -> impl Iterator<Item = &DyadicCube> {
        self.members.iter()
    }

    pub fn max_scale(&self) -> i32 {
        self.members.iter().map(|q| q.k).max().unwrap_or(self.top.k)
    }

    /// Members grouped by scale, each group in lexicographic order.
    pub fn by_scale(&self) -> BTreeMap<i32, Vec<DyadicCube>> {
        let mut out: BTreeMap<i32, Vec<DyadicCube>> = BTreeMap::new();
        for q in &self.members {
            out.entry(q.k).or_default().push(q.clone());
        }
        out
    }

    /// Removes every member that has no descendant in the tree at scale `k_max`.
    pub fn prune_to_depth(&self, k_max: i32) -> Option<CubeTree> {
        let deep: Vec<&DyadicCube> = self.members.iter().filter(|q| q.k == k_max).collect();
        if deep.is_empty() {
            return None;
        }
        let mut keep = BTreeSet::new();
        for q in deep {
            let mut c = q.clone();
            while c.k >= self.top.k && keep.insert(c.clone()) {
                if c.k == self.top.k {
                    break;
                }
                c = c.parent();
            }
        }
        Some(CubeTree {
            top: self.top.clone(),
            members: keep,
        })
    }

    /// Approximates `Leaves(T)` by the members at scale `k_max`; each returned cube
    /// (taken closed) is within `diam = 2^{-k_max} sqrt(n)` of a true leaf.
    pub fn leaves(&self, k_max: i32) -> Result<Vec<DyadicCube>> {
        if self.members.is_empty() {
            return Err(Error::Empty("tree has no members"));
        }
        if k_max < self.top.k {
            return Err(invalid("k_max", "above the top scale"));
        }
        Ok(self
            .members
            .iter()
            .filter(|q| q.k == k_max)
            .cloned()
            .collect())
    }
}
