//! Finite weighted atom sets standing in for Radon measures.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dyadic::{Box, DyadicCube};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{dist_sq, Point};

/// A region over which mass is measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Half-open dyadic cube.
    Cube(DyadicCube),
    /// Closed box.
    Box(Box),
    /// Closed ball `|y - center| <= radius`.
    Ball { center: Point, radius: f64 },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Cube(q) => q.dim(),
            Region::Box(b) => b.dim(),
            Region::Ball { center, .. } => center.dim(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Cube(q) => q.contains(x),
            Region::Box(b) => b.contains(x),
            Region::Ball { center, radius } => dist_sq(center, x) <= radius * radius,
        }
    }

    /// Geometric diameter of the region.
    pub fn diam(&self) -> f64 {
        match self {
            Region::Cube(q) => q.diam(),
            Region::Box(b) => b.diam(),
            Region::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Closed axis-parallel bounding box `[lo, hi]`.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Cube(q) => {
                let lo = q.lower();
                let hi = lo.iter().map(|l| l + q.side()).collect();
                (lo, hi)
            }
            Region::Box(b) => (b.lower(), b.upper()),
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }
}

impl From<DyadicCube> for Region {
    fn from(q: DyadicCube) -> Self {
        Region::Cube(q)
    }
}

impl From<Box> for Region {
    fn from(b: Box) -> Self {
        Region::Box(b)
    }
}

/// A finite measure `sum w_i delta_{x_i}` with positive weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
    #[serde(skip)]
    index: OnceLock<GridIndex>,
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points && self.weights == other.weights
    }
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.dim())
            .ok_or(Error::Empty("measure needs atoms; use `empty`"))?;
        Self::with_dim(dim, points, weights)
    }

    /// Validates atoms against a declared dimension.
    pub fn with_dim(dim: usize, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        if points.len() != weights.len() {
            return Err(invalid("weights", "length differs from number of atoms"));
        }
        for (i, (p, w)) in points.iter().zip(&weights).enumerate() {
            check_dim(dim, p.dim())?;
            if !p.is_finite() {
                return Err(Error::Input(format!(
                    "atom {i} has a non-finite coordinate"
                )));
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Input(format!(
                    "atom {i} has nonpositive or non-finite weight {w}"
                )));
            }
        }
        Ok(DiscreteMeasure {
            dim,
            points,
            weights,
            index: OnceLock::new(),
        })
    }

    pub fn empty(dim: usize) -> Self {
        DiscreteMeasure {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
            index: OnceLock::new(),
        }
    }

    /// Unit-weight atoms at the given points.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Union of two measures of the same dimension.
    pub fn join(&self, other: &DiscreteMeasure) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut p = self.points.clone();
        p.extend(other.points.iter().cloned());
        let mut w = self.weights.clone();
        w.extend(other.weights.iter().copied());
        Self::with_dim(self.dim, p, w)
    }

    /// Multiplies all weights by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_dim(
            self.dim,
            self.points.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }

    fn index(&self) -> &GridIndex {
        self.index
            .get_or_init(|| GridIndex::build(&self.points, self.dim))
    }

    /// Indices of atoms in the region, in increasing order.
    pub fn atoms_in(&self, region: &Region) -> Result<Vec<usize>> {
        check_dim(self.dim, region.dim())?;
        let (lo, hi) = region.bounds();
        let mut out = self.index().candidates(&lo, &hi);
        out.retain(|&i| region.contains(&self.points[i]));
        Ok(out)
    }

    /// `mu(region)`.
    pub fn mass(&self, region: &Region) -> Result<f64> {
        Ok(self
            .atoms_in(region)?
            .iter()
            .map(|&i| self.weights[i])
            .sum())
    }

    /// The restriction `mu|_E` as a new measure (possibly empty).
    pub fn restrict(&self, region: &Region) -> Result<Self> {
        let idx = self.atoms_in(region)?;
        Ok(DiscreteMeasure {
            dim: self.dim,
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            index: OnceLock::new(),
        })
    }

    /// Weighted mean of the atoms in the region.
    pub fn center_of_mass(&self, region: &Region) -> Result<Point> {
        let idx = self.atoms_in(region)?;
        weighted_mean(
            self.dim,
            idx.iter()
                .map(|&i| (self.points[i].coords(), self.weights[i])),
        )
        .ok_or_else(|| Error::ZeroMass("center of mass of a null region".into()))
    }

    /// Closed bounding box corners of the support.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.points.first()?;
        let mut lo = first.0.clone();
        let mut hi = first.0.clone();
        for p in &self.points {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Some((lo, hi))
    }

    /// Diameter of the support (exact, quadratic in the number of atoms).
    pub fn support_diam(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                best = best.max(dist_sq(&self.points[i], &self.points[j]));
            }
        }
        best.sqrt()
    }

    /// Ratios `mu(B(x, r)) / 2r` over a decreasing radius ladder.
    pub fn density_profile(&self, x: &[f64], radii: &[f64]) -> Result<DensityProfile> {
        check_dim(self.dim, x.len())?;
        check_radii(radii, true)?;
        let mut ratios = Vec::with_capacity(radii.len());
        let mut running_min = Vec::with_capacity(radii.len());
        let mut current = f64::INFINITY;
        for &r in radii {
            let m = self.mass(&Region::Ball {
                center: Point::from(x),
                radius: r,
            })?;
            let ratio = m / (2.0 * r);
            current = current.min(ratio);
            ratios.push(ratio);
            running_min.push(current);
        }
        Ok(DensityProfile {
            radii: radii.to_vec(),
            ratios,
            running_min,
            lower_estimate: current,
        })
    }

    /// Ratios `mu(B(x, 2r)) / mu(B(x, r))`; radii with `mu(B(x, r)) = 0` are gaps.
    pub fn doubling_profile(&self, x: &[f64], radii: &[f64]) -> Result<DoublingProfile> {
        check_dim(self.dim, x.len())?;
        check_radii(radii, false)?;
        let ball = |r: f64| {
            self.mass(&Region::Ball {
                center: Point::from(x),
                radius: r,
            })
        };
        let mut ratios = Vec::with_capacity(radii.len());
        let mut gaps = Vec::new();
        let mut estimate: f64 = 0.0;
        for (i, &r) in radii.iter().enumerate() {
            let inner = ball(r)?;
            if inner == 0.0 {
                ratios.push(None);
                gaps.push(i);
                continue;
            }
            let q = ball(2.0 * r)? / inner;
            estimate = estimate.max(q);
            ratios.push(Some(q));
        }
        Ok(DoublingProfile {
            radii: radii.to_vec(),
            ratios,
            gaps,
            estimate,
        })
    }
}

pub(crate) fn weighted_mean<'a>(
    dim: usize,
    atoms: impl Iterator<Item = (&'a [f64], f64)>,
) -> Option<Point> {
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (x, w) in atoms {
        for (a, xi) in acc.iter_mut().zip(x) {
            *a += w * xi;
        }
        total += w;
    }
    if total > 0.0 {
        Some(Point(acc.into_iter().map(|a| a / total).collect()))
    } else {
        None
    }
}

fn check_radii(radii: &[f64], decreasing: bool) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Empty("radius ladder"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(invalid("radii", "radii must be positive and finite"));
    }
    if decreasing && radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("radii", "radii must be strictly decreasing"));
    }
    Ok(())
}

/// Geometric ladder `r_top 2^{-j}`, `j = 0..steps`.
pub fn radius_ladder(r_top: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|j| r_top * (0.5f64).powi(j as i32))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub running_min: Vec<f64>,
    /// Minimum ratio over the ladder; an upper bound for the liminf at these scales.
    pub lower_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingProfile {
    pub radii: Vec<f64>,
    /// `None` marks a radius where the inner ball is null.
    pub ratios: Vec<Option<f64>>,
    pub gaps: Vec<usize>,
    /// Maximum of the defined ratios, 0 when all are gaps.
    pub estimate: f64,
}

/// Uniform grid bucketing of atoms for range queries.
#[derive(Clone, Debug)]
struct GridIndex {
    origin: Vec<f64>,
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    fn build(points: &[Point], dim: usize) -> Self {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points {
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        let per_axis = (points.len().max(1) as f64).powf(1.0 / dim as f64).ceil();
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let origin = if points.is_empty() {
            vec![0.0; dim]
        } else {
            lo
        };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = p
                .iter()
                .zip(&origin)
                .map(|(x, o)| ((x - o) / cell).floor() as i64)
                .collect();
            buckets.entry(key).or_default().push(i);
        }
        GridIndex {
            origin,
            cell,
            buckets,
        }
    }

    /// Superset of the atoms inside the closed box `[lo, hi]`, sorted.
    fn candidates(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let ranges: Vec<(i64, i64)> = lo
            .iter()
            .zip(hi)
            .zip(&self.origin)
            .map(|((l, h), o)| {
                (
                    ((l - o) / self.cell).floor() as i64 - 1,
                    ((h - o) / self.cell).floor() as i64 + 1,
                )
            })
            .collect();
        let cells = ranges
            .iter()
            .map(|(a, b)| (b - a + 1).max(0) as f64)
            .product::<f64>();
        let mut out: Vec<usize> = if cells > self.buckets.len() as f64 {
            self.buckets
                .iter()
                .filter(|(key, _)| key.iter().zip(&ranges).all(|(c, (a, b))| a <= c && c <= b))
                .flat_map(|(_, v)| v.iter().copied())
                .collect()
        } else {
            let mut acc = Vec::new();
            let mut key: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            loop {
                if let Some(v) = self.buckets.get(&key) {
                    acc.extend(v.iter().copied());
                }
                let mut d = 0;
                loop {
                    if d == key.len() {
                        acc.sort_unstable();
                        return acc;
                    }
                    key[d] += 1;
                    if key[d] <= ranges[d].1 {
                        break;
                    }
                    key[d] = ranges[d].0;
                    d += 1;
                }
            }
        };
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[&[f64]]) -> Vec<Point> {
        v.iter().map(|p| Point(p.to_vec())).collect()
    }

    #[test]
    fn half_open_cube_mass() {
        let mu = DiscreteMeasure::uniform(pts(&[&[1.0, 0.5], &[0.5, 0.5]])).unwrap();
        let q0 = Region::Cube(DyadicCube::new(0, vec![0, 0]));
        let q1 = Region::Cube(DyadicCube::new(0, vec![1, 0]));
        assert_eq!(mu.mass(&q0).unwrap(), 1.0);
        assert_eq!(mu.mass(&q1).unwrap(), 1.0);
        let empty = Region::Cube(DyadicCube::new(0, vec![5, 5]));
        assert_eq!(mu.mass(&empty).unwrap(), 0.0);
    }

    #[test]
    fn centers_of_mass() {
        let mu = DiscreteMeasure::uniform(pts(&[&[0.0, 0.0], &[1.0, 2.0]])).unwrap();
        let all = Region::Ball {
            center: Point(vec![0.0, 0.0]),
            radius: 10.0,
        };
        assert_eq!(mu.center_of_mass(&all).unwrap().0, vec![0.5, 1.0]);
        let none = Region::Ball {
            center: Point(vec![50.0, 0.0]),
            radius: 1.0,
        };
        assert!(matches!(mu.center_of_mass(&none), Err(Error::ZeroMass(_))));
    }

    #[test]
    fn profiles() {
        let mu = DiscreteMeasure::new(pts(&[&[0.0]]), vec![3.0]).unwrap();
        let d = mu.density_profile(&[0.0], &[4.0, 2.0, 1.0]).unwrap();
        assert_eq!(d.ratios, vec![3.0 / 8.0, 3.0 / 4.0, 3.0 / 2.0]);
        let far = mu.density_profile(&[10.0], &[1.0]).unwrap();
        assert_eq!(far.ratios, vec![0.0]);
        let db = mu.doubling_profile(&[0.0], &[1.0, 0.5]).unwrap();
        assert_eq!(db.ratios, vec![Some(1.0), Some(1.0)]);
        let gap = mu.doubling_profile(&[10.0], &[1.0]).unwrap();
        assert_eq!(gap.gaps, vec![0]);
        assert_eq!(gap.estimate, 0.0);
        assert!(mu.density_profile(&[0.0], &[]).is_err());
        assert!(mu.density_profile(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_bad_atoms() {
        assert!(DiscreteMeasure::new(pts(&[&[0.0]]), vec![0.0]).is_err());
        assert!(DiscreteMeasure::new(pts(&[&[0.0], &[0.0, 1.0]]), vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::new(pts(&[&[f64::NAN]]), vec![1.0]).is_err());
    }
}
