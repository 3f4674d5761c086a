//! Points, affine lines, distances and line fitting in `R^n`.

pub(crate) mod fit;
pub mod oracle;
mod order;

pub use fit::{fit_line, fit_line_with_seeds, min_width_strip_2d, LineFit, Norm};
pub use order::{order_along_lines, OrderingWitness};

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A point of `R^n` stored as its coordinate vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dist(&self, other: &[f64]) -> f64 {
        dist(&self.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Lexicographic comparison of coordinates, used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        lex_cmp(&self.0, &other.0)
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Flips `v` so that its first nonzero coordinate is positive.
pub fn canonical_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|c| **c != 0.0) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

/// An affine line `base + t * direction` with a unit direction vector.
///
/// Directions are stored in canonical orientation (first nonzero coordinate
/// positive), so that projection orders along a line are deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub base: Point,
    pub direction: Vec<f64>,
}

impl Line {
    /// Builds a line through `base` with the given (not necessarily unit) direction.
    pub fn new(base: Point, direction: Vec<f64>) -> Result<Self> {
        check_dim(base.dim(), direction.len())?;
        if base.dim() == 0 {
            return Err(Error::Empty("line of dimension 0"));
        }
        let len = norm(&direction);
        if !(len.is_finite() && len > 0.0) || !base.is_finite() {
            return Err(Error::Degenerate(
                "line direction must be finite and nonzero".into(),
            ));
        }
        let mut direction: Vec<f64> = direction.iter().map(|c| c / len).collect();
        canonical_sign(&mut direction);
        Ok(Line { base, direction })
    }

    /// The line through two distinct points.
    pub fn through(a: &[f64], b: &[f64]) -> Result<Self> {
        Line::new(Point::from(a), sub(b, a))
    }

    /// The `i`-th coordinate axis translated to pass through `base`.
    pub fn axis(base: Point, i: usize) -> Self {
        let mut direction = vec![0.0; base.dim()];
        direction[i] = 1.0;
        Line { base, direction }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Signed coordinate of the orthogonal projection of `x` along the line.
    #[inline]
    pub fn param(&self, x: &[f64]) -> f64 {
        self.base
            .iter()
            .zip(&self.direction)
            .zip(x)
            .map(|((b, d), xi)| (xi - b) * d)
            .sum()
    }

    #[inline]
    pub fn point_at(&self, t: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + t * d)
            .collect()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.point_at(self.param(x))
    }

    /// Euclidean distance from `x` to the line (no dimension check).
    #[inline]
    pub fn dist(&self, x: &[f64]) -> f64 {
        let t = self.param(x);
        let mut s = 0.0;
        for ((xi, b), d) in x.iter().zip(self.base.iter()).zip(&self.direction) {
            let r = xi - b - t * d;
            s += r * r;
        }
        s.sqrt()
    }
}

/// Distance from a point to an affine line.
pub fn dist_to_line(x: &[f64], line: &Line) -> Result<f64> {
    check_dim(line.dim(), x.len())?;
    Ok(line.dist(x))
}

/// Excess `max_{s in S} min_{t in T} |s - t|` of `S` over `T`.
pub fn excess(s: &[Point], t: &[Point]) -> Result<f64> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::Empty("excess requires nonempty sets"));
    }
    let dim = s[0].dim();
    for p in s.iter().chain(t) {
        check_dim(dim, p.dim())?;
    }
    let mut worst: f64 = 0.0;
    for a in s {
        let mut best = f64::INFINITY;
        for b in t {
            let d = dist_sq(a, b);
            if d < best {
                best = d;
                if best <= worst * worst {
                    break;
                }
            }
        }
        worst = worst.max(best.sqrt());
    }
    Ok(worst)
}

/// Hausdorff distance between two finite point sets.
pub fn hausdorff(s: &[Point], t: &[Point]) -> Result<f64> {
    Ok(excess(s, t)?.max(excess(t, s)?))
}

/// Distance from `x` to the closed segment `[a, b]`.
pub fn dist_to_segment(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return dist(x, a);
    }
    let t = (dot(&sub(x, a), &ab) / len2).clamp(0.0, 1.0);
    let proj = lerp(a, b, t);
    dist(x, &proj)
}

/// Minimum distance between the closed segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_distance(p1: &[f64], q1: &[f64], p2: &[f64], q2: &[f64]) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);
    let (s, t);
    if a <= 0.0 && e <= 0.0 {
        return dist(p1, p2);
    }
    if a <= 0.0 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(&d1, &r);
        if e <= 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(&d1, &d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-300 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = lerp(p1, q1, s);
    let c2 = lerp(p2, q2, t);
    let direct = dist(&c1, &c2);
    // Endpoint checks guard against round-off in nearly parallel configurations.
    direct
        .min(dist_to_segment(p1, p2, q2))
        .min(dist_to_segment(q1, p2, q2))
        .min(dist_to_segment(p2, p1, q1))
        .min(dist_to_segment(q2, p1, q1))
}
