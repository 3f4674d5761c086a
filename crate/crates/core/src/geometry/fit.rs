//! Line fitting for weighted point sets under `L^p` and sup objectives.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{dot, lex_cmp, norm, Line, Point};
use crate::error::{check_dim, invalid, Error, Result};
use crate::optim::{golden_section, nelder_mead};

/// Objective selector for line fitting.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    /// Weighted mean of `dist^p`, `p >= 1`.
    P(f64),
    /// Maximum distance; weights are ignored.
    Sup,
}

impl Norm {
    fn validate(self) -> Result<()> {
        match self {
            Norm::P(p) if !(p.is_finite() && p >= 1.0) => {
                Err(invalid("p", format!("{p} is not a finite exponent >= 1")))
            }
            _ => Ok(()),
        }
    }
}

/// A fitted line together with the value of the fitting objective.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub line: Line,
    pub objective: f64,
}

/// Fits a line to weighted atoms.
///
/// For `Norm::P(2.0)` the result is the exact minimizer of the weighted mean
/// squared distance (line through the centroid along the top principal axis).
/// Other exponents and the sup objective use the strategies described on
/// [`fit_line_with_seeds`].
pub fn fit_line(points: &[Point], weights: &[f64], norm: Norm) -> Result<LineFit> {
    fit_line_with_seeds(points, weights, norm, &[])
}

/// Like [`fit_line`], additionally starting local searches from `seeds`.
///
/// * `P(2)`: closed form.
/// * `P(1)` in the plane with at most 300 distinct atoms: exact, by enumerating
///   lines through atom pairs (an optimal `L^1` line always passes through two atoms).
/// * other `P(p)`: iteratively reweighted principal axes from the `P(2)` line and
///   eight rotated seeds, plus an angle scan with exact convex offset search in the plane.
/// * `Sup` in the plane: exact minimal-width strip over convex hull edges; in higher
///   dimension the `P(2)` seed refined by simplex search.
pub fn fit_line_with_seeds(
    points: &[Point],
    weights: &[f64],
    norm: Norm,
    seeds: &[Line],
) -> Result<LineFit> {
    norm.validate()?;
    if points.is_empty() {
        return Err(Error::Empty("fit_line needs at least one atom"));
    }
    if weights.len() != points.len() {
        return Err(invalid("weights", "length differs from number of atoms"));
    }
    let dim = points[0].dim();
    for p in points {
        check_dim(dim, p.dim())?;
    }
    let refs: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
    fit_refs(&refs, weights, norm, seeds)
}

pub(crate) fn fit_refs(
    points: &[&[f64]],
    weights: &[f64],
    norm: Norm,
    seeds: &[Line],
) -> Result<LineFit> {
    match norm {
        Norm::Sup => fit_sup(points, seeds),
        Norm::P(p) => {
            let total: f64 = weights.iter().sum();
            if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(invalid("weights", "weights must be finite and nonnegative"));
            }
            if total.is_nan() || total <= 0.0 {
                return Err(Error::ZeroMass("fit_line: total weight is zero".into()));
            }
            let (line, _) = principal_line(points, weights);
            if p == 2.0 {
                let objective = objective_p(points, weights, &line, 2.0);
                return Ok(LineFit { line, objective });
            }
            fit_p(points, weights, p, line, seeds)
        }
    }
}

/// Weighted mean of `dist^p` to `line`.
pub(crate) fn objective_p(points: &[&[f64]], weights: &[f64], line: &Line, p: f64) -> f64 {
    let mut s = 0.0;
    let mut total = 0.0;
    for (x, w) in points.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let d = line.dist(x);
        s += w * pow_p(d, p);
        total += w;
    }
    if total > 0.0 {
        s / total
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn pow_p(d: f64, p: f64) -> f64 {
    if p == 2.0 {
        d * d
    } else if p == 1.0 {
        d
    } else {
        d.powf(p)
    }
}

pub(crate) fn objective_sup(points: &[&[f64]], line: &Line) -> f64 {
    points.iter().map(|x| line.dist(x)).fold(0.0, f64::max)
}

/// Weighted centroid and principal axis; returns the line and its mean squared distance.
pub(crate) fn principal_line(points: &[&[f64]], weights: &[f64]) -> (Line, f64) {
    let n = points[0].len();
    let mut support = points
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, _)| *x);
    if let Some(first) = support.next() {
        if support.all(|x| x == first) {
            return (Line::axis(Point::from(first), 0), 0.0);
        }
    }
    let total: f64 = weights.iter().sum();
    let mut centroid = vec![0.0; n];
    for (x, w) in points.iter().zip(weights) {
        for (c, xi) in centroid.iter_mut().zip(x.iter()) {
            *c += w * xi;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= total);
    let mut scatter = DMatrix::<f64>::zeros(n, n);
    for (x, w) in points.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        for i in 0..n {
            let di = x[i] - centroid[i];
            for j in i..n {
                let v = w * di * (x[j] - centroid[j]);
                scatter[(i, j)] += v;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            scatter[(i, j)] = scatter[(j, i)];
        }
    }
    let (direction, top) = top_axis(&scatter);
    let trace: f64 = (0..n).map(|i| scatter[(i, i)]).sum();
    let line = Line {
        base: Point(centroid),
        direction,
    };
    (line, ((trace - top) / total).max(0.0))
}

/// Top eigenvector of a symmetric matrix with deterministic tie-breaking:
/// within a repeated top eigenspace the lexicographically largest unit vector is used.
fn top_axis(m: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        let mut d = vec![0.0; n];
        d[0] = 1.0;
        return (d, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let top = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * scale.max(top.abs());
    let space: Vec<Vec<f64>> = (0..n)
        .filter(|&i| (eig.eigenvalues[i] - top).abs() <= tol)
        .map(|i| eig.eigenvectors.column(i).iter().cloned().collect())
        .collect();
    let mut direction = if space.len() == 1 {
        space[0].clone()
    } else {
        let mut chosen = None;
        for axis in 0..n {
            let mut v = vec![0.0; n];
            for u in &space {
                let c = u[axis];
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi += c * ui;
                }
            }
            let len = norm(&v);
            if len > 1e-9 {
                v.iter_mut().for_each(|x| *x /= len);
                chosen = Some(v);
                break;
            }
        }
        chosen.unwrap_or_else(|| space[0].clone())
    };
    let len = norm(&direction);
    direction.iter_mut().for_each(|x| *x /= len);
    super::canonical_sign(&mut direction);
    (direction, top)
}

fn rotated_seeds(seed: &Line, count: usize) -> Vec<Line> {
    let n = seed.dim();
    let d = &seed.direction;
    let mut axis = 0;
    for i in 0..n {
        if d[i].abs() < d[axis].abs() {
            axis = i;
        }
    }
    let mut w = vec![0.0; n];
    w[axis] = 1.0;
    let proj = dot(&w, d);
    for (wi, di) in w.iter_mut().zip(d) {
        *wi -= proj * di;
    }
    let len = norm(&w);
    w.iter_mut().for_each(|x| *x /= len);
    (1..=count)
        .map(|i| {
            let a = i as f64 * std::f64::consts::PI / (count as f64 + 1.0);
            let dir: Vec<f64> = d
                .iter()
                .zip(&w)
                .map(|(di, wi)| a.cos() * di + a.sin() * wi)
                .collect();
            Line::new(seed.base.clone(), dir).unwrap_or_else(|_| seed.clone())
        })
        .collect()
}

fn irls(points: &[&[f64]], weights: &[f64], p: f64, start: Line, scale: f64) -> (Line, f64) {
    let mut best = start.clone();
    let mut best_obj = objective_p(points, weights, &best, p);
    let mut current = start;
    let floor = 1e-12 * scale.max(1e-300);
    let mut reweighted = vec![0.0; weights.len()];
    for _ in 0..100 {
        for ((r, x), w) in reweighted.iter_mut().zip(points).zip(weights) {
            let d = current.dist(x).max(floor);
            *r = w * d.powf(p - 2.0);
        }
        let total = reweighted.iter().sum::<f64>();
        if total.is_nan() || total <= 0.0 {
            break;
        }
        let (next, _) = principal_line(points, &reweighted);
        let obj = objective_p(points, weights, &next, p);
        let improved = obj < best_obj * (1.0 - 1e-14);
        if obj < best_obj {
            best_obj = obj;
            best = next.clone();
        }
        current = next;
        if !improved {
            break;
        }
    }
    (best, best_obj)
}

fn extent(points: &[&[f64]]) -> f64 {
    let n = points[0].len();
    (0..n)
        .map(|i| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x[i]), hi.max(x[i]))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn fit_p(points: &[&[f64]], weights: &[f64], p: f64, l2: Line, seeds: &[Line]) -> Result<LineFit> {
    let scale = extent(points);
    let mut best = l2.clone();
    let mut best_obj = objective_p(points, weights, &best, p);
    if best_obj == 0.0 || scale == 0.0 {
        return Ok(LineFit {
            line: best,
            objective: best_obj,
        });
    }
    let mut consider = |line: Line, obj: f64| {
        if obj < best_obj {
            best_obj = obj;
            best = line;
        }
    };
    let mut starts = vec![l2.clone()];
    starts.extend(rotated_seeds(&l2, 8));
    starts.extend(seeds.iter().cloned());
    for s in starts {
        let (line, obj) = irls(points, weights, p, s, scale);
        consider(line, obj);
    }
    if points[0].len() == 2 {
        let distinct = distinct_atoms(points, weights);
        if p == 1.0 && distinct.0.len() <= 300 {
            let (line, obj) = exact_l1_plane(&distinct.0, &distinct.1);
            consider(line, obj);
        } else {
            let (line, obj) = angle_scan_plane(points, weights, p);
            consider(line, obj);
        }
    }
    Ok(LineFit {
        line: best,
        objective: best_obj,
    })
}

fn distinct_atoms<'a>(points: &[&'a [f64]], weights: &[f64]) -> (Vec<&'a [f64]>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| lex_cmp(points[a], points[b]));
    let mut pts: Vec<&[f64]> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for i in idx {
        if let Some(last) = pts.last() {
            if *last == points[i] {
                *ws.last_mut().unwrap() += weights[i];
                continue;
            }
        }
        pts.push(points[i]);
        ws.push(weights[i]);
    }
    (pts, ws)
}

fn exact_l1_plane(points: &[&[f64]], weights: &[f64]) -> (Line, f64) {
    if points.len() == 1 {
        return (Line::axis(Point::from(points[0]), 0), 0.0);
    }
    let mut best: Option<(Line, f64)> = None;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if let Ok(line) = Line::through(points[i], points[j]) {
                let obj = objective_p(points, weights, &line, 1.0);
                if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                    best = Some((line, obj));
                }
            }
        }
    }
    best.expect("at least two distinct atoms")
}

/// Line `{x : <x, u_theta> = c}` with `u_theta = (-sin theta, cos theta)`.
pub(crate) fn plane_line(theta: f64, c: f64) -> Line {
    let (s, co) = theta.sin_cos();
    let mut direction = vec![co, s];
    super::canonical_sign(&mut direction);
    Line {
        base: Point(vec![-s * c, co * c]),
        direction,
    }
}

fn angle_scan_plane(points: &[&[f64]], weights: &[f64], p: f64) -> (Line, f64) {
    let inner = |theta: f64| -> (f64, f64) {
        let (s, co) = theta.sin_cos();
        let proj: Vec<f64> = points.iter().map(|x| -s * x[0] + co * x[1]).collect();
        let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = weights.iter().sum();
        let f = |c: f64| {
            proj.iter()
                .zip(weights)
                .map(|(q, w)| w * pow_p((q - c).abs(), p))
                .sum::<f64>()
                / total
        };
        golden_section(f, lo, hi, 120)
    };
    let steps = 360;
    let mut scores: Vec<(f64, f64)> = (0..steps)
        .map(|i| {
            let theta = std::f64::consts::PI * i as f64 / steps as f64;
            (theta, inner(theta).1)
        })
        .collect();
    scores.sort_by(|a, b| a.1.total_cmp(&b.1));
    let h = std::f64::consts::PI / steps as f64;
    let mut best = (0.0, 0.0, f64::INFINITY);
    for &(theta, _) in scores.iter().take(4) {
        let (t, _) = golden_section(|t| inner(t).1, theta - h, theta + h, 80);
        let (c, v) = inner(t);
        if v < best.2 {
            best = (t, c, v);
        }
    }
    (plane_line(best.0, best.1), best.2)
}

/// Exact minimal-width strip of a planar point set via convex hull edges.
///
/// Returns the center line of the strip and its half-width (the minimal
/// possible maximum distance from the points to a line).
pub fn min_width_strip_2d(points: &[&[f64]]) -> Result<(Line, f64)> {
    if points.is_empty() {
        return Err(Error::Empty("min_width_strip_2d needs points"));
    }
    for p in points {
        check_dim(2, p.len())?;
    }
    let hull = convex_hull(points);
    if hull.len() == 1 {
        return Ok((Line::axis(Point(hull[0].to_vec()), 0), 0.0));
    }
    if hull.len() == 2 {
        return Ok((Line::through(&hull[0], &hull[1])?, 0.0));
    }
    let h = hull.len();
    let mut best: Option<(Line, f64)> = None;
    for i in 0..h {
        let a = &hull[i];
        let b = &hull[(i + 1) % h];
        let edge = [b[0] - a[0], b[1] - a[1]];
        let len = (edge[0] * edge[0] + edge[1] * edge[1]).sqrt();
        if len == 0.0 {
            continue;
        }
        let normal = [-edge[1] / len, edge[0] / len];
        let base = normal[0] * a[0] + normal[1] * a[1];
        let mut far: f64 = 0.0;
        for q in &hull {
            far = far.max((normal[0] * q[0] + normal[1] * q[1] - base).abs());
        }
        if best.as_ref().is_none_or(|(_, w)| far / 2.0 < *w) {
            let sign = {
                let mut s = 0.0;
                for q in &hull {
                    let v = normal[0] * q[0] + normal[1] * q[1] - base;
                    if v.abs() > s {
                        s = v;
                    }
                    if -v > s.abs() {
                        s = v;
                    }
                }
                if s < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            };
            let mid = [
                a[0] + sign * normal[0] * far / 2.0,
                a[1] + sign * normal[1] * far / 2.0,
            ];
            let line = Line::new(Point(mid.to_vec()), edge.to_vec())?;
            best = Some((line, far / 2.0));
        }
    }
    let (line, _) = best.ok_or_else(|| Error::Degenerate("hull without edges".into()))?;
    let width = objective_sup(points, &line);
    Ok((line, width))
}

fn convex_hull(points: &[&[f64]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| lex_cmp(a, b));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 2 {
        // All points collinear: keep the two extremes.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    lower
}

fn fit_sup(points: &[&[f64]], seeds: &[Line]) -> Result<LineFit> {
    let dim = points[0].len();
    if dim == 2 {
        let (line, objective) = min_width_strip_2d(points)?;
        return Ok(LineFit { line, objective });
    }
    let ones = vec![1.0; points.len()];
    let (l2, _) = principal_line(points, &ones);
    let scale = extent(points);
    let mut best = l2.clone();
    let mut best_obj = objective_sup(points, &best);
    if best_obj == 0.0 || scale == 0.0 {
        return Ok(LineFit {
            line: best,
            objective: best_obj,
        });
    }
    let mut starts = vec![l2.clone()];
    starts.extend(rotated_seeds(&l2, 4));
    starts.extend(seeds.iter().cloned());
    for start in starts {
        let (line, obj) = refine_line(start, scale, |l| objective_sup(points, l));
        if obj < best_obj {
            best_obj = obj;
            best = line;
        }
    }
    Ok(LineFit {
        line: best,
        objective: best_obj,
    })
}

/// Local simplex refinement of a line over `(direction, base)` perturbations.
pub(crate) fn refine_line<F: Fn(&Line) -> f64>(start: Line, scale: f64, f: F) -> (Line, f64) {
    let n = start.dim();
    let build = |x: &[f64]| -> Option<Line> {
        let dir: Vec<f64> = start
            .direction
            .iter()
            .zip(&x[..n])
            .map(|(d, e)| d + e)
            .collect();
        let base: Vec<f64> = start
            .base
            .iter()
            .zip(&x[n..])
            .map(|(b, e)| b + e * scale)
            .collect();
        Line::new(Point(base), dir).ok()
    };
    let mut best = (start.clone(), f(&start));
    for step in [0.2, 0.02] {
        let (x, v) = nelder_mead(
            |x| build(x).map(|l| f(&l)).unwrap_or(f64::INFINITY),
            &vec![0.0; 2 * n],
            step,
            400 * n,
            1e-13,
        );
        if v < best.1 {
            if let Some(l) = build(&x) {
                best = (l, v);
            }
        }
    }
    best
}
