//! Exhaustive grid search over lines, intended as an independent check on the
//! fitting routines.
//!
//! In the plane a line is `{x : <x, (-sin t, cos t)> = c}` with `t` in `[0, pi)` and
//! `c` ranging over the projections of the supplied points; in space the
//! direction runs over a Fibonacci grid of the upper hemisphere and the offset over
//! a square grid in the orthogonal plane. After the coarse pass the best cells are
//! refined by repeated zooming: in the plane the offset grid of every angle is
//! refined three times by a factor of five, then the 16 best local minima over the
//! angle grid are each zoomed by a 25 x 25 grid shrinking sixfold per level.

use super::fit::{objective_p, objective_sup, plane_line};
use super::{dot, norm, Line, LineFit, Norm, Point};
use crate::error::{check_dim, invalid, Error, Result};

/// Grid resolution of the oracle.
#[derive(Clone, Copy, Debug)]
pub struct OracleResolution {
    /// Number of directions (angles in the plane, hemisphere samples in space).
    pub directions: usize,
    /// Offsets per axis of the offset grid.
    pub offsets: usize,
    /// Number of local zoom passes after the coarse grid.
    pub zoom_levels: usize,
}

impl Default for OracleResolution {
    fn default() -> Self {
        OracleResolution {
            directions: 3600,
            offsets: 200,
            zoom_levels: 6,
        }
    }
}

/// Number of coarse local minima refined by zooming.
const SEEDS: usize = 16;

impl OracleResolution {
    /// The default grid in the plane; a coarser grid in space.
    pub fn for_dim(dim: usize) -> Self {
        if dim == 2 {
            Self::default()
        } else {
            OracleResolution {
                directions: 2000,
                offsets: 40,
                zoom_levels: 3,
            }
        }
    }
}

/// Grid-search approximation of the best line for weighted atoms.
pub fn brute_force_line_oracle(points: &[Point], weights: &[f64], norm: Norm) -> Result<LineFit> {
    let dim = points
        .first()
        .map(|p| p.dim())
        .ok_or(Error::Empty("oracle needs atoms"))?;
    brute_force_line_oracle_with(points, weights, norm, OracleResolution::for_dim(dim))
}

pub fn brute_force_line_oracle_with(
    points: &[Point],
    weights: &[f64],
    norm: Norm,
    resolution: OracleResolution,
) -> Result<LineFit> {
    if points.is_empty() {
        return Err(Error::Empty("oracle needs atoms"));
    }
    if weights.len() != points.len() {
        return Err(invalid("weights", "length differs from number of atoms"));
    }
    let refs: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
    let objective = |l: &Line| match norm {
        Norm::P(p) => objective_p(&refs, weights, l, p),
        Norm::Sup => objective_sup(&refs, l),
    };
    minimize_over_lines(points, objective, resolution)
}

/// Grid-search minimization of an arbitrary objective over lines.
///
/// `points` determine the offset search range; the objective should be
/// nonincreasing when a line is moved towards their convex hull.
pub fn minimize_over_lines<F: Fn(&Line) -> f64>(
    points: &[Point],
    objective: F,
    resolution: OracleResolution,
) -> Result<LineFit> {
    let dim = points
        .first()
        .map(|p| p.dim())
        .ok_or(Error::Empty("oracle needs atoms"))?;
    for p in points {
        check_dim(dim, p.dim())?;
    }
    match dim {
        2 => Ok(plane(points, &objective, resolution)),
        3 => Ok(space(points, &objective, resolution)),
        d => Err(Error::Unsupported(format!("line oracle in dimension {d}"))),
    }
}

fn plane<F: Fn(&Line) -> f64>(points: &[Point], objective: &F, res: OracleResolution) -> LineFit {
    let span = |t: f64| {
        let (s, c) = t.sin_cos();
        points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                let q = -s * x[0] + c * x[1];
                (lo.min(q), hi.max(q))
            })
    };
    let dt = std::f64::consts::PI / res.directions as f64;
    let per_angle: Vec<(f64, f64, f64)> = (0..res.directions)
        .map(|i| {
            let t = i as f64 * dt;
            let (lo, hi) = span(t);
            let mut best = (t, lo, f64::INFINITY);
            for j in 0..=res.offsets {
                let c = lo + (hi - lo) * j as f64 / res.offsets as f64;
                let v = objective(&plane_line(t, c));
                if v < best.2 {
                    best = (t, c, v);
                }
            }
            let mut half = (hi - lo) / res.offsets as f64;
            for _ in 0..3 {
                let c0 = best.1;
                for j in 0..=20 {
                    let c = c0 - half + half * j as f64 / 10.0;
                    let v = objective(&plane_line(t, c));
                    if v < best.2 {
                        best = (t, c, v);
                    }
                }
                half /= 5.0;
            }
            best
        })
        .collect();
    let m = per_angle.len();
    let mut seeds: Vec<(f64, f64, f64)> = (0..m)
        .filter(|&i| {
            let v = per_angle[i].2;
            v <= per_angle[(i + m - 1) % m].2 && v <= per_angle[(i + 1) % m].2
        })
        .map(|i| per_angle[i])
        .collect();
    seeds.sort_by(|a, b| a.2.total_cmp(&b.2));
    seeds.truncate(SEEDS);
    let mut best = seeds[0];
    let steps = 24;
    for seed in seeds {
        let (lo, hi) = span(seed.0);
        let mut local = seed;
        let mut half_t = dt;
        let mut half_c = ((hi - lo) / res.offsets as f64).max(1e-300);
        for _ in 0..res.zoom_levels {
            let (t0, c0) = (local.0, local.1);
            for i in 0..=steps {
                let t = t0 - half_t + 2.0 * half_t * i as f64 / steps as f64;
                for j in 0..=steps {
                    let c = c0 - half_c + 2.0 * half_c * j as f64 / steps as f64;
                    let v = objective(&plane_line(t, c));
                    if v < local.2 {
                        local = (t, c, v);
                    }
                }
            }
            half_t /= steps as f64 / 4.0;
            half_c /= steps as f64 / 4.0;
        }
        if local.2 < best.2 {
            best = local;
        }
    }
    LineFit {
        line: plane_line(best.0, best.1),
        objective: best.2,
    }
}

fn orthonormal_complement(d: &[f64]) -> ([f64; 3], [f64; 3]) {
    let helper = if d[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let p = dot(&helper, d);
    let mut u = [
        helper[0] - p * d[0],
        helper[1] - p * d[1],
        helper[2] - p * d[2],
    ];
    let lu = norm(&u);
    u.iter_mut().for_each(|x| *x /= lu);
    let v = [
        d[1] * u[2] - d[2] * u[1],
        d[2] * u[0] - d[0] * u[2],
        d[0] * u[1] - d[1] * u[0],
    ];
    (u, v)
}

fn space<F: Fn(&Line) -> f64>(points: &[Point], objective: &F, res: OracleResolution) -> LineFit {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let m = res.directions;
    let directions: Vec<[f64; 3]> = (0..m)
        .map(|i| {
            let z = (i as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    let scan = |d: &[f64; 3],
                center: Option<(f64, f64, f64)>,
                g: usize,
                best: &mut (Vec<f64>, [f64; 2], f64)| {
        let (u, v) = orthonormal_complement(d);
        let (ulo, uhi, vlo, vhi) = match center {
            Some((a, b, h)) => (a - h, a + h, b - h, b + h),
            None => points.iter().fold(
                (
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                ),
                |(a, b, c, e), x| {
                    let pu = dot(x, &u);
                    let pv = dot(x, &v);
                    (a.min(pu), b.max(pu), c.min(pv), e.max(pv))
                },
            ),
        };
        for i in 0..=g {
            let a = ulo + (uhi - ulo) * i as f64 / g as f64;
            for j in 0..=g {
                let b = vlo + (vhi - vlo) * j as f64 / g as f64;
                let base: Vec<f64> = (0..3).map(|k| a * u[k] + b * v[k]).collect();
                let line = Line {
                    base: Point(base),
                    direction: canonical(d),
                };
                let val = objective(&line);
                if val < best.2 {
                    *best = (d.to_vec(), [a, b], val);
                }
            }
        }
    };
    let mut best = (vec![1.0, 0.0, 0.0], [0.0, 0.0], f64::INFINITY);
    for d in &directions {
        scan(d, None, res.offsets, &mut best);
    }
    let extent = points
        .iter()
        .flat_map(|p| points.iter().map(move |q| super::dist(p, q)))
        .fold(0.0, f64::max);
    let mut cap = (4.0 * std::f64::consts::PI / m as f64).sqrt() * 2.0;
    let mut half = extent / res.offsets as f64 * 2.0;
    for _ in 0..res.zoom_levels {
        let d0 = [best.0[0], best.0[1], best.0[2]];
        let (u0, v0) = orthonormal_complement(&d0);
        let base0: Vec<f64> = (0..3)
            .map(|k| best.1[0] * u0[k] + best.1[1] * v0[k])
            .collect();
        let steps = 12;
        for i in 0..=steps {
            for j in 0..=steps {
                let a = cap * (2.0 * i as f64 / steps as f64 - 1.0);
                let b = cap * (2.0 * j as f64 / steps as f64 - 1.0);
                let mut d: Vec<f64> = (0..3).map(|k| d0[k] + a * u0[k] + b * v0[k]).collect();
                let l = norm(&d);
                d.iter_mut().for_each(|x| *x /= l);
                let d = [d[0], d[1], d[2]];
                let (u, v) = orthonormal_complement(&d);
                let center = (dot(&base0, &u), dot(&base0, &v), half);
                scan(&d, Some(center), 12, &mut best);
            }
        }
        cap /= 4.0;
        half /= 4.0;
    }
    let d = [best.0[0], best.0[1], best.0[2]];
    let (u, v) = orthonormal_complement(&d);
    let base: Vec<f64> = (0..3)
        .map(|k| best.1[0] * u[k] + best.1[1] * v[k])
        .collect();
    LineFit {
        line: Line {
            base: Point(base),
            direction: canonical(&d),
        },
        objective: best.2,
    }
}

fn canonical(d: &[f64; 3]) -> Vec<f64> {
    let mut v = d.to_vec();
    super::canonical_sign(&mut v);
    v
}
