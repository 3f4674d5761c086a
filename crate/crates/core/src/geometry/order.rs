use serde::{Deserialize, Serialize};

use super::{dist, dot, Line, Point};
use crate::error::{check_dim, invalid, Error, Result};

/// Compatible orientations of two lines along which a separated point set is ordered.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingWitness {
    /// Indices into the input set, sorted by parameter along the first line.
    pub order: Vec<usize>,
    /// Sign (`+1` or `-1`) applied to each line's stored direction.
    pub orientation: [f64; 2],
    /// Oriented parameters of the ordered points along each line.
    pub params: [Vec<f64>; 2],
    /// Largest ratio `|v_{i+1} - v_i| / |pi_1(v_{i+1}) - pi_1(v_i)|` over consecutive points.
    pub consecutive_factor: f64,
    /// Ratio of lengths of a segment of the second line and its projection onto the first.
    pub cross_factor: f64,
    /// `1 + 3 alpha^2`.
    pub consecutive_bound: f64,
    /// `1 + 12 alpha^2`.
    pub cross_bound: f64,
}

impl OrderingWitness {
    pub fn bounds_hold(&self) -> bool {
        self.consecutive_factor <= self.consecutive_bound * (1.0 + 1e-12)
            && self.cross_factor <= self.cross_bound * (1.0 + 1e-12)
    }
}

/// Orders a 1-separated set that lies within `alpha <= 1/16` of two lines and
/// orients the lines so that both projection orders agree.
///
/// Hypothesis violations are reported as errors naming the offending points.
/// Order disagreement under the returned orientations is reported as
/// [`Error::Construction`], which cannot happen when the hypotheses hold.
pub fn order_along_lines(v: &[Point], l1: &Line, l2: &Line, alpha: f64) -> Result<OrderingWitness> {
    if v.len() < 2 {
        return Err(Error::Hypothesis(format!(
            "need at least two points, got {}",
            v.len()
        )));
    }
    if !(0.0..=1.0 / 16.0).contains(&alpha) {
        return Err(invalid("alpha", format!("{alpha} outside [0, 1/16]")));
    }
    let n = l1.dim();
    check_dim(n, l2.dim())?;
    for p in v {
        check_dim(n, p.dim())?;
    }
    let slack = 1e-12;
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            let d = dist(&v[i], &v[j]);
            if d < 1.0 - slack {
                return Err(Error::Hypothesis(format!(
                    "points {i} and {j} are {d} apart, not 1-separated"
                )));
            }
        }
        for (which, l) in [(1, l1), (2, l2)] {
            let d = l.dist(&v[i]);
            if d > alpha + slack {
                return Err(Error::Hypothesis(format!(
                    "point {i} is {d} from line {which}, above alpha = {alpha}"
                )));
            }
        }
    }
    let t1: Vec<f64> = v.iter().map(|p| l1.param(p)).collect();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| t1[a].total_cmp(&t1[b]));
    let t2: Vec<f64> = v.iter().map(|p| l2.param(p)).collect();
    let first = order[0];
    let last = order[order.len() - 1];
    let s2 = if t2[last] >= t2[first] { 1.0 } else { -1.0 };
    let p1: Vec<f64> = order.iter().map(|&i| t1[i]).collect();
    let p2: Vec<f64> = order.iter().map(|&i| s2 * t2[i]).collect();
    for w in 0..order.len() - 1 {
        if !(p1[w] < p1[w + 1] && p2[w] < p2[w + 1]) {
            return Err(Error::Construction(format!(
                "projection orders disagree between points {} and {}",
                order[w],
                order[w + 1]
            )));
        }
    }
    let mut consecutive_factor: f64 = 1.0;
    for w in 0..order.len() - 1 {
        let len = dist(&v[order[w]], &v[order[w + 1]]);
        consecutive_factor = consecutive_factor.max(len / (p1[w + 1] - p1[w]));
    }
    let cos = dot(&l1.direction, &l2.direction).abs();
    let cross_factor = if cos > 0.0 { 1.0 / cos } else { f64::INFINITY };
    Ok(OrderingWitness {
        order,
        orientation: [1.0, s2],
        params: [p1, p2],
        consecutive_factor,
        cross_factor,
        consecutive_bound: 1.0 + 3.0 * alpha * alpha,
        cross_bound: 1.0 + 12.0 * alpha * alpha,
    })
}
