#![allow(dead_code)]

use mrt::beta::MultiVariant;
use mrt::dyadic::{DyadicCube, NearbyCubes};
use mrt::geometry::{Line, Point};
use mrt::measure::{DiscreteMeasure, Region};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + floor
}

pub fn random_atoms(rng: &mut ChaCha8Rng, count: usize) -> (Vec<Point>, Vec<f64>) {
    let pts = (0..count)
        .map(|_| Point(vec![rng.gen::<f64>(), rng.gen::<f64>()]))
        .collect();
    let w = (0..count).map(|_| rng.gen_range(0.2..2.0)).collect();
    (pts, w)
}

/// Recomputes the multi-cube objective from the definition: every cube at the two
/// admissible scales whose triple holds an atom, filtered by the membership predicate.
pub fn multi_objective(
    mu: &DiscreteMeasure,
    q: &DyadicCube,
    p: f64,
    variant: MultiVariant,
) -> impl Fn(&Line) -> f64 {
    let mut cubes: Vec<DyadicCube> = Vec::new();
    for k in [q.k, q.k - 1] {
        for x in mu.points() {
            let c = DyadicCube::at(x, k);
            for dx in -2..=2 {
                for dy in -2..=2 {
                    let r = DyadicCube::new(k, vec![c.idx[0] + dx, c.idx[1] + dy]);
                    if NearbyCubes::satisfies_definition(q, &r) && !cubes.contains(&r) {
                        cubes.push(r);
                    }
                }
            }
        }
    }
    let mut terms: Vec<(Vec<usize>, f64, f64)> = Vec::new();
    for r in cubes {
        let region = Region::Box(r.triple());
        let atoms: Vec<usize> = (0..mu.len())
            .filter(|&i| region.contains(&mu.points()[i]))
            .collect();
        let m: f64 = atoms.iter().map(|&i| mu.weights()[i]).sum();
        let d = region.diam();
        if m == 0.0 {
            continue;
        }
        let s = match variant {
            MultiVariant::Star => (m / d).min(1.0).sqrt(),
            MultiVariant::StarStar => 1.0,
            MultiVariant::StarC(c) => {
                if m >= c * d {
                    c.min(1.0).sqrt()
                } else {
                    continue;
                }
            }
        };
        let term = (atoms, d, s);
        if !terms.contains(&term) {
            terms.push(term);
        }
    }
    let pts: Vec<Point> = mu.points().to_vec();
    let w: Vec<f64> = mu.weights().to_vec();
    move |l: &Line| {
        let dist: Vec<f64> = pts.iter().map(|x| l.dist(x)).collect();
        terms
            .iter()
            .map(|(atoms, d, s)| {
                let mut m = 0.0;
                let mut acc = 0.0;
                for &i in atoms {
                    let r = dist[i] / d;
                    acc += w[i] * if p == 2.0 { r * r } else { r.powf(p) };
                    m += w[i];
                }
                s * (acc / m).powf(1.0 / p)
            })
            .fold(0.0, f64::max)
    }
}
