//! Density-normalized Jones functions along the dyadic chain of a point, and
//! square sums of beta numbers over cube families.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{beta_sup_set, BetaEngine, MultiVariant};
use crate::dyadic::{CubeTree, DyadicCube};
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::Point;
use crate::measure::{DiscreteMeasure, Region};

/// Deepest scale probed when choosing a default truncation.
pub const MAX_DEFAULT_DEPTH: i32 = 48;

/// Which beta number feeds the Jones sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name", content = "c")]
pub enum JonesVariant {
    Star,
    /// `beta_p(mu, 3Q)` with the best line for the triple alone.
    Tilde,
    StarStar,
    StarC(f64),
}

impl JonesVariant {
    fn multi(self) -> Option<MultiVariant> {
        match self {
            JonesVariant::Star => Some(MultiVariant::Star),
            JonesVariant::StarStar => Some(MultiVariant::StarStar),
            JonesVariant::StarC(c) => Some(MultiVariant::StarC(c)),
            JonesVariant::Tilde => None,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            JonesVariant::StarC(c) if !(c.is_finite() && c > 0.0) => {
                Err(invalid("c", format!("{c} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// One cube of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JonesTerm {
    pub cube: DyadicCube,
    pub beta_sq: f64,
    pub diam: f64,
    /// `mu(Q)` of the half-open cube.
    pub mass: f64,
    /// `beta^2 diam / mass`; 0 for `0/0` and for divergent terms.
    pub term: f64,
    /// `mu(Q) = 0` while `beta > 0`.
    pub divergent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JonesReport {
    pub point: Point,
    pub variant: JonesVariant,
    pub p: f64,
    pub k_max: i32,
    pub terms: Vec<JonesTerm>,
    /// Sum of the finite terms.
    pub sum: f64,
    pub divergent: bool,
    /// First cube whose term is `1/0`.
    pub divergent_cube: Option<DyadicCube>,
}

impl JonesReport {
    /// Sum over scales `0..=k`.
    pub fn partial_sum(&self, k: i32) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.cube.k <= k)
            .map(|t| t.term)
            .sum()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(invalid("p", format!("{p} is not a finite exponent >= 1")))
    }
}

/// The first scale `k >= 0` whose chain cube through `x` holds at most one atom,
/// capped at [`MAX_DEFAULT_DEPTH`].
pub fn default_k_max(mu: &DiscreteMeasure, x: &[f64]) -> Result<i32> {
    check_dim(mu.dim(), x.len())?;
    for k in 0..MAX_DEFAULT_DEPTH {
        let q = DyadicCube::at(x, k);
        if mu.atoms_in(&Region::Cube(q))?.len() <= 1 {
            return Ok(k);
        }
    }
    Ok(MAX_DEFAULT_DEPTH)
}

/// Truncated Jones function at `x` over scales `0..=k_max`.
pub fn jones_at(
    mu: &DiscreteMeasure,
    x: &[f64],
    p: f64,
    k_max: i32,
    variant: JonesVariant,
) -> Result<JonesReport> {
    jones_with(&BetaEngine::new(mu), x, p, k_max, variant)
}

/// As [`jones_at`], reusing the caches of `engine`.
pub fn jones_with(
    engine: &BetaEngine,
    x: &[f64],
    p: f64,
    k_max: i32,
    variant: JonesVariant,
) -> Result<JonesReport> {
    check_p(p)?;
    variant.validate()?;
    let mu = engine.measure();
    check_dim(mu.dim(), x.len())?;
    if k_max < 0 {
        return Err(invalid("k_max", format!("{k_max} is negative")));
    }
    let chain: Vec<DyadicCube> = (0..=k_max).map(|k| DyadicCube::at(x, k)).collect();
    let terms = chain
        .par_iter()
        .map(|q| chain_term(engine, q, p, variant))
        .collect::<Result<Vec<_>>>()?;
    let sum = terms.iter().map(|t| t.term).sum();
    let divergent_cube = terms.iter().find(|t| t.divergent).map(|t| t.cube.clone());
    Ok(JonesReport {
        point: Point::from(x),
        variant,
        p,
        k_max,
        terms,
        sum,
        divergent: divergent_cube.is_some(),
        divergent_cube,
    })
}

/// Jones reports at every atom, in atom order. `k_max = None` uses [`default_k_max`] per atom.
pub fn jones_at_atoms(
    engine: &BetaEngine,
    p: f64,
    k_max: Option<i32>,
    variant: JonesVariant,
) -> Result<Vec<JonesReport>> {
    let mu = engine.measure();
    mu.points()
        .par_iter()
        .map(|x| {
            let k = match k_max {
                Some(k) => k,
                None => default_k_max(mu, x)?,
            };
            jones_with(engine, x, p, k, variant)
        })
        .collect()
}

fn chain_term(
    engine: &BetaEngine,
    q: &DyadicCube,
    p: f64,
    variant: JonesVariant,
) -> Result<JonesTerm> {
    let beta = match variant.multi() {
        Some(m) => engine.multi(q, p, m)?.value,
        None => engine.triple_best(q, p)?.value,
    };
    let beta_sq = beta * beta;
    let diam = q.diam();
    let mass = engine.measure().mass(&Region::Cube(q.clone()))?;
    let divergent = mass == 0.0 && beta_sq > 0.0;
    let term = if mass == 0.0 {
        0.0
    } else {
        beta_sq * diam / mass
    };
    Ok(JonesTerm {
        cube: q.clone(),
        beta_sq,
        diam,
        mass,
        term,
        divergent,
    })
}

/// A cube family and the beta number summed over it.
#[derive(Clone, Debug)]
pub enum SquareSum<'a> {
    /// `sum beta_multi(mu,Q)^2 diam Q` over cubes of the given scales with `mu(3Q) > 0`.
    Multi {
        mu: &'a DiscreteMeasure,
        scales: RangeInclusive<i32>,
        p: f64,
        variant: MultiVariant,
    },
    /// `S_p(mu,T) = sum_{Q in T} beta_p(mu,3Q)^2 diam Q`.
    Tree {
        mu: &'a DiscreteMeasure,
        tree: &'a CubeTree,
        p: f64,
    },
    /// `S^{*,c}_p(mu,T) = sum_{Q in T} beta^{*,c}_p(mu,Q)^2 diam Q`.
    StarCTree {
        mu: &'a DiscreteMeasure,
        tree: &'a CubeTree,
        p: f64,
        c: f64,
    },
    /// `beta^2(E) = sum beta_E(3Q)^2 diam Q` over cubes of the given scales whose triple meets `E`.
    Set {
        points: &'a [Point],
        scales: RangeInclusive<i32>,
    },
}

impl<'a> SquareSum<'a> {
    /// `S**_p` over the given scales.
    pub fn star_star(mu: &'a DiscreteMeasure, scales: RangeInclusive<i32>, p: f64) -> Self {
        SquareSum::Multi {
            mu,
            scales,
            p,
            variant: MultiVariant::StarStar,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeContribution {
    pub cube: DyadicCube,
    pub beta: f64,
    pub diam: f64,
    pub term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareSumReport {
    pub total: f64,
    pub ledger: Vec<CubeContribution>,
}

impl SquareSumReport {
    fn from_ledger(ledger: Vec<CubeContribution>) -> Self {
        SquareSumReport {
            total: ledger.iter().map(|c| c.term).sum(),
            ledger,
        }
    }

    /// Partial totals per scale, coarse to fine.
    pub fn by_scale(&self) -> Vec<(i32, f64)> {
        let mut out: Vec<(i32, f64)> = Vec::new();
        for c in &self.ledger {
            match out.iter_mut().find(|(k, _)| *k == c.cube.k) {
                Some(e) => e.1 += c.term,
                None => out.push((c.cube.k, c.term)),
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }
}

fn contribution(cube: DyadicCube, beta: f64) -> CubeContribution {
    let diam = cube.diam();
    CubeContribution {
        term: beta * beta * diam,
        cube,
        beta,
        diam,
    }
}

fn check_scales(scales: &RangeInclusive<i32>) -> Result<()> {
    if scales.is_empty() {
        Err(Error::Empty("scale range"))
    } else {
        Ok(())
    }
}

/// Exact finite sum over the family described by `input`, with a per-cube ledger.
pub fn square_sum(input: &SquareSum) -> Result<SquareSumReport> {
    match input {
        SquareSum::Multi {
            mu,
            scales,
            p,
            variant,
        } => {
            check_scales(scales)?;
            let engine = BetaEngine::new(mu);
            multi_sum(&engine, scales.clone(), *p, *variant)
        }
        SquareSum::Tree { mu, tree, p } => {
            check_p(*p)?;
            let engine = BetaEngine::new(mu);
            let cubes: Vec<&DyadicCube> = tree.members().collect();
            let ledger = cubes
                .par_iter()
                .map(|q| Ok(contribution((*q).clone(), engine.triple_best(q, *p)?.value)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SquareSumReport::from_ledger(ledger))
        }
        SquareSum::StarCTree { mu, tree, p, c } => {
            let engine = BetaEngine::new(mu);
            let cubes: Vec<&DyadicCube> = tree.members().collect();
            let ledger = cubes
                .par_iter()
                .map(|q| {
                    Ok(contribution(
                        (*q).clone(),
                        engine.multi(q, *p, MultiVariant::StarC(*c))?.value,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SquareSumReport::from_ledger(ledger))
        }
        SquareSum::Set { points, scales } => {
            check_scales(scales)?;
            let mu = DiscreteMeasure::uniform(points.to_vec())?;
            let engine = BetaEngine::new(&mu);
            let cubes: Vec<DyadicCube> = scales.clone().flat_map(|k| engine.occupied(k)).collect();
            let ledger = cubes
                .par_iter()
                .map(|q| {
                    let atoms: Vec<Point> = engine
                        .triple_atoms(q)
                        .into_iter()
                        .map(|i| points[i].clone())
                        .collect();
                    let b = beta_sup_set(&atoms, &Region::Box(q.triple()))?;
                    Ok(contribution(q.clone(), b.value))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SquareSumReport::from_ledger(ledger))
        }
    }
}

/// Multi-cube square sum with a caller-supplied engine.
pub fn multi_sum(
    engine: &BetaEngine,
    scales: RangeInclusive<i32>,
    p: f64,
    variant: MultiVariant,
) -> Result<SquareSumReport> {
    check_scales(&scales)?;
    check_p(p)?;
    let cubes: Vec<DyadicCube> = scales.flat_map(|k| engine.occupied(k)).collect();
    let ledger = cubes
        .par_iter()
        .map(|q| Ok(contribution(q.clone(), engine.multi(q, p, variant)?.value)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SquareSumReport::from_ledger(ledger))
}
