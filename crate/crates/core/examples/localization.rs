//! Grows a lower-regular tree around an atom and localizes it against a Jones cap.

use mrt::beta::{BetaEngine, MultiVariant};
use mrt::geometry::Point;
use mrt::measure::DiscreteMeasure;
use mrt::rectify::{grow_tree, localize, TreeRegime};

fn main() -> mrt::Result<()> {
    let points: Vec<Point> = (0..300)
        .map(|i| {
            let t = i as f64 / 299.0;
            Point(vec![0.1 + 0.8 * t, 0.5 + 0.1 * (6.0 * t).sin()])
        })
        .collect();
    let mu = DiscreteMeasure::new(points, vec![1.0 / 300.0; 300])?;
    let x = mu.points()[150].clone();

    let grown = grow_tree(&mu, &x, TreeRegime::LowerRegular { c: 0.05 }, 6)?;
    let Some(tree) = grown.tree else {
        println!("no tree: {:?}", grown.diagnostic);
        return Ok(());
    };
    println!("tree under {:?}: {} cubes", tree.top(), tree.len());

    let engine = BetaEngine::new(&mu);
    let b = |q: &mrt::dyadic::DyadicCube| {
        let beta = engine
            .multi(q, 2.0, MultiVariant::StarC(0.05))
            .map(|v| v.value)
            .unwrap_or(0.0);
        beta * beta * q.diam()
    };
    for n in [0.5, 2.0, 8.0] {
        let result = localize(&tree, b, &mu, n, 0.1 * inverse_top_mass(&mu, &tree))?;
        println!(
            "N = {n}: mu(A) = {:.3}, mu(A') = {:.3}, good cubes = {}, bad = {}, properties hold = {}",
            result.a_mass,
            result.a_prime_mass,
            result.good.as_ref().map_or(0, |g| g.len()),
            result.bad.len(),
            result.properties.all()
        );
    }
    Ok(())
}

fn inverse_top_mass(mu: &DiscreteMeasure, tree: &mrt::dyadic::CubeTree) -> f64 {
    mu.mass(&mrt::measure::Region::Cube(tree.top().clone()))
        .unwrap_or(1.0)
        .recip()
}
