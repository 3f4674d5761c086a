//! Single-region and multi-cube beta numbers of a small bent measure.

use mrt::beta::{beta_best, beta_sup_set, BetaEngine, MultiVariant};
use mrt::dyadic::DyadicCube;
use mrt::geometry::Point;
use mrt::measure::{DiscreteMeasure, Region};

fn main() -> mrt::Result<()> {
    let points: Vec<Point> = (0..32)
        .map(|i| {
            let t = i as f64 / 31.0;
            Point(vec![t, 0.3 * (t - 0.5).abs()])
        })
        .collect();
    let mu = DiscreteMeasure::uniform(points)?;
    let q = DyadicCube::new(1, vec![0, 0]);
    let region = Region::Box(q.triple());

    for p in [1.0, 2.0] {
        let b = beta_best(&mu, &region, p)?;
        println!("beta_{p}(3Q) = {:.6}", b.value);
    }
    println!(
        "beta_inf(support, 3Q) = {:.6}",
        beta_sup_set(mu.points(), &region)?.value
    );

    let engine = BetaEngine::new(&mu);
    for variant in [
        MultiVariant::Star,
        MultiVariant::StarStar,
        MultiVariant::StarC(0.5),
    ] {
        let b = engine.multi(&q, 2.0, variant)?;
        println!("{variant:?}: {:.6} over {} cubes", b.value, b.contributing);
    }
    Ok(())
}
