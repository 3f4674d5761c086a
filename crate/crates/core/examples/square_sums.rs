//! Traveling-salesman square sums of a sampled circle.

use mrt::beta::MultiVariant;
use mrt::dyadic::CubeTree;
use mrt::geometry::Point;
use mrt::jones::{square_sum, SquareSum};
use mrt::measure::DiscreteMeasure;

fn main() -> mrt::Result<()> {
    let n = 200;
    let points: Vec<Point> = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            Point(vec![0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin()])
        })
        .collect();
    let mu = DiscreteMeasure::new(
        points.clone(),
        vec![std::f64::consts::TAU * 0.3 / n as f64; n],
    )?;

    let set = square_sum(&SquareSum::Set {
        points: &points,
        scales: 0..=4,
    })?;
    println!("beta^2(E) over scales 0..=4: {:.4}", set.total);

    let star_star = square_sum(&SquareSum::star_star(&mu, 0..=3, 2.0))?;
    println!(
        "S**_2 over scales 0..=3: {:.4} from {} cubes",
        star_star.total,
        star_star.ledger.len()
    );

    let star = square_sum(&SquareSum::Multi {
        mu: &mu,
        scales: 0..=3,
        p: 2.0,
        variant: MultiVariant::Star,
    })?;
    println!("S*_2 over scales 0..=3: {:.4}", star.total);

    let top = mrt::dyadic::DyadicCube::new(0, vec![0, 0]);
    let tree = CubeTree::full(top, 4);
    let tree_sum = square_sum(&SquareSum::Tree {
        mu: &mu,
        tree: &tree,
        p: 2.0,
    })?;
    println!("S_2 over the full depth-4 tree: {:.4}", tree_sum.total);
    Ok(())
}
