//! Covers the support of a two-piece measure by curves and compares the length with
//! the traveling-salesman quantity.

use mrt::geometry::Point;
use mrt::measure::DiscreteMeasure;
use mrt::rectify::cover_support;

fn main() -> mrt::Result<()> {
    let mut points: Vec<Point> = (0..128)
        .map(|i| Point(vec![i as f64 / 127.0, 0.2]))
        .collect();
    points.extend((0..128).map(|i| Point(vec![0.3, 0.4 + 0.5 * i as f64 / 127.0])));
    let mu = DiscreteMeasure::uniform(points)?;

    let report = cover_support(&mu, 2.0, 6)?;
    println!("tops: {}", report.tops.len());
    for piece in &report.pieces {
        println!(
            "  {:?}: {} cubes, length {:.4}, certificate {}",
            piece.top, piece.tree_size, piece.length_dedup, piece.certificate_passed
        );
    }
    println!(
        "length {:.4} vs diam {:.4} + S** {:.4}: ratio {:.4}, uncovered atoms {}",
        report.length_dedup,
        report.support_diam,
        report.s_star_star,
        report.ratio,
        report.uncovered_atoms
    );
    Ok(())
}
