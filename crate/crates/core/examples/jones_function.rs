//! Truncated Jones functions at a point of a segment and at a point of a Cantor set.
//! The segment sum stays near zero while the Cantor sum keeps growing with depth.

use mrt::beta::BetaEngine;
use mrt::geometry::Point;
use mrt::jones::{jones_with, JonesVariant};
use mrt::measure::DiscreteMeasure;

fn cantor(generation: u32) -> Vec<Point> {
    let mut squares = vec![(0.0, 0.0, 1.0)];
    for _ in 0..generation {
        squares = squares
            .into_iter()
            .flat_map(|(x, y, s)| {
                let t = s / 4.0;
                [
                    (x, y, t),
                    (x + 3.0 * t, y, t),
                    (x, y + 3.0 * t, t),
                    (x + 3.0 * t, y + 3.0 * t, t),
                ]
            })
            .collect();
    }
    squares
        .into_iter()
        .map(|(x, y, s)| Point(vec![x + s / 2.0, y + s / 2.0]))
        .collect()
}

fn main() -> mrt::Result<()> {
    let line: Vec<Point> = (0..256)
        .map(|i| Point(vec![i as f64 / 255.0, 0.5]))
        .collect();
    let segment = DiscreteMeasure::new(line, vec![1.0 / 256.0; 256])?;
    let dust = DiscreteMeasure::new(cantor(5), vec![1.0 / 1024.0; 1024])?;

    for (name, mu) in [("segment", &segment), ("cantor", &dust)] {
        let engine = BetaEngine::new(mu);
        let x = mu.points()[mu.len() / 3].clone();
        let report = jones_with(&engine, &x, 2.0, 10, JonesVariant::Tilde)?;
        let partial: Vec<String> = (0..=5)
            .map(|d| format!("{:.4}", report.partial_sum(2 * d)))
            .collect();
        println!(
            "{name}: J~_2 partial sums by depth = [{}]",
            partial.join(", ")
        );
    }
    Ok(())
}
