//! Splits a mixture of a segment and a Cantor dust into rectifiable candidates and the
//! rest, drawing curves through the candidates.

use mrt::geometry::Point;
use mrt::measure::DiscreteMeasure;
use mrt::rectify::{decompose_estimate, AtomClass, DecomposeConfig};

fn main() -> mrt::Result<()> {
    let mut squares = vec![(0.0, 0.0, 0.5)];
    for _ in 0..4 {
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
    let dust: Vec<Point> = squares
        .iter()
        .map(|(x, y, s)| Point(vec![x + s / 2.0, y + s / 2.0]))
        .collect();
    let dust = DiscreteMeasure::new(dust.clone(), vec![1.0 / dust.len() as f64; dust.len()])?;
    let segment: Vec<Point> = (0..512)
        .map(|i| Point(vec![5000.0 + i as f64 / 511.0, 0.25]))
        .collect();
    let segment = DiscreteMeasure::new(segment, vec![1.0 / 512.0; 512])?;
    let mu = dust.join(&segment)?;

    let config = DecomposeConfig {
        c_ladder: vec![0.05],
        n_ladder: vec![5.0],
        k_max: 8,
        ..DecomposeConfig::default()
    };
    let report = decompose_estimate(&mu, &config)?;
    let rect = report.rect_atoms();
    let on_segment = rect
        .iter()
        .filter(|&&i| mu.points()[i].0[0] >= 5000.0)
        .count();
    println!(
        "rect candidates: {} ({} on the segment)",
        rect.len(),
        on_segment
    );
    println!(
        "other atoms: {}",
        report
            .atoms
            .iter()
            .filter(|a| a.class != AtomClass::RectCandidate)
            .count()
    );
    println!(
        "curves drawn: {}, captured fraction {:.3}",
        report.curves.len(),
        report.captured_fraction
    );
    Ok(())
}
