//! Builds a curve through the nets of a circle, then checks connectivity and the
//! length certificate.

use mrt::curve::{certify, construct_curve, curve_length, verify_connected, DEFAULT_EPSILON};
use mrt::geometry::Point;
use mrt::nets::{fit_alphas, nets_from_points};

fn main() -> mrt::Result<()> {
    let points: Vec<Point> = (0..512)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / 512.0;
            Point(vec![t.cos(), t.sin()])
        })
        .collect();
    let nets = nets_from_points(&points, 4.0, 7)?;
    let alphas = fit_alphas(&nets, None)?;
    let construction = construct_curve(&nets, &alphas, DEFAULT_EPSILON)?;

    let curve = construction.curve();
    let (naive, dedup) = curve_length(&curve);
    let connectivity = verify_connected(&curve);
    let certificate = certify(&construction);
    println!(
        "segments: {}, bridges: {}",
        curve.segments.len(),
        construction.bridges.len()
    );
    println!("length: naive {naive:.4}, deduplicated {dedup:.4}");
    println!(
        "connected: {}, components: {}",
        connectivity.connected, connectivity.components
    );
    println!(
        "certificate passed: {}, C-hat = {:.3}, budget = {:.3}",
        certificate.passed(),
        certificate.c_hat,
        certificate.budget
    );
    Ok(())
}
