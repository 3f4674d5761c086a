//! Nets of a noisy arc, their validation and the fitted flatness numbers.

use mrt::geometry::Point;
use mrt::nets::{alpha_defect, fit_alphas, nets_from_points, validate_nets};

fn main() -> mrt::Result<()> {
    let points: Vec<Point> = (0..400)
        .map(|i| {
            let t = i as f64 / 399.0;
            let wobble = 0.002 * ((37 * i) % 11) as f64 / 11.0;
            Point(vec![t, 0.2 * (3.0 * t).sin() + wobble])
        })
        .collect();
    let nets = nets_from_points(&points, 2.0, 6)?;
    let check = validate_nets(&nets, nets.c_star);
    println!(
        "nets: {} levels, sizes {:?}, valid = {}, smallest C* = {:.3}",
        nets.depth() + 1,
        (0..=nets.depth())
            .map(|k| nets.level(k).len())
            .collect::<Vec<_>>(),
        check.passed(),
        check.smallest_c_star
    );

    let alphas = fit_alphas(&nets, None)?;
    println!("alpha defect = {}", alpha_defect(&nets, &alphas));
    for k in 1..=nets.depth() {
        let worst = (0..nets.level(k).len())
            .map(|v| alphas.get(k, v).alpha)
            .fold(0.0, f64::max);
        println!("  k = {k}: max alpha {worst:.4}");
    }
    println!("sum alpha^2 scale = {:.5}", alphas.square_sum(&nets, 1));
    Ok(())
}
