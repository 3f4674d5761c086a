//! End-to-end acceptance checks. Each test prints one `acceptance N ... PASS|FAIL` line
//! (run with `--nocapture` to see them) and fails when its criterion does not hold.

mod common;

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{close, multi_objective};
use mrt::beta::{beta_best, beta_fixed_line, beta_sup_set, BetaEngine, MultiVariant};
use mrt::curve::{certify, construct_curve, curve_length, verify_connected, DEFAULT_EPSILON};
use mrt::dyadic::{CubeTree, DyadicCube};
use mrt::geometry::oracle::{brute_force_line_oracle_with, minimize_over_lines, OracleResolution};
use mrt::geometry::{Line, Norm, Point};
use mrt::jones::{jones_at_atoms, jones_with, multi_sum, JonesVariant};
use mrt::measure::{DiscreteMeasure, Region};
use mrt::nets::{fit_alphas, nets_from_points, validate_nets};
use mrt::rectify::{decompose_estimate, localize, normalized_sums, AtomClass, DecomposeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Timed criteria run one at a time so their budgets are not shared.
static SERIAL: Mutex<()> = Mutex::new(());

fn report(
    id: u32,
    name: &str,
    passed: bool,
    started: Instant,
    limit: Option<Duration>,
    detail: String,
) {
    let elapsed = started.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let verdict = if passed && in_time { "PASS" } else { "FAIL" };
    let budget = limit.map_or(String::new(), |l| format!(" / {} s", l.as_secs()));
    println!(
        "acceptance {id:>2} {name}: {verdict} ({detail}; {:.2} s{budget})",
        elapsed.as_secs_f64()
    );
    assert!(passed, "acceptance {id} failed: {detail}");
    assert!(
        in_time,
        "acceptance {id} exceeded its time budget: {:.2} s",
        elapsed.as_secs_f64()
    );
}

/// Prints a FAIL line for a criterion that cannot hold as stated, and asserts only
/// that the shortfall is the documented one.
fn report_unattainable(id: u32, name: &str, explained: bool, started: Instant, detail: String) {
    println!(
        "acceptance {id:>2} {name}: FAIL (unattainable: {detail}; {:.2} s)",
        started.elapsed().as_secs_f64()
    );
    assert!(
        explained,
        "acceptance {id} failed beyond its documented shortfall: {detail}"
    );
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Point {
    Point((0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-3 && len <= 1.0 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

#[test]
fn lerman_inequality() {
    let _guard = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=3);
        let region = match rng.gen_range(0..3) {
            0 => Region::Cube(DyadicCube::at(
                &random_point(&mut rng, n, -4.0, 4.0),
                rng.gen_range(-2..4),
            )),
            1 => Region::Box(
                DyadicCube::at(&random_point(&mut rng, n, -4.0, 4.0), rng.gen_range(-2..4))
                    .triple(),
            ),
            _ => Region::Ball {
                center: random_point(&mut rng, n, -4.0, 4.0),
                radius: rng.gen_range(0.05..3.0),
            },
        };
        // Sample atoms inside the region's bounding cube and keep those inside the region.
        let (lo, side) = match &region {
            Region::Cube(q) => (q.lower(), q.side()),
            Region::Box(b) => (b.lower(), b.side()),
            Region::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), 2.0 * radius)
            }
        };
        let count = rng.gen_range(1..=25);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        while points.len() < count {
            let x = Point(lo.iter().map(|l| l + side * rng.gen::<f64>()).collect());
            if region.contains(&x) || rng.gen_bool(0.2) {
                points.push(x);
                weights.push(rng.gen_range(0.01..5.0));
            }
        }
        if !points.iter().any(|x| region.contains(x)) {
            points[0] = Point(lo.iter().map(|l| l + side / 2.0).collect());
        }
        let mu = DiscreteMeasure::new(points, weights).unwrap();
        let through = random_point(&mut rng, n, -5.0, 5.0);
        let line = Line::new(through, random_direction(&mut rng, n)).unwrap();
        let p = if rng.gen_bool(0.5) { 1.0 } else { 2.0 };
        let g = mu.center_of_mass(&region).unwrap();
        let beta = beta_fixed_line(&mu, &region, &line, p).unwrap();
        let excess = line.dist(&g) - beta * region.diam();
        worst = worst.max(excess);
        if excess > 1e-12 {
            violations += 1;
        }
    }
    report(
        1,
        "lerman inequality",
        violations == 0,
        started,
        Some(Duration::from_secs(10)),
        format!("10000 instances, {violations} violations, max dist - beta diam = {worst:.3e}"),
    );
}

fn grid_beta(
    points: &[Point],
    weights: &[f64],
    p: f64,
    diam: f64,
    resolution: OracleResolution,
) -> f64 {
    let fit = brute_force_line_oracle_with(points, weights, Norm::P(p), resolution).unwrap();
    fit.objective.powf(1.0 / p) / diam
}

#[test]
fn beta_oracle_agreement() {
    let _guard = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let coarse = OracleResolution {
        directions: 600,
        offsets: 80,
        zoom_levels: 4,
    };
    let mut refined = 0;
    let mut worst_best = 0.0f64;
    let mut worst_multi = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..200 {
        let count = rng.gen_range(3..=10);
        let points: Vec<Point> = (0..count)
            .map(|_| random_point(&mut rng, 2, 0.0, 1.0))
            .collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.2..2.0)).collect();
        let mu = DiscreteMeasure::new(points.clone(), weights.clone()).unwrap();
        let p = if trial % 2 == 0 { 2.0 } else { 1.0 };

        let region = Region::Cube(DyadicCube::new(0, vec![0, 0]));
        let best = beta_best(&mu, &region, p).unwrap().value;
        let mut grid_beta = grid_beta(&points, &weights, p, region.diam(), coarse);
        if !close(best, grid_beta, 1e-3, 1e-9) {
            refined += 1;
            grid_beta = grid_beta.min(self::grid_beta(
                &points,
                &weights,
                p,
                region.diam(),
                OracleResolution::default(),
            ));
        }
        worst_best = worst_best.max((best - grid_beta).abs() / grid_beta.max(1e-12));
        if !close(best, grid_beta, 1e-3, 1e-9) {
            failures.push(format!("best #{trial}: {best} vs {grid_beta}"));
        }

        let q = DyadicCube::at(&points[rng.gen_range(0..count)], rng.gen_range(0..=2));
        let multi = BetaEngine::new(&mu)
            .multi(&q, p, MultiVariant::Star)
            .unwrap();
        let objective = multi_objective(&mu, &q, p, MultiVariant::Star);
        if let Some(line) = &multi.line {
            let rescored = objective(line);
            if !close(rescored, multi.value, 1e-9, 1e-12) {
                failures.push(format!(
                    "star #{trial}: reported {} but its line scores {rescored}",
                    multi.value
                ));
            }
        }
        let multi = multi.value;
        let mut grid = minimize_over_lines(&points, &objective, coarse)
            .unwrap()
            .objective;
        if !close(multi, grid, 1e-3, 1e-9) {
            refined += 1;
            grid = grid.min(
                minimize_over_lines(&points, &objective, OracleResolution::default())
                    .unwrap()
                    .objective,
            );
        }
        worst_multi = worst_multi.max((multi - grid).abs() / grid.max(1e-12));
        if !close(multi, grid, 1e-3, 1e-9) {
            failures.push(format!("star #{trial}: {multi} vs {grid}"));
        }
    }
    report(
        2,
        "beta oracle agreement",
        failures.is_empty(),
        started,
        Some(Duration::from_secs(120)),
        format!(
            "200 instances, worst relative gap best {worst_best:.2e} star {worst_multi:.2e}, {refined} refined on the fine grid, mismatches {:?}",
            failures
        ),
    );
}

/// Three unit atoms spread over a unit triangle, seen from a cube of side 1/16.
///
/// Every line misses some vertex by at least half the smallest altitude, and each vertex
/// sits alone in the triple of a same-scale nearby cube, so `beta*` is bounded below by
/// `altitude / (2 diam 3R)`.
fn triangle_lower_bound() -> (f64, f64) {
    let vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]];
    let mu =
        DiscreteMeasure::uniform(vertices.iter().map(|v| Point(v.to_vec())).collect()).unwrap();
    let q = DyadicCube::at(&[0.01, 0.01], 4);
    let area = 0.4;
    let altitude = (0..3)
        .map(|i| {
            let (a, b) = (vertices[(i + 1) % 3], vertices[(i + 2) % 3]);
            2.0 * area / ((a[0] - b[0]).hypot(a[1] - b[1]))
        })
        .fold(f64::INFINITY, f64::min);
    let bound = altitude / (2.0 * q.triple_diam());
    let computed = BetaEngine::new(&mu)
        .multi(&q, 2.0, MultiVariant::Star)
        .unwrap()
        .value;
    (bound, computed)
}

#[test]
fn beta_range_and_monotonicity() {
    let _guard = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut single_out_of_range = Vec::new();
    let mut multi_above_one = 0usize;
    let mut not_monotone = Vec::new();
    let mut c_above_star = Vec::new();
    let mut max_single = 0.0f64;
    let mut max_multi = 0.0f64;
    let mut cubes = 0;
    while cubes < 1000 {
        let count = rng.gen_range(3..=20);
        let points: Vec<Point> = (0..count)
            .map(|_| random_point(&mut rng, 2, 0.0, 1.0))
            .collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.01..1.0)).collect();
        let mu = DiscreteMeasure::new(points.clone(), weights).unwrap();
        let engine = BetaEngine::new(&mu);
        let c = [0.05, 0.3, 1.0, 3.0][rng.gen_range(0..4)];
        for _ in 0..10 {
            cubes += 1;
            let q = DyadicCube::at(&points[rng.gen_range(0..count)], rng.gen_range(0..=4));
            let triple = Region::Box(q.triple());
            let mut single = vec![beta_sup_set(mu.points(), &triple).unwrap().value];
            let mut by_p = Vec::new();
            for p in [1.0, 2.0] {
                let best = beta_best(&mu, &triple, p).unwrap().value;
                let star = engine.multi(&q, p, MultiVariant::Star).unwrap().value;
                let star_star = engine.multi(&q, p, MultiVariant::StarStar).unwrap().value;
                let star_c = engine.multi(&q, p, MultiVariant::StarC(c)).unwrap().value;
                if star_c > star * (1.0 + 1e-9) + 1e-12 {
                    c_above_star.push(format!("{q:?} p={p} c={c}: {star_c} > {star}"));
                }
                single.push(best);
                for v in [star, star_star, star_c] {
                    max_multi = max_multi.max(v);
                    if v > 1.0 {
                        multi_above_one += 1;
                    }
                    assert!(v >= 0.0);
                }
                by_p.push([best, star, star_star, star_c]);
            }
            for v in single {
                max_single = max_single.max(v);
                if !(0.0..=1.0).contains(&v) {
                    single_out_of_range.push(format!("{q:?}: {v}"));
                }
            }
            for (i, name) in ["best", "star", "star_star", "star_c"].iter().enumerate() {
                if by_p[0][i] > by_p[1][i] * (1.0 + 1e-9) + 1e-12 {
                    not_monotone.push(format!(
                        "{q:?} {name}: p=1 {} > p=2 {}",
                        by_p[0][i], by_p[1][i]
                    ));
                }
            }
        }
    }
    let (bound, computed) = triangle_lower_bound();
    let detail = format!(
        "{cubes} cubes; single-region max {max_single:.4}, out of range {}; multi-cube max {max_multi:.4}, \
         {multi_above_one} values above 1; non-monotone {}; star_c above star {}; \
         triangle witness beta* >= {bound:.4} (computed {computed:.4})",
        single_out_of_range.len(),
        not_monotone.len(),
        c_above_star.len(),
    );
    let attainable =
        single_out_of_range.is_empty() && not_monotone.is_empty() && c_above_star.is_empty();
    let witnessed = bound > 1.0 && computed >= bound * (1.0 - 1e-9);
    if multi_above_one == 0 {
        report(
            3,
            "beta range and monotonicity",
            attainable,
            started,
            None,
            detail,
        );
    } else {
        report_unattainable(
            3,
            "beta range and monotonicity",
            attainable && witnessed,
            started,
            format!("multi-cube betas exceed 1 under their definition; {detail}"),
        );
    }
}

#[test]
fn zero_beta_flatness() {
    let _guard = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_beta = 0.0f64;
    let mut worst_jones = 0.0f64;
    for trial in 0..8 {
        let n = if trial % 4 == 3 { 3 } else { 2 };
        let base = random_point(&mut rng, n, -1.0, 1.0);
        let direction = match trial % 4 {
            0 => {
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                e
            }
            _ => random_direction(&mut rng, n),
        };
        let count = rng.gen_range(2..=24);
        let points: Vec<Point> = (0..count)
            .map(|_| {
                let t = rng.gen_range(-1.5..1.5);
                Point(
                    base.iter()
                        .zip(&direction)
                        .map(|(b, d)| b + t * d)
                        .collect(),
                )
            })
            .collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.1..3.0)).collect();
        let mu = DiscreteMeasure::new(points.clone(), weights).unwrap();
        let engine = BetaEngine::new(&mu);
        for x in points.iter().take(6) {
            for k in -1..=5 {
                let q = DyadicCube::at(x, k);
                let triple = Region::Box(q.triple());
                let mut values = vec![beta_sup_set(mu.points(), &triple).unwrap().value];
                for p in [1.0, 2.0] {
                    values.push(beta_best(&mu, &Region::Cube(q.clone()), p).unwrap().value);
                    values.push(beta_best(&mu, &triple, p).unwrap().value);
                    for variant in [
                        MultiVariant::Star,
                        MultiVariant::StarStar,
                        MultiVariant::StarC(0.1),
                    ] {
                        values.push(engine.multi(&q, p, variant).unwrap().value);
                    }
                }
                worst_beta = values.into_iter().fold(worst_beta, f64::max);
            }
        }
        for (variant, p) in [
            (JonesVariant::Tilde, 1.0),
            (JonesVariant::Tilde, 2.0),
            (JonesVariant::Star, 2.0),
            (JonesVariant::StarStar, 2.0),
            (JonesVariant::StarC(0.1), 2.0),
        ] {
            for r in jones_at_atoms(&engine, p, Some(10), variant).unwrap() {
                worst_jones = worst_jones.max(if r.divergent { f64::INFINITY } else { r.sum });
            }
        }
    }
    report(
        4,
        "zero beta flatness",
        worst_beta <= 1e-12 && worst_jones <= 1e-12,
        started,
        None,
        format!("8 line measures, max beta {worst_beta:.2e}, max Jones sum {worst_jones:.2e}"),
    );
}

/// Random point sets in the plane and in space: curves, clouds and clustered samples.
fn random_point_set(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = if rng.gen_bool(0.25) { 3 } else { 2 };
    let count = rng.gen_range(20..=300);
    let jitter = [0.0, 1e-3, 0.05][rng.gen_range(0..3)];
    let noise = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0..1.0) * jitter;
    match rng.gen_range(0..4) {
        0 => {
            let radius = rng.gen_range(0.2..3.0);
            let sweep = rng.gen_range(0.5..std::f64::consts::TAU);
            (0..count)
                .map(|_| {
                    let t = rng.gen_range(0.0..sweep);
                    let mut x = vec![radius * t.cos() + noise(rng), radius * t.sin() + noise(rng)];
                    x.extend((2..n).map(|_| noise(rng)));
                    Point(x)
                })
                .collect()
        }
        1 => {
            let corners: Vec<Point> = (0..rng.gen_range(2..=6))
                .map(|_| random_point(rng, n, -2.0, 2.0))
                .collect();
            (0..count)
                .map(|_| {
                    let i = rng.gen_range(0..corners.len() - 1);
                    let t = rng.gen::<f64>();
                    Point(
                        (0..n)
                            .map(|d| {
                                corners[i][d] + t * (corners[i + 1][d] - corners[i][d]) + noise(rng)
                            })
                            .collect(),
                    )
                })
                .collect()
        }
        2 => (0..count)
            .map(|_| random_point(rng, n, -1.0, 1.0))
            .collect(),
        _ => {
            let centers: Vec<Point> = (0..rng.gen_range(1..=4))
                .map(|_| random_point(rng, n, -3.0, 3.0))
                .collect();
            (0..count)
                .map(|_| {
                    let c = &centers[rng.gen_range(0..centers.len())];
                    Point(c.iter().map(|x| x + rng.gen_range(-0.3..0.3)).collect())
                })
                .collect()
        }
    }
}

#[test]
fn curve_construction_soundness() {
    let _guard = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    let (mut accepted, mut rejected, mut snapshots, mut bridges) = (0, 0, 0, 0);
    while accepted < 100 {
        let e = random_point_set(&mut rng);
        let diam = e
            .iter()
            .flat_map(|a| e.iter().map(move |b| a.dist(b)))
            .fold(0.0, f64::max);
        let r0 = diam.max(1e-3) * rng.gen_range(0.25..2.0);
        let depth = rng.gen_range(3..=6);
        let nets = nets_from_points(&e, r0, depth).unwrap();
        if !validate_nets(&nets, nets.c_star).passed() {
            rejected += 1;
            continue;
        }
        accepted += 1;
        let alphas = fit_alphas(&nets, None).unwrap();
        let construction = match construct_curve(&nets, &alphas, DEFAULT_EPSILON) {
            Ok(c) => c,
            Err(err) => {
                problems.push(format!("instance {accepted}: {err}"));
                continue;
            }
        };
        bridges += construction.bridges.len();
        for snapshot in &construction.snapshots {
            snapshots += 1;
            let gamma = construction.graph.restrict(&snapshot.segments);
            if !snapshot.segments.is_empty() && !verify_connected(&gamma).connected {
                problems.push(format!(
                    "instance {accepted}: Gamma_{} disconnected",
                    snapshot.k
                ));
            }
            let missing = nets
                .level(snapshot.k)
                .iter()
                .filter(|x| nets.level(snapshot.k).len() > 1 && gamma.distance_to(x) > 1e-12)
                .count();
            if missing > 0 {
                problems.push(format!(
                    "instance {accepted}: {missing} points of V_{} off Gamma",
                    snapshot.k
                ));
            }
        }
        let cert = certify(&construction);
        if cert.window_violations > 0 {
            problems.push(format!(
                "instance {accepted}: {} window violations",
                cert.window_violations
            ));
        }
        if !cert.core_overlaps.is_empty() {
            problems.push(format!(
                "instance {accepted}: {} overlapping cores",
                cert.core_overlaps.len()
            ));
        }
        if !cert.ledger_violations.is_empty() {
            problems.push(format!(
                "instance {accepted}: ledger {:?}",
                cert.ledger_violations.first()
            ));
        }
    }
    report(
        5,
        "curve construction soundness",
        problems.is_empty(),
        started,
        Some(Duration::from_secs(120)),
        format!(
            "100 valid nets ({rejected} invalid draws skipped), {snapshots} snapshots, {bridges} bridges, problems {:?}",
            problems.iter().take(5).collect::<Vec<_>>()
        ),
    );
}

fn circle(count: usize) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let t = i as f64 / count as f64 * std::f64::consts::TAU;
            Point(vec![t.cos(), t.sin()])
        })
        .collect()
}

#[test]
fn length_bound_surrogate() {
    let _guard = lock();
    let started = Instant::now();
    let points = circle(8192);
    let mut c_hats = Vec::new();
    for depth in [5, 6, 7] {
        let nets = nets_from_points(&points, 2.0, depth).unwrap();
        let alphas = fit_alphas(&nets, None).unwrap();
        let construction = construct_curve(&nets, &alphas, DEFAULT_EPSILON).unwrap();
        let cert = certify(&construction);
        assert!(cert.passed());
        c_hats.push(cert.c_hat);
    }
    let lo = c_hats.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c_hats.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;

    let segment: Vec<Point> = (0..=1024)
        .map(|i| Point(vec![i as f64 / 1024.0, 0.0]))
        .collect();
    let mut ratios = Vec::new();
    for depth in [6, 7, 8] {
        let nets = nets_from_points(&segment, 1.0, depth).unwrap();
        let alphas = fit_alphas(&nets, None).unwrap();
        let construction = construct_curve(&nets, &alphas, DEFAULT_EPSILON).unwrap();
        ratios.push(curve_length(&construction.curve()).1);
    }
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    report(
        6,
        "length bound surrogate",
        c_hats.iter().all(|c| c.is_finite()) && spread <= 0.2 && worst_ratio <= 1.1,
        started,
        None,
        format!(
            "circle C-hat at depths 5/6/7 = {:.4}/{:.4}/{:.4} (spread {:.1}%), segment length / 1 at depths 6/7/8 = {:.4}/{:.4}/{:.4}",
            c_hats[0],
            c_hats[1],
            c_hats[2],
            100.0 * spread,
            ratios[0],
            ratios[1],
            ratios[2]
        ),
    );
}

/// Centers of the `4^depth` generation-`depth` squares of the four-corner Cantor set,
/// each carrying mass `4^-depth`.
fn four_corner_cantor(depth: u32) -> DiscreteMeasure {
    let mut corners = vec![[0.0f64, 0.0]];
    let mut side = 1.0;
    for _ in 0..depth {
        side /= 4.0;
        corners = corners
            .iter()
            .flat_map(|c| {
                [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]]
                    .map(|o| [c[0] + o[0] * side, c[1] + o[1] * side])
            })
            .collect();
    }
    let points = corners
        .iter()
        .map(|c| Point(vec![c[0] + side / 2.0, c[1] + side / 2.0]))
        .collect();
    let weight = 4f64.powi(-(depth as i32));
    DiscreteMeasure::new(points, vec![weight; corners.len()]).unwrap()
}

#[test]
fn cantor_jones_divergence() {
    let _guard = lock();
    let started = Instant::now();
    let mu = four_corner_cantor(7);
    let engine = BetaEngine::new(&mu);
    // One construction point per generation-3 square, spread over the whole set.
    let stride = mu.len() / 64;
    let points: Vec<&Point> = mu.points().iter().step_by(stride).collect();
    let truncated =
        |report: &mrt::jones::JonesReport, generation: i32| report.partial_sum(2 * generation);
    let mut inc34 = f64::INFINITY;
    let mut inc45 = f64::INFINITY;
    let mut j5_max = 0.0f64;
    for x in &points {
        let report = jones_with(&engine, x, 2.0, 10, JonesVariant::Tilde).unwrap();
        assert!(!report.divergent);
        let (j3, j4, j5) = (
            truncated(&report, 3),
            truncated(&report, 4),
            truncated(&report, 5),
        );
        inc34 = inc34.min(j4 - j3);
        inc45 = inc45.min(j5 - j4);
        j5_max = j5_max.max(j5);
    }
    let increment = 0.5 * inc34;
    report(
        8,
        "cantor jones divergence",
        increment > 0.0 && inc45 >= increment,
        started,
        Some(Duration::from_secs(60)),
        format!(
            "{} points, min increment 3->4 {inc34:.4} (fixed increment {increment:.4}), min increment 4->5 {inc45:.4}, max J at generation 5 {j5_max:.3}",
            points.len()
        ),
    );
}

/// Random tree below `[0,1)^2`: every cube keeps each child with probability `keep`.
fn random_tree(rng: &mut ChaCha8Rng, depth: i32, keep: f64) -> CubeTree {
    let top = DyadicCube::new(0, vec![0, 0]);
    let mut members = vec![top.clone()];
    let mut frontier = vec![top.clone()];
    for _ in 0..depth {
        frontier = frontier
            .iter()
            .flat_map(|q| q.children())
            .filter(|_| rng.gen_bool(keep))
            .collect();
        members.extend(frontier.iter().cloned());
    }
    CubeTree::new(top, members).unwrap()
}

#[test]
fn localization_lemma() {
    let _guard = lock();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut problems = Vec::new();
    let (mut empty_a, mut tightest) = (0, f64::INFINITY);
    for trial in 0..200 {
        let (depth, keep) = (rng.gen_range(1..=6), rng.gen_range(0.4..0.9));
        let tree = random_tree(&mut rng, depth, keep);
        let count = rng.gen_range(1..=200);
        let points: Vec<Point> = (0..count)
            .map(|_| random_point(&mut rng, 2, -0.2, 1.2))
            .collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.001..1.0)).collect();
        let mu = DiscreteMeasure::new(points, weights).unwrap();
        let b_values: HashMap<DyadicCube, f64> = tree
            .members()
            .map(|q| {
                (
                    q.clone(),
                    if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        rng.gen_range(0.0..2.0) * q.side()
                    },
                )
            })
            .collect();
        let b = |q: &DyadicCube| b_values[q];
        let sums = normalized_sums(&tree, &mu, b).unwrap();
        let n = if sums.is_empty() || rng.gen_bool(0.1) {
            rng.gen_range(1e-6..1e-3)
        } else {
            let mut s: Vec<f64> = sums.iter().map(|e| e.1).collect();
            s.sort_by(f64::total_cmp);
            s[rng.gen_range(0..s.len())].max(1e-9)
        };
        let top_mass: f64 = sums.iter().map(|(i, _)| mu.weights()[*i]).sum();
        let epsilon = rng.gen_range(0.01..1.0) / top_mass.max(1e-9);
        let result = localize(&tree, b, &mu, n, epsilon).unwrap();

        // Independent recheck of the partition rule and the four properties.
        let a: Vec<usize> = sums.iter().filter(|e| e.1 <= n).map(|e| e.0).collect();
        let a_mass: f64 = a.iter().map(|&i| mu.weights()[i]).sum();
        let mass_in = |atoms: &[usize], q: &DyadicCube| -> f64 {
            atoms
                .iter()
                .filter(|&&i| q.contains(&mu.points()[i]))
                .map(|&i| mu.weights()[i])
                .sum()
        };
        let all: Vec<usize> = (0..mu.len()).collect();
        let is_bad = |q: &DyadicCube| {
            a_mass == 0.0
                || (tree.top().k..=q.k).any(|k| {
                    let r = q.ancestor(k);
                    mass_in(&a, &r) <= epsilon * a_mass * mass_in(&all, &r)
                })
        };
        let good: Vec<&DyadicCube> = tree.members().filter(|q| !is_bad(q)).collect();
        let bad_count = tree.len() - good.len();
        if bad_count != result.bad.len() || good.iter().any(|q| result.bad.contains(*q)) {
            problems.push(format!("trial {trial}: partition differs from the rule"));
        }
        let good_is_tree = good.is_empty()
            || (good.contains(&tree.top())
                && good
                    .iter()
                    .all(|q| q.k == tree.top().k || good.contains(&&q.parent())));
        let bad_closed = tree
            .members()
            .filter(|q| is_bad(q))
            .all(|q| q.children().iter().all(|c| !tree.contains(c) || is_bad(c)));
        let a_prime: f64 = a
            .iter()
            .filter(|&&i| {
                let x = &mu.points()[i];
                tree.members().all(|q| !q.contains(x) || !is_bad(q))
            })
            .map(|&i| mu.weights()[i])
            .sum();
        let retained = a_prime >= (1.0 - epsilon * top_mass) * a_mass * (1.0 - 1e-12);
        let good_sum: f64 = good.iter().map(|q| b(q)).sum();
        let bounded = a_mass == 0.0 || good_sum < n / epsilon;
        if a_mass == 0.0 {
            empty_a += 1;
        } else {
            tightest = tightest.min(n / epsilon - good_sum);
        }
        if !(good_is_tree && bad_closed && retained && bounded && result.properties.all()) {
            problems.push(format!(
                "trial {trial}: tree {good_is_tree} closed {bad_closed} retained {retained} bounded {bounded} reported {:?}",
                result.properties
            ));
        }
    }
    report(
        9,
        "localization lemma",
        problems.is_empty(),
        started,
        None,
        format!(
            "200 instances ({empty_a} with mu(A) = 0), smallest N/eps - sum over good b = {tightest:.3e}, problems {:?}",
            problems.iter().take(5).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn decomposition_of_mixture() {
    let _guard = lock();
    let started = Instant::now();
    let depth = 5;
    let cantor = four_corner_cantor(depth).scaled(0.5).unwrap();
    let atoms = cantor.len();
    let segment = DiscreteMeasure::new(
        (0..atoms)
            .map(|i| Point(vec![5000.0 + (i as f64 + 0.5) / atoms as f64, 0.25]))
            .collect(),
        vec![0.5 / atoms as f64; atoms],
    )
    .unwrap();
    let mixture = cantor.join(&segment).unwrap();
    let c = 0.05;

    // The cap is fixed from the Cantor component truncated three generations deep.
    let cantor_engine = BetaEngine::new(&cantor);
    let shallow = jones_at_atoms(&cantor_engine, 2.0, Some(6), JonesVariant::StarC(c)).unwrap();
    let cap = 0.5 * shallow.iter().map(|r| r.sum).fold(f64::INFINITY, f64::min);

    let config = DecomposeConfig {
        p: 2.0,
        c_ladder: vec![c],
        n_ladder: vec![cap],
        eps_ladder: vec![0.5, 0.1],
        k_max: 2 * depth as i32,
    };
    let result = decompose_estimate(&mixture, &config).unwrap();
    let agree = result
        .atoms
        .iter()
        .enumerate()
        .filter(|(i, l)| (l.class == AtomClass::RectCandidate) == (*i >= atoms))
        .count();
    let agreement = agree as f64 / mixture.len() as f64;
    let rect = result.rect_atoms().len();
    report(
        10,
        "decomposition of mixture",
        agreement >= 0.85 && result.captured_fraction >= 0.9,
        started,
        Some(Duration::from_secs(300)),
        format!(
            "{} atoms, cap N = {cap:.4}, agreement {:.1}%, {rect} rect candidates, captured {:.1}% by {} curves",
            mixture.len(),
            100.0 * agreement,
            100.0 * result.captured_fraction,
            result.curves.len()
        ),
    );
}

#[test]
fn determinism_across_thread_counts() {
    let _guard = lock();
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mixture = four_corner_cantor(3)
        .join(
            &DiscreteMeasure::new(
                (0..64)
                    .map(|i| Point(vec![5000.0 + i as f64 / 64.0, 0.0]))
                    .collect(),
                vec![1.0 / 64.0; 64],
            )
            .unwrap(),
        )
        .unwrap();
    let mixture_path = dir.path().join("mixture.json");
    std::fs::write(&mixture_path, mrt::io::measure_to_json(&mixture)).unwrap();
    let circle = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/circle.csv");
    let mixture = mixture_path.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["beta", circle, "--variant", "star", "--k-max", "3"],
        vec!["beta", mixture, "--variant", "star-c", "--k-max", "4"],
        vec!["jones", mixture, "--variant", "star-c", "--k-max", "6"],
        vec!["jones", circle, "--variant", "tilde"],
        vec!["tst", circle, "--k-max", "4"],
        vec!["curve", circle, "--depth", "6"],
        vec![
            "decompose",
            mixture,
            "--c",
            "0.05",
            "--n",
            "1",
            "--k-max",
            "6",
        ],
        vec!["validate", circle, "--depth", "5"],
    ];
    let run = |args: &[&str], threads: &str| {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_mrt"))
            .args(args)
            .env("MRT_THREADS", threads)
            .output()
            .unwrap();
        (out.status.code(), out.stdout)
    };
    let mut mismatches = Vec::new();
    let mut bytes = 0;
    for args in &commands {
        let reference = run(args, "1");
        bytes += reference.1.len();
        for threads in ["1", "8", "8"] {
            if run(args, threads) != reference {
                mismatches.push(format!("{} at {threads} threads", args.join(" ")));
            }
        }
        if reference.1.is_empty() {
            mismatches.push(format!(
                "{}: empty report (exit {:?})",
                args.join(" "),
                reference.0
            ));
        }
    }
    report(
        11,
        "determinism across thread counts",
        mismatches.is_empty(),
        started,
        None,
        format!(
            "{} commands, 4 runs each at 1/1/8/8 threads, {bytes} report bytes, mismatches {mismatches:?}",
            commands.len()
        ),
    );
}

/// Samples a parametrized plane curve at arclength spacing close to `h`, each atom
/// carrying the length it represents. Returns the measure and the curve length.
fn sample_curve(f: &dyn Fn(f64) -> [f64; 2], h: f64) -> (DiscreteMeasure, f64) {
    let m = 200_000;
    let fine: Vec<[f64; 2]> = (0..=m).map(|i| f(i as f64 / m as f64)).collect();
    let mut arclength = vec![0.0];
    for w in fine.windows(2) {
        arclength.push(arclength.last().unwrap() + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
    }
    let length = arclength[m];
    let count = (length / h).ceil() as usize;
    let step = length / count as f64;
    let mut j = 0;
    let points = (0..count)
        .map(|i| {
            let s = (i as f64 + 0.5) * step;
            while arclength[j + 1] < s {
                j += 1;
            }
            let t = (s - arclength[j]) / (arclength[j + 1] - arclength[j]);
            Point(vec![
                fine[j][0] + t * (fine[j + 1][0] - fine[j][0]),
                fine[j][1] + t * (fine[j + 1][1] - fine[j][1]),
            ])
        })
        .collect();
    (
        DiscreteMeasure::new(points, vec![step; count]).unwrap(),
        length,
    )
}

type PlaneCurve = Box<dyn Fn(f64) -> [f64; 2]>;

fn test_curves() -> Vec<(&'static str, PlaneCurve)> {
    use std::f64::consts::PI;
    let corners = [[0.05, 0.1], [0.5, 0.2], [0.4, 0.85], [0.95, 0.9]];
    let knots = [
        0.5, 0.6, 0.45, 0.7, 0.55, 0.5, 0.3, 0.4, 0.65, 0.6, 0.5, 0.35, 0.45, 0.55, 0.5, 0.6, 0.5,
    ];
    vec![
        ("segment", Box::new(|t| [0.1 + 0.8 * t, 0.2 + 0.5 * t])),
        (
            "circle arc",
            Box::new(|t| {
                let a = 1.5 * PI * t;
                [0.5 + 0.4 * a.cos(), 0.5 + 0.4 * a.sin()]
            }),
        ),
        (
            "two-corner polyline",
            Box::new(move |t| {
                let s = (3.0 * t).min(3.0 - 1e-9);
                let (i, u) = (s as usize, s.fract());
                [
                    corners[i][0] + u * (corners[i + 1][0] - corners[i][0]),
                    corners[i][1] + u * (corners[i + 1][1] - corners[i][1]),
                ]
            }),
        ),
        (
            "spiral arc",
            Box::new(|t| {
                let a = 3.0 * PI * t;
                let r = 0.1 + 0.12 * a / PI;
                [0.5 + r * a.cos(), 0.5 + r * a.sin()]
            }),
        ),
        (
            "lipschitz graph",
            Box::new(move |t| {
                let s = 16.0 * t;
                let i = (s as usize).min(15);
                [t, knots[i] + (s - i as f64) * (knots[i + 1] - knots[i])]
            }),
        ),
    ]
}

/// Ceiling on the normalized square sum shared by every test curve.
const CURVE_SUM_CONSTANT: f64 = 16.0;

#[test]
fn traveling_salesman_necessity() {
    let _guard = lock();
    let started = Instant::now();
    let scales = 0..=4;
    let mut lines = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut worst_drift = 0.0f64;
    for (name, curve) in test_curves() {
        let ratio = |h: f64| {
            let (mu, length) = sample_curve(curve.as_ref(), h);
            let engine = BetaEngine::new(&mu);
            multi_sum(&engine, scales.clone(), 2.0, MultiVariant::Star)
                .unwrap()
                .total
                / length
        };
        let (coarse, fine) = (ratio(1.0 / 256.0), ratio(1.0 / 512.0));
        let drift = (fine - coarse).abs() / coarse.max(fine).max(1e-12);
        worst_ratio = worst_ratio.max(coarse).max(fine);
        worst_drift = worst_drift.max(drift);
        lines.push(format!("{name} {coarse:.4}->{fine:.4}"));
    }
    report(
        7,
        "traveling salesman necessity",
        worst_ratio <= CURVE_SUM_CONSTANT && worst_drift <= 0.25,
        started,
        None,
        format!(
            "sum of beta*^2 diam / length over scales 0..4 at spacing 1/256 -> 1/512: {}; max {worst_ratio:.4} <= {CURVE_SUM_CONSTANT}, max drift {:.2}%",
            lines.join(", "),
            100.0 * worst_drift
        ),
    );
}
