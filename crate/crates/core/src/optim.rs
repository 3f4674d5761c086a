//! Small derivative-free minimizers used by the line-fitting routines.

/// Golden-section search for a unimodal function on `[a, b]`.
pub(crate) fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Nelder-Mead simplex minimization starting at `x0` with initial step `step`.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let m = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    simplex.push(x0.to_vec());
    for i in 0..m {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evals = m + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[m] - values[0];
        if spread.abs() <= ftol * (1.0 + values[0].abs()) {
            let size = simplex[1..]
                .iter()
                .map(|x| {
                    x.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if size <= 1e-13 {
                break;
            }
        }
        let mut centroid = vec![0.0; m];
        for x in &simplex[..m] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / m as f64;
            }
        }
        let worst = simplex[m].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[m] = xe;
                values[m] = fe;
            } else {
                simplex[m] = xr;
                values[m] = fr;
            }
        } else if fr < values[m - 1] {
            simplex[m] = xr;
            values[m] = fr;
        } else {
            let (xc, fc) = if fr < values[m] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < values[m].min(fr) {
                simplex[m] = xc;
                values[m] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=m {
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    values[i] = f(&simplex[i]);
                    evals += 1;
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3) * (x - 0.3) + 1.0, -2.0, 5.0, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nelder_mead_finds_bowl_minimum() {
        let (x, fx) = nelder_mead(
            |v| (v[0] - 1.0).powi(2) + 3.0 * (v[1] + 2.0).powi(2),
            &[0.0, 0.0],
            0.5,
            2000,
            1e-14,
        );
        assert!(
            (x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5,
            "{x:?}"
        );
        assert!(fx < 1e-9);
    }
}
