//! Derivative-free local minimization.

use alloc::vec::Vec;

/// Nelder–Mead simplex search from `x0` with initial step `step` along each
/// axis. Stops after `max_evals` evaluations or when the simplex values span
/// less than `ftol`. Returns the best point and value.
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    while evals < max_evals {
        let spread = simplex[n].1 - simplex[0].1;
        if spread.is_finite() && spread.abs() < ftol {
            break;
        }
        let mut centroid = alloc::vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *v = f(x);
                }
                evals += n;
            }
        }
        order(&mut simplex);
    }
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_the_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, v) = minimize(&f, &[-1.2, 1.0], 0.5, 5000, 1e-14);
        assert!(v < 1e-8, "{x:?} {v}");
    }

    #[test]
    fn respects_the_evaluation_budget() {
        let count = core::cell::Cell::new(0);
        let f = |x: &[f64]| {
            count.set(count.get() + 1);
            x.iter().map(|v| v * v).sum::<f64>()
        };
        minimize(&f, &[3.0, -2.0, 1.0], 1.0, 50, 0.0);
        assert!(count.get() <= 50 + 3);
    }
}
