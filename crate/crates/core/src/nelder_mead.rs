//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are clamped into the box before evaluation, so the simplex
//! never leaves the feasible region.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once the largest vertex distance from the best vertex falls below this.
    pub diameter_tol: f64,
    pub max_evals: usize,
    /// Initial simplex edge as a fraction of each box side.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-6,
            max_evals: 4_000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(p, _)| p.iter().zip(best).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over the box `[lower, upper]` from `start`.
pub fn minimize<F>(mut f: F, start: &[f64], lower: &[f64], upper: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);
    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x0 = start.to_vec();
    clamp_into(&mut x0, lower, upper);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), v0));
    for k in 0..n {
        let mut p = x0.clone();
        let h = opts.initial_step * (upper[k] - lower[k]);
        // step toward the roomier side so the vertex stays distinct after clamping
        p[k] = if upper[k] - x0[k] >= x0[k] - lower[k] {
            x0[k] + h
        } else {
            x0[k] - h
        };
        clamp_into(&mut p, lower, upper);
        let v = eval(&p, &mut evals);
        simplex.push((p, v));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| {
            let mut p: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (p, v) in simplex.iter_mut().skip(1) {
            for (x, b) in p.iter_mut().zip(&best) {
                *x = b + shrink * (*x - b);
            }
            *v = eval(p, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let m = minimize(
            |x| (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 0.2).powi(2),
            &[0.9, 0.9],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 0.3).abs() < 1e-5 && (m.x[1] + 0.2).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn respects_box() {
        let m = minimize(|x| x[0], &[0.5], &[0.2], &[1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let m = minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[-2.0, -2.0],
            &[2.0, 2.0],
            &NelderMeadOptions {
                diameter_tol: 1e-9,
                max_evals: 20_000,
                ..Default::default()
            },
        );
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }
}
