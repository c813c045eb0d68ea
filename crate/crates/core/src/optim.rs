//! Derivative-free maximizers: golden-section search on an interval and a
//! box-constrained Nelder-Mead simplex method.

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`; the endpoints are compared as well so a monotone
/// `f` reports the correct edge.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let (lo, hi) = (a, b);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .fold((mid, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Settings for [`nelder_mead_max`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// ... and the simplex diameter falls below this.
    pub xtol: f64,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            ftol: 1e-12,
            xtol: 1e-9,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Maximizes `f` over the unit box `[0,1]^m` with Nelder-Mead. Trial points
/// are projected onto the box. Non-finite values count as `-inf`.
pub fn nelder_mead_max(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: NmOptions) -> NmResult {
    let m = x0.len();
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|t| *t = t.clamp(0.0, 1.0));
    let evals = std::cell::Cell::new(0usize);
    // minimize the negated objective
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    if m == 0 {
        let v = eval(x0);
        return NmResult {
            x: Vec::new(),
            value: -v,
            evals: 1,
            converged: true,
        };
    }

    let mut start = x0.to_vec();
    clamp(&mut start);
    let mut simplex = vec![start.clone()];
    for i in 0..m {
        let mut v = start.clone();
        v[i] = if v[i] + opts.step <= 1.0 { v[i] + opts.step } else { v[i] - opts.step };
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut converged = false;

    while evals.get() < opts.max_evals {
        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[m] - vals[0];
        let diam = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.ftol && diam <= opts.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..m)
            .map(|j| simplex[..m].iter().map(|v| v[j]).sum::<f64>() / m as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[m])
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp(&mut p);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[m] = xe;
                vals[m] = fe;
            } else {
                simplex[m] = xr;
                vals[m] = fr;
            }
        } else if fr < vals[m - 1] {
            simplex[m] = xr;
            vals[m] = fr;
        } else {
            let (xc, fc) = if fr < vals[m] {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < vals[m].min(fr) {
                simplex[m] = xc;
                vals[m] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=m {
                    let mut p: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&best)
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    clamp(&mut p);
                    vals[i] = eval(&p);
                    simplex[i] = p;
                }
            }
        }
    }

    let best = (0..=m).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    NmResult {
        x: simplex[best].clone(),
        value: -vals[best],
        evals: evals.get(),
        converged,
    }
}

/// Nelder-Mead restarted from its own optimum until the value stops
/// improving by more than `ftol`.
pub fn nelder_mead_restarts(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    opts: NmOptions,
    max_restarts: usize,
) -> NmResult {
    let mut best = nelder_mead_max(&f, x0, opts);
    let mut evals = best.evals;
    let mut step = opts.step;
    for _ in 0..max_restarts {
        step = (step * 0.5).max(1e-4);
        let next = nelder_mead_max(&f, &best.x, NmOptions { step, ..opts });
        evals += next.evals;
        let gain = next.value - best.value;
        if next.value > best.value {
            best = next;
        }
        if gain <= opts.ftol {
            break;
        }
    }
    best.evals = evals;
    best
}

/// Coordinate-wise Newton steps on central-difference derivatives with
/// spacing `h`, inside the unit box. Locates a smooth interior maximum to
/// about `h^2`, well below the `sqrt(eps)` resolution of value comparisons.
/// A step is kept only if `f` does not drop by more than rounding noise.
pub fn newton_polish(f: impl Fn(&[f64]) -> f64, x0: &[f64], h: f64, rounds: usize) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    for _ in 0..rounds {
        let mut largest = 0.0f64;
        for i in 0..x.len() {
            if x[i] - h < 0.0 || x[i] + h > 1.0 {
                continue;
            }
            let xi = x[i];
            x[i] = xi + h;
            let fp = f(&x);
            x[i] = xi - h;
            let fm = f(&x);
            x[i] = xi;
            let curv = (fp - 2.0 * fx + fm) / (h * h);
            if !(curv < 0.0) || !fp.is_finite() || !fm.is_finite() {
                continue;
            }
            let step = (-(fp - fm) / (2.0 * h) / curv).clamp(-0.01, 0.01);
            x[i] = (xi + step).clamp(0.0, 1.0);
            let fnew = f(&x);
            if fnew >= fx - 1e-15 * (1.0 + fx.abs()) {
                fx = fnew;
                largest = largest.max(step.abs());
            } else {
                x[i] = xi;
            }
        }
        if largest < 1e-13 {
            break;
        }
    }
    (x, fx)
}

/// All points of the regular grid with `n` intervals per axis on `[0,1]^m`.
pub fn box_grid(m: usize, n: usize) -> Vec<Vec<f64>> {
    let per_axis = n + 1;
    let total = per_axis.pow(m as u32);
    (0..total)
        .map(|mut k| {
            (0..m)
                .map(|_| {
                    let i = k % per_axis;
                    k /= per_axis;
                    i as f64 / n as f64
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_max() {
        let (x, v) = golden_max(|t| -(t - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_reports_edge() {
        let (x, _) = golden_max(|t| t, 0.0, 0.5, 1e-10);
        assert_eq!(x, 0.5);
    }

    #[test]
    fn nm_quadratic() {
        let f = |x: &[f64]| -(x[0] - 0.2).powi(2) - 2.0 * (x[1] - 0.7).powi(2);
        let r = nelder_mead_max(f, &[0.5, 0.5], NmOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.2).abs() < 1e-6 && (r.x[1] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn nm_respects_box() {
        let f = |x: &[f64]| x[0] + x[1] + x[2];
        let r = nelder_mead_max(f, &[0.5, 0.5, 0.5], NmOptions::default());
        assert!(r.x.iter().all(|&t| (0.0..=1.0).contains(&t)));
        assert!((r.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn nm_zero_dim() {
        let r = nelder_mead_max(|_| 4.0, &[], NmOptions::default());
        assert_eq!(r.value, 4.0);
    }

    #[test]
    fn restarts_do_not_lose_value() {
        let f = |x: &[f64]| -((x[0] - 0.9).powi(2) + (x[1] - 0.1).powi(2)).sqrt();
        let one = nelder_mead_max(f, &[0.1, 0.9], NmOptions::default());
        let many = nelder_mead_restarts(f, &[0.1, 0.9], NmOptions::default(), 5);
        assert!(many.value >= one.value);
        assert!(many.value > -1e-6);
    }

    #[test]
    fn newton_polish_sharpens_argmax() {
        let f = |x: &[f64]| 1.0 - (x[0] - 0.5).powi(2) - 3.0 * (x[1] - 0.25).powi(4) - (x[1] - 0.25).powi(2);
        let (x, v) = newton_polish(f, &[0.5 + 3e-8, 0.25 - 2e-8], 1e-5, 20);
        assert!((x[0] - 0.5).abs() < 1e-11 && (x[1] - 0.25).abs() < 1e-11, "{x:?}");
        assert!(v >= f(&[0.5 + 3e-8, 0.25 - 2e-8]));
    }

    #[test]
    fn grid_size_and_corners() {
        let g = box_grid(2, 4);
        assert_eq!(g.len(), 25);
        assert!(g.contains(&vec![1.0, 0.0]));
        assert_eq!(box_grid(0, 4), vec![Vec::<f64>::new()]);
    }
}
