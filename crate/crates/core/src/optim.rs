//! Unconstrained minimizers: Nelder-Mead simplex and BFGS with a
//! backtracking line search.

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this (relative).
    pub ftol: f64,
    /// ...and the simplex diameter falls below this.
    pub xtol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 2000,
            ftol: 1e-10,
            xtol: 1e-8,
        }
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

impl NelderMead {
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64], steps: &[f64]) -> Minimum {
        let n = x0.len();
        let eval = |x: &[f64]| sanitize(f(x));
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += steps[i];
            let fx = eval(&x);
            simplex.push((x, fx));
        }
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let diam = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (worst - best).abs() <= self.ftol * (best.abs() + 1e-12) && diam <= self.xtol {
                converged = true;
                break;
            }
            iterations += 1;
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };
            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for (x, fx) in simplex.iter_mut().skip(1) {
                        for (xi, bi) in x.iter_mut().zip(&x0) {
                            *xi = bi + 0.5 * (*xi - bi);
                        }
                        *fx = eval(x);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        Minimum {
            x,
            f,
            iterations,
            converged,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Bfgs {
    pub max_iter: usize,
    /// Relative change in the objective.
    pub ftol: f64,
    /// Largest coordinate of the accepted step.
    pub xtol: f64,
    /// Largest gradient coordinate, relative to `1 + |f|`.
    pub gtol: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Bfgs {
            max_iter: 500,
            ftol: 1e-10,
            xtol: 1e-8,
            gtol: 1e-9,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl Bfgs {
    /// `fg` returns the objective and its gradient.
    pub fn minimize(&self, fg: impl Fn(&[f64]) -> (f64, Vec<f64>), x0: &[f64]) -> Minimum {
        let n = x0.len();
        let mut x = x0.to_vec();
        let (mut f, mut g) = fg(&x);
        let mut hinv = vec![vec![0.0; n]; n];
        for (i, row) in hinv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut first = true;
        let mut iterations = 0;
        let mut converged = false;
        if !f.is_finite() {
            return Minimum { x, f, iterations, converged };
        }
        while iterations < self.max_iter {
            if inf_norm(&g) <= self.gtol * (1.0 + f.abs()) {
                converged = true;
                break;
            }
            iterations += 1;
            let mut d: Vec<f64> = hinv.iter().map(|row| -dot(row, &g)).collect();
            let mut slope = dot(&d, &g);
            if !(slope < 0.0) {
                // lost descent direction; restart from steepest descent
                for (i, row) in hinv.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = 1.0;
                }
                d = g.iter().map(|v| -v).collect();
                slope = dot(&d, &g);
                first = true;
            }
            // cap the trial step at one unit per coordinate
            let scale = inf_norm(&d);
            let mut t = if scale > 1.0 { 1.0 / scale } else { 1.0 };
            let mut accepted = None;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let (fnew, gnew) = fg(&xn);
                if fnew.is_finite() && fnew <= f + 1e-4 * t * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fnew, gnew)) = accepted else {
                // no decrease possible at working precision
                converged = inf_norm(&g) <= 1e-5 * (1.0 + f.abs());
                break;
            };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
            let df = (f - fnew).abs();
            let done = df <= self.ftol * (1.0 + f.abs()) && inf_norm(&s) <= self.xtol;
            x = xn;
            f = fnew;
            g = gnew;
            if done {
                converged = true;
                break;
            }
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if first {
                    let gamma = sy / dot(&y, &y);
                    for (i, row) in hinv.iter_mut().enumerate() {
                        row.iter_mut().for_each(|v| *v = 0.0);
                        row[i] = gamma;
                    }
                    first = false;
                }
                let rho = 1.0 / sy;
                let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
                let yhy = dot(&y, &hy);
                for i in 0..n {
                    for j in 0..n {
                        hinv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
        }
        Minimum { x, f, iterations, converged }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosen_grad(x: &[f64]) -> (f64, Vec<f64>) {
        let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        let g1 = 200.0 * (x[1] - x[0] * x[0]);
        (rosen(x), vec![g0, g1])
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let m = NelderMead::default().minimize(rosen, &[-1.2, 1.0], &[0.5, 0.5]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let m = Bfgs::default().minimize(rosen_grad, &[-1.2, 1.0]);
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn bfgs_quadratic_is_exact() {
        let fg = |x: &[f64]| {
            let f = 3.0 * (x[0] - 2.0).powi(2) + 0.5 * (x[1] + 1.0).powi(2) + (x[0] - 2.0) * (x[1] + 1.0);
            let g = vec![6.0 * (x[0] - 2.0) + (x[1] + 1.0), (x[1] + 1.0) + (x[0] - 2.0)];
            (f, g)
        };
        let m = Bfgs::default().minimize(fg, &[0.0, 0.0]);
        assert!(m.converged);
        assert!((m.x[0] - 2.0).abs() < 1e-7 && (m.x[1] + 1.0).abs() < 1e-7);
    }
}
