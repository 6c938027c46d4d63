//! Derivative-free Nelder–Mead simplex minimizer.
//!
//! Uses the dimension-adaptive coefficients of Gao and Han, which keep the
//! method from stalling in the 16-dimensional fits done here.

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    /// Budget of objective evaluations.
    pub max_evals: usize,
    /// Converged once the spread of objective values across the simplex
    /// drops to this value.
    pub f_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    /// Minimizes `f` from `x0`; the initial simplex steps `steps[i]` along axis `i`.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(steps.len(), n);
        let nf = n as f64;
        let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
        let (rho, sigma) = (0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let fx0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), fx0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += steps[i];
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut converged = false;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[n].1);
            if worst - best <= self.f_tol {
                converged = true;
                break;
            }
            if evals >= self.max_evals {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }
            let along = |coef: f64, out: &mut Vec<f64>, worst: &[f64], centroid: &[f64]| {
                for ((o, c), w) in out.iter_mut().zip(centroid).zip(worst) {
                    *o = c + coef * (c - w);
                }
            };

            along(alpha, &mut trial, &simplex[n].0, &centroid);
            let f_reflect = eval(&trial, &mut evals);
            let second_worst = simplex[n - 1].1;

            if f_reflect < best {
                let reflected = trial.clone();
                along(alpha * gamma, &mut trial, &simplex[n].0, &centroid);
                let f_expand = eval(&trial, &mut evals);
                simplex[n] = if f_expand < f_reflect {
                    (trial.clone(), f_expand)
                } else {
                    (reflected, f_reflect)
                };
                continue;
            }
            if f_reflect < second_worst {
                simplex[n] = (trial.clone(), f_reflect);
                continue;
            }

            // contraction, outside if the reflection beat the worst point
            let (coef, bound) = if f_reflect < worst {
                (alpha * rho, f_reflect)
            } else {
                (-rho, worst)
            };
            along(coef, &mut trial, &simplex[n].0, &centroid);
            let f_contract = eval(&trial, &mut evals);
            if f_contract <= bound {
                simplex[n] = (trial.clone(), f_contract);
                continue;
            }

            let anchor = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (xi, ai) in x.iter_mut().zip(&anchor) {
                    *xi = ai + sigma * (*xi - ai);
                }
                *fx = eval(x, &mut evals);
            }
        }

        let (x, f) = simplex.swap_remove(0);
        Minimum { x, f, evals, converged }
    }
}
