use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ProcessMatrix;
use crate::matrix::{
    hermitian_eig, param_to_psd, psd_projection, psd_to_param, ComplexMatrix, MatrixError, PSD_PARAMS,
};
use crate::rng;

use super::counts::CountTable;
use super::likelihood::PoissonModel;
use super::linear::linear_inversion;
use super::nelder_mead::NelderMead;
use super::{Method, ReconstructionResult, TomographyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleOptions {
    /// Total objective evaluations allowed per start.
    pub max_iter: usize,
    /// Objective improvement below which the fit counts as converged.
    pub tol: f64,
    /// Perturbed restarts tried when the primary start does not converge.
    pub restarts: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol: 1e-10,
            restarts: 3,
        }
    }
}

/// Parameter scale relative to `sqrt(tr χ)`: finite-difference base, and
/// the largest simplex edge along any direction.
const STEP: f64 = 0.02;
/// Finite-difference step for the Hessian, relative to the parameter scale.
const FD_STEP: f64 = 1e-3;
/// Each polishing pass starts its simplex this fraction of the previous size.
const POLISH_SHRINK: f64 = 0.25;
/// Spread of the perturbed restart seeds, in units of the parameter scale.
const RESTART_SPREAD: f64 = 5.0;
/// Evaluation budget of one simplex pass before the preconditioner is rebuilt.
const PASS_EVALS: usize = 4000;
/// Iteration cap for the projected-gradient seed refinement.
const SEED_ITERS: usize = 2000;
/// Cap on a preconditioned simplex edge, in units of the parameter scale.
const MAX_EDGE: f64 = 25.0;

struct Run {
    t: [f64; PSD_PARAMS],
    f: f64,
    evals: usize,
    converged: bool,
}

/// Central-difference Hessian of `f` at `x`; 1 + 2n + 2n(n−1) evaluations.
#[allow(clippy::needless_range_loop)]
fn hessian(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> (Vec<Vec<f64>>, usize) {
    let n = x.len();
    let f0 = f(x);
    let mut at = x.to_vec();
    let probe = |at: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, d) in moves {
            at[i] += d;
        }
        let v = f(at);
        for &(i, d) in moves {
            at[i] -= d;
        }
        v
    };
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        hess[i][i] = (probe(&mut at, &[(i, h)]) - 2.0 * f0 + probe(&mut at, &[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (probe(&mut at, &[(i, h), (j, h)])
                - probe(&mut at, &[(i, h), (j, -h)])
                - probe(&mut at, &[(i, -h), (j, h)])
                + probe(&mut at, &[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    (hess, 1 + 2 * n + 2 * n * (n - 1))
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi;
/// returns the eigenvalues and the eigenvectors as rows.
#[allow(clippy::needless_range_loop)]
fn symmetric_eig(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    // columns of v are eigenvectors
    let vectors = (0..n).map(|k| (0..n).map(|i| v[i][k]).collect()).collect();
    (values, vectors)
}

/// Simplex fit from `t0`. Each pass runs Nelder–Mead in coordinates
/// aligned with the local Hessian, with unit edges along `1/sqrt(λ)`, so the
/// simplex sees a roughly isotropic bowl whatever the conditioning of the
/// factor parameters. Passes repeat from the incumbent until one improves
/// the objective by less than `tol`.
fn polished_fit(model: &PoissonModel, t0: &[f64; PSD_PARAMS], scale: f64, opts: &MleOptions) -> Run {
    let objective = |t: &[f64]| model.deviance(t);
    let mut best = t0.to_vec();
    let mut f_best = objective(&best);
    let mut evals = 1;
    let mut size = 1.0;
    let mut converged = false;
    while evals < opts.max_iter {
        let hessian_cost = 1 + 2 * PSD_PARAMS * PSD_PARAMS;
        let axes: Vec<Vec<f64>> = if opts.max_iter - evals > 2 * hessian_cost {
            let (hess, used) = hessian(&objective, &best, FD_STEP * scale);
            evals += used;
            let (values, vectors) = symmetric_eig(hess);
            values
                .iter()
                .zip(&vectors)
                .map(|(&lambda, u)| {
                    let edge = (1.0 / lambda.abs().sqrt()).min(MAX_EDGE * scale);
                    u.iter().map(|x| x * edge).collect()
                })
                .collect()
        } else {
            // too little budget left for curvature: plain axis-aligned simplex
            (0..PSD_PARAMS)
                .map(|k| (0..PSD_PARAMS).map(|i| if i == k { scale } else { 0.0 }).collect())
                .collect()
        };
        let origin = best.clone();
        let to_t = |y: &[f64]| {
            let mut t = origin.clone();
            for (yk, axis) in y.iter().zip(&axes) {
                for (ti, ai) in t.iter_mut().zip(axis) {
                    *ti += yk * ai;
                }
            }
            t
        };
        let nm = NelderMead {
            max_evals: opts.max_iter.saturating_sub(evals).min(PASS_EVALS),
            f_tol: opts.tol,
        };
        let run = nm.minimize(|y| objective(&to_t(y)), &[0.0; PSD_PARAMS], &[size; PSD_PARAMS]);
        evals += run.evals;
        let improvement = f_best - run.f;
        if run.f < f_best {
            best = to_t(&run.x);
            f_best = run.f;
        }
        if run.converged && improvement < opts.tol {
            converged = true;
            break;
        }
        if run.converged {
            size = (size * POLISH_SHRINK).max(1e-3);
        }
    }
    Run {
        t: best.try_into().expect("16 parameters"),
        f: f_best,
        evals,
        converged,
    }
}

/// Accelerated projected gradient (FISTA with backtracking and adaptive
/// restart) on the deviance as a convex function of χ over the PSD cone.
/// Lands on the boundary exactly when the optimum is rank-deficient, where
/// the simplex over factor parameters is slowest.
fn projected_gradient(model: &PoissonModel, start: &ComplexMatrix, iters: usize) -> Result<ComplexMatrix, MatrixError> {
    let mut x = *start;
    let mut fx = model.deviance_grad(&x).0;
    let mut y = x;
    let mut momentum = 1.0f64;
    let mut lip = 1.0f64;
    for _ in 0..iters {
        let (fy, gy) = model.deviance_grad(&y);
        let mut accepted = None;
        for _ in 0..80 {
            let cand = psd_projection(&(y - gy.scale(1.0 / lip)))?;
            let d = cand - y;
            let fc = model.deviance_grad(&cand).0;
            // Re tr(G D)
            let lin: f64 = (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|(i, j)| (gy[(j, i)] * d[(i, j)]).re)
                .sum();
            if fc <= fy + lin + 0.5 * lip * d.frobenius_norm().powi(2) {
                accepted = Some((cand, fc));
                break;
            }
            lip *= 2.0;
        }
        let Some((next, f_next)) = accepted else { break };
        let restart = f_next > fx;
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        y = if restart {
            next
        } else {
            next + (next - x).scale((momentum - 1.0) / m_next)
        };
        momentum = if restart { 1.0 } else { m_next };
        let stalled = (fx - f_next).abs() <= 1e-14 * (1.0 + fx.abs());
        if f_next <= fx {
            x = next;
            fx = f_next;
        }
        if stalled {
            break;
        }
        lip *= 0.9;
    }
    Ok(x)
}

fn initial_parameters(table: &CountTable) -> Result<([f64; PSD_PARAMS], f64), TomographyError> {
    let li = linear_inversion(table)?;
    let projected = psd_projection(li.chi.matrix())?;
    let mut seed = projected_gradient(&PoissonModel::new(table), &projected, SEED_ITERS)?;
    if seed.trace().re <= 1e-12 {
        // no usable signal: start from a dim depolarizing channel
        seed = ComplexMatrix::identity(4).scale(1e-6);
    }
    let t = psd_to_param(&seed)?;
    Ok((t, STEP * seed.trace().re.sqrt()))
}

/// Poisson maximum-likelihood χ over `χ = T†T`, seeded from the
/// PSD-projected linear inversion. The trace is left free.
pub fn mle_reconstruct(table: &CountTable, opts: &MleOptions) -> Result<ReconstructionResult, TomographyError> {
    let model = PoissonModel::new(table);
    let (t0, scale) = initial_parameters(table)?;

    let mut best = polished_fit(&model, &t0, scale, opts);
    let mut evals = best.evals;
    if !best.converged {
        let mut noise = rng::stream(table.seed, &[rng::TAG_RESTART]);
        for _ in 0..opts.restarts {
            let mut t = t0;
            for x in t.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise);
                *x += RESTART_SPREAD * scale * z;
            }
            let run = polished_fit(&model, &t, scale, opts);
            evals += run.evals;
            if run.f < best.f || (run.converged && !best.converged && run.f <= best.f + opts.tol) {
                best = run;
            }
            if best.converged {
                break;
            }
        }
    }

    let chi = ProcessMatrix::from_hermitian(param_to_psd(&best.t));
    let min_eigenvalue = hermitian_eig(chi.matrix())?.min_eigenvalue();
    Ok(ReconstructionResult {
        nll: Some(model.nll_of(&chi)),
        chi,
        method: Method::Mle,
        iterations: evals,
        converged: best.converged,
        min_eigenvalue,
        degenerate_pairs: 0,
    })
}
