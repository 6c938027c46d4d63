//! Poisson likelihood of mean counts under a candidate process.
//!
//! The detection probability of setting (m, k) is linear in χ:
//! `p = tr(P_k Σ χ_ij Γ_i ρ_m Γ_j) = v† χ v` with `v_i = conj(⟨k|Γ_i|m⟩)`,
//! so with `χ = T†T` it is simply `‖T v‖²`.

use crate::channel::{ProcessMatrix, SETTINGS};
use crate::matrix::{ComplexMatrix, C64, PSD_PARAMS, PSD_TOL};
use crate::polarization::{pauli, tomography_state, Label};

use super::counts::CountTable;
use super::TomographyError;

const MU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct PoissonModel {
    vectors: [[C64; 4]; SETTINGS],
    means: [f64; SETTINGS],
    photons: f64,
    background: f64,
    /// Total observed mean count, at least 1; the deviance is divided by it.
    weight: f64,
}

fn setting_vectors() -> [[C64; 4]; SETTINGS] {
    let mut out = [[C64::new(0.0, 0.0); 4]; SETTINGS];
    for prep in Label::ALL {
        let m = tomography_state(prep).amplitudes;
        for analyzer in Label::ALL {
            let k = tomography_state(analyzer).amplitudes;
            let v = &mut out[6 * prep.index() + analyzer.index()];
            for (i, vi) in v.iter_mut().enumerate() {
                let gm = pauli(i).mat_vec(&m);
                let u = k[0].conj() * gm[0] + k[1].conj() * gm[1];
                *vi = u.conj();
            }
        }
    }
    out
}

impl PoissonModel {
    pub(crate) fn new(table: &CountTable) -> Self {
        Self {
            vectors: setting_vectors(),
            means: table.means,
            photons: table.photons_per_pulse,
            background: table.background,
            weight: table.means.iter().sum::<f64>().max(1.0),
        }
    }

    fn rate(&self, p: f64) -> f64 {
        (self.photons * p + self.background).max(MU_FLOOR)
    }

    /// `Σ μ − n̄ ln μ` for an arbitrary Hermitian χ.
    pub(crate) fn nll_of(&self, chi: &ProcessMatrix) -> f64 {
        let m = chi.matrix();
        let mut total = 0.0;
        for (v, &n) in self.vectors.iter().zip(self.means.iter()) {
            let mut p = C64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    p += v[i].conj() * m[(i, j)] * v[j];
                }
            }
            let mu = self.rate(p.re);
            total += mu - n * mu.ln();
        }
        total
    }

    /// Same objective shifted by the saturated model and divided by the total
    /// count, `Σ [μ − n̄ − n̄ ln(μ/n̄)] / Σ n̄`, evaluated straight from the
    /// factor parameters. Its minimum sits near zero and its round-off does
    /// not grow with the photon number, so a fixed tolerance means the same
    /// thing at any brightness.
    pub(crate) fn deviance(&self, t: &[f64]) -> f64 {
        debug_assert_eq!(t.len(), PSD_PARAMS);
        // rows of the lower-triangular factor
        let d = [t[0], t[1], t[2], t[3]];
        let o = |k: usize| C64::new(t[4 + 2 * k], t[5 + 2 * k]);
        let (t10, t20, t21, t30, t31, t32) = (o(0), o(1), o(2), o(3), o(4), o(5));
        let mut total = 0.0;
        for (v, &n) in self.vectors.iter().zip(self.means.iter()) {
            let r0 = v[0] * d[0];
            let r1 = t10 * v[0] + v[1] * d[1];
            let r2 = t20 * v[0] + t21 * v[1] + v[2] * d[2];
            let r3 = t30 * v[0] + t31 * v[1] + t32 * v[2] + v[3] * d[3];
            let p = r0.norm_sqr() + r1.norm_sqr() + r2.norm_sqr() + r3.norm_sqr();
            let mu = self.rate(p);
            total += if n > 0.0 { mu - n - n * (mu / n).ln() } else { mu };
        }
        total / self.weight
    }
}

impl PoissonModel {
    /// [`Self::deviance`] and its gradient `Σ N₀(1 − n̄/μ) v v† / Σ n̄` for a Hermitian χ.
    pub(crate) fn deviance_grad(&self, chi: &ComplexMatrix) -> (f64, ComplexMatrix) {
        let mut total = 0.0;
        let mut grad = ComplexMatrix::zeros(4);
        for (v, &n) in self.vectors.iter().zip(self.means.iter()) {
            let w = chi.mat_vec(v);
            let p: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
            let mu = self.rate(p);
            total += if n > 0.0 { mu - n - n * (mu / n).ln() } else { mu };
            grad = grad + ComplexMatrix::outer(v, v).scale(self.photons * (1.0 - n / mu));
        }
        (total / self.weight, grad.scale(1.0 / self.weight))
    }
}

/// Poisson negative log-likelihood `Σ_{m,k} [μ_{m,k} − n̄_{m,k} ln μ_{m,k}]`,
/// with `μ = N₀·tr(P_k χ(ρ_m)) + background` floored at 1e-12.
pub fn nll(chi: &ProcessMatrix, table: &CountTable) -> Result<f64, TomographyError> {
    let min = chi.min_eigenvalue()?;
    if min < -PSD_TOL {
        return Err(crate::channel::ChannelError::UnphysicalChi(format!("min eigenvalue {min:.3e}")).into());
    }
    Ok(PoissonModel::new(table).nll_of(chi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{chi_from_kraus, setting_probabilities, ShotConfig};
    use crate::matrix::{param_to_psd, psd_to_param, ComplexMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shots() -> ShotConfig {
        ShotConfig {
            photons_per_pulse: 5000.0,
            background: 0.0,
            repetitions: 500,
            seed: 2,
        }
    }

    fn random_channel(rng: &mut impl Rng) -> ProcessMatrix {
        let ks: Vec<ComplexMatrix> = (0..rng.random_range(1..=4))
            .map(|_| {
                let e: Vec<C64> = (0..4)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                ComplexMatrix::from_row_major(&e).unwrap()
            })
            .collect();
        let sum = ks.iter().fold(ComplexMatrix::zeros(2), |acc, k| acc + k.adjoint() * *k);
        let max = crate::matrix::hermitian_eig(&sum.hermitian_part()).unwrap().eigenvalues[1];
        let scale = rng.random_range(0.05..1.0) / max.sqrt();
        chi_from_kraus(&ks.iter().map(|k| k.scale(scale)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn vectors_reproduce_born_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vectors = setting_vectors();
        for _ in 0..20 {
            let chi = random_channel(&mut rng);
            let probs = setting_probabilities(&chi);
            let t = psd_to_param(chi.matrix()).unwrap();
            let f = crate::matrix::param_to_factor(&t);
            for (v, p) in vectors.iter().zip(probs.iter()) {
                let tv = f.mat_vec(v);
                let q: f64 = tv.iter().map(|z| z.norm_sqr()).sum();
                assert!((q - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deviance_is_shifted_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth = random_channel(&mut rng);
        let table = CountTable::noiseless(&truth, &shots());
        let model = PoissonModel::new(&table);
        let offset: f64 = table.means.iter().filter(|&&n| n > 0.0).map(|&n| n - n * n.ln()).sum();
        for _ in 0..20 {
            let t: Vec<f64> = (0..16).map(|_| rng.random_range(-0.5..0.5)).collect();
            let chi = ProcessMatrix::new(param_to_psd(&t.clone().try_into().unwrap())).unwrap();
            let a = model.deviance(&t) * model.weight + offset;
            let b = model.nll_of(&chi);
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn truth_is_optimal_on_noiseless_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let truth = random_channel(&mut rng);
        let table = CountTable::noiseless(&truth, &shots());
        let best = nll(&truth, &table).unwrap();
        for _ in 0..1000 {
            let other = random_channel(&mut rng);
            assert!(best <= nll(&other, &table).unwrap());
        }
    }

    #[test]
    fn gross_mismatch_is_penalized() {
        let x = ProcessMatrix::from_diag([0.0, 1.0, 0.0, 0.0]);
        let table = CountTable::noiseless(&x, &shots());
        assert!(nll(&ProcessMatrix::identity(), &table).unwrap() > nll(&x, &table).unwrap());
    }

    #[test]
    fn constant_shift_only_moves_background_term() {
        // adding c to every mean count is the same as a background of c: the
        // objective gains a χ-independent offset only when the model also
        // carries that background
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let truth = random_channel(&mut rng);
        let s = shots();
        let shifted_shots = ShotConfig { background: 3.0, ..s };
        let base = CountTable::noiseless(&truth, &s);
        let shifted = CountTable::noiseless(&truth, &shifted_shots);
        for (a, b) in base.means.iter().zip(shifted.means.iter()) {
            assert!((b - a - 3.0).abs() < 1e-9);
        }
        // finite-difference gradient of the shifted objective vanishes at the truth
        let model = PoissonModel::new(&shifted);
        let t0 = psd_to_param(truth.matrix()).unwrap();
        let h = 1e-6;
        for k in 0..16 {
            let mut up = t0;
            let mut down = t0;
            up[k] += h;
            down[k] -= h;
            let g = (model.deviance(&up) - model.deviance(&down)) / (2.0 * h);
            assert!(g.abs() < 1e-4, "component {k}: {g}");
        }
        // and the truth still beats perturbed candidates
        let best = nll(&truth, &shifted).unwrap();
        for _ in 0..200 {
            let other = random_channel(&mut rng);
            assert!(best <= nll(&other, &shifted).unwrap());
        }
    }

    #[test]
    fn unphysical_input_is_rejected() {
        let table = CountTable::noiseless(&ProcessMatrix::identity(), &shots());
        let bad = ProcessMatrix::from_diag([1.0, -0.2, 0.0, 0.0]);
        assert!(nll(&bad, &table).is_err());
    }
}
