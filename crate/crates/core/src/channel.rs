//! Single-qubit channels in the χ (process-matrix) representation and a
//! phenomenological model of a dual-rail memory: one arm stores H, the other
//! V, each with its own retrieval efficiency, plus a residual interferometer
//! phase between the arms and a small depolarizing imperfection.
//!
//! χ is expanded in the unnormalized Pauli set {I, X, Y, Z}, so the identity
//! process is `diag(1, 0, 0, 0)` and `tr χ` is the channel transmission
//! averaged over a maximally mixed input.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{hermitian_eig, ComplexMatrix, MatrixError, C64, HERMITIAN_TOL, PSD_TOL};
use crate::polarization::{density_of, pauli, projector_prob, tomography_state, DensityMatrix, Label};
use crate::rng;

/// Number of (preparation, analyzer) settings.
pub const SETTINGS: usize = 36;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("process matrix is not physical: {0}")]
    UnphysicalChi(String),
    #[error("Kraus set increases trace (max eigenvalue of sum K†K is {0:.6})")]
    TraceIncreasing(f64),
    #[error("operator is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// 4×4 Hermitian process matrix.
///
/// Estimates from linear inversion may carry negative eigenvalues, so the
/// type only enforces Hermiticity; [`ProcessMatrix::check_physical`] tests
/// complete positivity and the trace bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix(ComplexMatrix);

impl ProcessMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, ChannelError> {
        if m.dim() != 4 {
            return Err(MatrixError::DimMismatch(m.dim(), 4).into());
        }
        let defect = m.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(MatrixError::NotHermitian(defect).into());
        }
        Ok(Self(m.hermitian_part()))
    }

    pub(crate) fn from_hermitian(m: ComplexMatrix) -> Self {
        Self(m.hermitian_part())
    }

    pub fn identity() -> Self {
        Self::from_diag([1.0, 0.0, 0.0, 0.0])
    }

    pub fn from_diag(d: [f64; 4]) -> Self {
        Self(ComplexMatrix::from_real_diag(&d))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    /// Unit-trace copy; `None` for a zero-trace matrix.
    pub fn normalized(&self) -> Option<Self> {
        let tr = self.trace();
        (tr > 0.0).then(|| self.scaled(1.0 / tr))
    }

    pub fn min_eigenvalue(&self) -> Result<f64, MatrixError> {
        Ok(hermitian_eig(&self.0)?.min_eigenvalue())
    }

    /// PSD within [`PSD_TOL`] and `0 ≤ tr χ ≤ 1 + 1e-9`.
    pub fn check_physical(&self) -> Result<(), ChannelError> {
        let min = self.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(ChannelError::UnphysicalChi(format!("min eigenvalue {min:.3e}")));
        }
        let tr = self.trace();
        if !(0.0..=1.0 + 1e-9).contains(&tr) {
            return Err(ChannelError::UnphysicalChi(format!("trace {tr}")));
        }
        Ok(())
    }

    /// χ-weighted sum `Σ χ_ij Γ_i ρ Γ_j`, without any physicality check.
    pub(crate) fn act(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut left = [ComplexMatrix::zeros(2); 4];
        for (i, l) in left.iter_mut().enumerate() {
            *l = pauli(i) * *rho;
        }
        let mut out = ComplexMatrix::zeros(2);
        for (i, l) in left.iter().enumerate() {
            for j in 0..4 {
                let w = self.0[(i, j)];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                out = out + (*l * pauli(j)).scale_complex(w);
            }
        }
        out.hermitian_part()
    }
}

/// Output state of the channel χ on input `rho`.
pub fn apply_chi(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix, ChannelError> {
    chi.check_physical()?;
    Ok(DensityMatrix::from_matrix_unchecked(chi.act(rho.matrix())))
}

/// Pauli coefficients `a_i = tr(Γ_i K)/2`.
pub fn pauli_coefficients(k: &ComplexMatrix) -> [C64; 4] {
    std::array::from_fn(|i| (pauli(i) * *k).trace() * 0.5)
}

pub fn chi_from_kraus(kraus: &[ComplexMatrix]) -> Result<ProcessMatrix, ChannelError> {
    let mut completeness = ComplexMatrix::zeros(2);
    for k in kraus {
        if k.dim() != 2 {
            return Err(MatrixError::DimMismatch(k.dim(), 2).into());
        }
        completeness = completeness + k.adjoint() * *k;
    }
    let max = hermitian_eig(&completeness.hermitian_part())?.eigenvalues[1];
    if max > 1.0 + 1e-9 {
        return Err(ChannelError::TraceIncreasing(max));
    }
    let mut chi = ComplexMatrix::zeros(4);
    for k in kraus {
        let a = pauli_coefficients(k);
        chi = chi + ComplexMatrix::outer(&a, &a);
    }
    Ok(ProcessMatrix::from_hermitian(chi))
}

/// Direct Kraus action `Σ K ρ K†`.
pub fn apply_kraus(kraus: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    kraus
        .iter()
        .fold(ComplexMatrix::zeros(2), |acc, k| acc + *k * *rho * k.adjoint())
}

pub fn unitary_chi(u: &ComplexMatrix) -> Result<ProcessMatrix, ChannelError> {
    if u.dim() != 2 {
        return Err(MatrixError::DimMismatch(u.dim(), 2).into());
    }
    let deviation = (u.adjoint() * *u - ComplexMatrix::identity(2)).frobenius_norm();
    if deviation > 1e-10 {
        return Err(ChannelError::NotUnitary(deviation));
    }
    let a = pauli_coefficients(u);
    Ok(ProcessMatrix::from_hermitian(ComplexMatrix::outer(&a, &a)))
}

/// Retrieval efficiency after storage time `t` under Gaussian dephasing,
/// `η₀ · exp(−t²/τ²)`.
pub fn efficiency_decay(t: f64, eta0: f64, tau: f64) -> f64 {
    eta0 * (-(t * t) / (tau * tau)).exp()
}

/// Storage-time-independent description of the dual-rail memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    /// Zero-time retrieval efficiency of the H arm.
    pub eta_h0: f64,
    /// Zero-time retrieval efficiency of the V arm.
    pub eta_v0: f64,
    /// Uncompensated interferometer phase between the arms, radians.
    pub residual_phase: f64,
    /// Dephasing time constant, ns.
    pub decay_tau: f64,
    /// Depolarizing weight ε of the interferometer imperfection.
    pub off_depolarization: f64,
    /// Fraction of each arm's efficiency removed from the transmitted light.
    #[serde(default = "default_storage_fraction")]
    pub storage_fraction: f64,
}

fn default_storage_fraction() -> f64 {
    1.0
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self {
            eta_h0: 0.15,
            eta_v0: 0.15,
            residual_phase: 0.35,
            decay_tau: 1000.0,
            off_depolarization: 0.02,
            storage_fraction: 1.0,
        }
    }
}

impl MemoryModel {
    /// Ideal balanced memory: no phase error, no depolarization.
    pub fn balanced(eta0: f64, decay_tau: f64) -> Self {
        Self {
            eta_h0: eta0,
            eta_v0: eta0,
            residual_phase: 0.0,
            decay_tau,
            off_depolarization: 0.0,
            storage_fraction: 1.0,
        }
    }

    pub fn at(&self, storage_time: f64) -> MemoryChannelParams {
        MemoryChannelParams {
            model: *self,
            storage_time,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ChannelError::InvalidParams(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("eta_h0", self.eta_h0)?;
        unit("eta_v0", self.eta_v0)?;
        unit("storage_fraction", self.storage_fraction)?;
        if self.decay_tau.is_nan() || self.decay_tau <= 0.0 {
            return Err(ChannelError::InvalidParams(format!(
                "decay_tau = {} must be positive",
                self.decay_tau
            )));
        }
        if !(0.0..=0.1).contains(&self.off_depolarization) {
            return Err(ChannelError::InvalidParams(format!(
                "off_depolarization = {} outside [0, 0.1]",
                self.off_depolarization
            )));
        }
        if !self.residual_phase.is_finite() {
            return Err(ChannelError::InvalidParams("residual_phase must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryChannelParams {
    #[serde(flatten)]
    pub model: MemoryModel,
    /// ns
    pub storage_time: f64,
}

impl MemoryChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        self.model.validate()?;
        if self.storage_time.is_nan() || self.storage_time < 0.0 {
            return Err(ChannelError::InvalidParams(format!(
                "storage_time = {} must be non-negative",
                self.storage_time
            )));
        }
        Ok(())
    }

    pub fn eta_h(&self) -> f64 {
        efficiency_decay(self.storage_time, self.model.eta_h0, self.model.decay_tau)
    }

    pub fn eta_v(&self) -> f64 {
        efficiency_decay(self.storage_time, self.model.eta_v0, self.model.decay_tau)
    }
}

fn depolarization_mix(chi: ProcessMatrix, eps: f64) -> ProcessMatrix {
    let depol = ComplexMatrix::identity(4).scale(0.25 * chi.trace());
    ProcessMatrix::from_hermitian(chi.matrix().scale(1.0 - eps) + depol.scale(eps))
}

fn diagonal_kraus(h: C64, v: C64) -> ComplexMatrix {
    ComplexMatrix::from_row_major(&[h, C64::new(0.0, 0.0), C64::new(0.0, 0.0), v]).expect("2x2 entries")
}

/// Retrieval process: `K = diag(√η_H(t), e^{iδφ}√η_V(t))`, then ε-depolarized.
pub fn memory_chi(p: &MemoryChannelParams) -> Result<ProcessMatrix, ChannelError> {
    p.validate()?;
    let k = diagonal_kraus(
        C64::new(p.eta_h().sqrt(), 0.0),
        C64::from_polar(p.eta_v().sqrt(), p.model.residual_phase),
    );
    Ok(depolarization_mix(chi_from_kraus(&[k])?, p.model.off_depolarization))
}

/// Memory switched off: the interferometer alone, `(1−ε)·I-process + ε·I/4`.
pub fn off_chi(p: &MemoryChannelParams) -> Result<ProcessMatrix, ChannelError> {
    p.validate()?;
    Ok(depolarization_mix(
        ProcessMatrix::identity(),
        p.model.off_depolarization,
    ))
}

/// Light that was not stored: `K = diag(√(1−s·η_H0), √(1−s·η_V0))`, ε-depolarized.
pub fn transmitted_chi(p: &MemoryChannelParams) -> Result<ProcessMatrix, ChannelError> {
    p.validate()?;
    let s = p.model.storage_fraction;
    let k = diagonal_kraus(
        C64::new((1.0 - s * p.model.eta_h0).sqrt(), 0.0),
        C64::new((1.0 - s * p.model.eta_v0).sqrt(), 0.0),
    );
    Ok(depolarization_mix(chi_from_kraus(&[k])?, p.model.off_depolarization))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    /// Mean photon number per pulse entering the channel.
    pub photons_per_pulse: f64,
    /// Mean background photons per pulse at the detector.
    pub background: f64,
    /// Shots recorded per setting.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            photons_per_pulse: 5000.0,
            background: 0.0,
            repetitions: 500,
            seed: 20120101,
        }
    }
}

impl ShotConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.photons_per_pulse > 0.0 && self.photons_per_pulse.is_finite()) {
            return Err(ChannelError::InvalidParams(format!(
                "photons_per_pulse = {} must be positive",
                self.photons_per_pulse
            )));
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return Err(ChannelError::InvalidParams(format!(
                "background = {} must be non-negative",
                self.background
            )));
        }
        if self.repetitions == 0 {
            return Err(ChannelError::InvalidParams("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelTag {
    MemoryOn,
    MemoryOff,
    Transmitted,
}

impl ChannelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelTag::MemoryOn => "memory_on",
            ChannelTag::MemoryOff => "memory_off",
            ChannelTag::Transmitted => "transmitted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub prep: Label,
    pub analyzer: Label,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    pub channel_tag: ChannelTag,
    pub shot_config: ShotConfig,
    pub settings: Vec<SettingRecord>,
}

/// Index of a (preparation, analyzer) pair in prep-major order.
pub fn setting_index(prep: Label, analyzer: Label) -> usize {
    6 * prep.index() + analyzer.index()
}

impl TomographyDataset {
    pub fn from_json(text: &str) -> Result<Self, ChannelError> {
        let ds: Self = serde_json::from_str(text).map_err(|e| ChannelError::InvalidDataset(e.to_string()))?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.shot_config
            .validate()
            .map_err(|e| ChannelError::InvalidDataset(e.to_string()))?;
        if self.settings.len() != SETTINGS {
            return Err(ChannelError::InvalidDataset(format!(
                "expected {SETTINGS} settings, found {}",
                self.settings.len()
            )));
        }
        let mut seen = [false; SETTINGS];
        for s in &self.settings {
            let idx = setting_index(s.prep, s.analyzer);
            if std::mem::replace(&mut seen[idx], true) {
                return Err(ChannelError::InvalidDataset(format!(
                    "duplicate setting ({}, {})",
                    s.prep, s.analyzer
                )));
            }
            if s.counts.len() != self.shot_config.repetitions {
                return Err(ChannelError::InvalidDataset(format!(
                    "setting ({}, {}) has {} counts, expected {}",
                    s.prep,
                    s.analyzer,
                    s.counts.len(),
                    self.shot_config.repetitions
                )));
            }
        }
        Ok(())
    }

    /// Per-setting sample means in prep-major order.
    pub fn mean_counts(&self) -> [f64; SETTINGS] {
        let mut means = [0.0; SETTINGS];
        for s in &self.settings {
            let total: u64 = s.counts.iter().sum();
            means[setting_index(s.prep, s.analyzer)] = total as f64 / s.counts.len() as f64;
        }
        means
    }
}

/// Born-rule detection probabilities `tr(P_k · χ(ρ_m))` for all settings.
pub fn setting_probabilities(chi: &ProcessMatrix) -> [f64; SETTINGS] {
    let mut probs = [0.0; SETTINGS];
    for prep in Label::ALL {
        let out = DensityMatrix::from_matrix_unchecked(chi.act(density_of(&tomography_state(prep)).matrix()));
        for analyzer in Label::ALL {
            probs[setting_index(prep, analyzer)] = projector_prob(&out, analyzer).max(0.0);
        }
    }
    probs
}

pub(crate) fn poisson_sample(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    draw as u64
}

/// Draws Poisson counts with mean `N₀·p + background` for every shot of every
/// setting. Each setting has its own stream derived from the seed.
pub fn simulate_dataset(
    chi: &ProcessMatrix,
    shots: &ShotConfig,
    tag: ChannelTag,
) -> Result<TomographyDataset, ChannelError> {
    chi.check_physical()?;
    shots.validate()?;
    let probs = setting_probabilities(chi);
    let mut settings = Vec::with_capacity(SETTINGS);
    for prep in Label::ALL {
        for analyzer in Label::ALL {
            let idx = setting_index(prep, analyzer);
            let mean = shots.photons_per_pulse * probs[idx] + shots.background;
            let mut rng = rng::stream(shots.seed, &[rng::TAG_SIMULATE, idx as u64]);
            let counts = (0..shots.repetitions).map(|_| poisson_sample(&mut rng, mean)).collect();
            settings.push(SettingRecord { prep, analyzer, counts });
        }
    }
    Ok(TomographyDataset {
        channel_tag: tag,
        shot_config: *shots,
        settings,
    })
}
