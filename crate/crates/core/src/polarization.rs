//! Polarization-qubit algebra in the `|H⟩ = (1, 0)`, `|V⟩ = (0, 1)` basis.
//!
//! Circular states use `|R⟩ = (|H⟩ − i|V⟩)/√2` and `|L⟩ = (|H⟩ + i|V⟩)/√2`,
//! which makes `|L⟩` the +1 eigenstate of Pauli Y. Stokes components are
//! always formed from pairwise-normalized probabilities, so a uniform loss
//! on the state drops out of them exactly.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{ComplexMatrix, C64, PSD_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("unknown polarization label {0:?}")]
    UnknownLabel(String),
    #[error("analyzer pair {0} has non-positive total probability")]
    DegeneratePair(&'static str),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
}

/// One of the six tomography states, serialized as a single ASCII letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Label {
    /// Preparation and analysis order used for every 36-setting table.
    pub const ALL: [Label; 6] = [Label::H, Label::V, Label::D, Label::A, Label::R, Label::L];

    pub fn index(self) -> usize {
        match self {
            Label::H => 0,
            Label::V => 1,
            Label::D => 2,
            Label::A => 3,
            Label::R => 4,
            Label::L => 5,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Label::H => 'H',
            Label::V => 'V',
            Label::D => 'D',
            Label::A => 'A',
            Label::R => 'R',
            Label::L => 'L',
        }
    }

    /// The orthogonal partner within the same analyzer pair.
    pub fn partner(self) -> Label {
        match self {
            Label::H => Label::V,
            Label::V => Label::H,
            Label::D => Label::A,
            Label::A => Label::D,
            Label::R => Label::L,
            Label::L => Label::R,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Label {
    type Err = PolarizationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H" => Ok(Label::H),
            "V" => Ok(Label::V),
            "D" => Ok(Label::D),
            "A" => Ok(Label::A),
            "R" => Ok(Label::R),
            "L" => Ok(Label::L),
            other => Err(PolarizationError::UnknownLabel(other.to_string())),
        }
    }
}

/// Normalized polarization amplitudes `(a_H, a_V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    pub amplitudes: [C64; 2],
}

impl PureState {
    /// `cos θ |H⟩ + e^{iφ} sin θ |V⟩`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self {
            amplitudes: [C64::new(theta.cos(), 0.0), C64::from_polar(theta.sin(), phi)],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

pub fn tomography_state(label: Label) -> PureState {
    let h = FRAC_1_SQRT_2;
    let amplitudes = match label {
        Label::H => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        Label::V => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        Label::D => [C64::new(h, 0.0), C64::new(h, 0.0)],
        Label::A => [C64::new(h, 0.0), C64::new(-h, 0.0)],
        Label::R => [C64::new(h, 0.0), C64::new(0.0, -h)],
        Label::L => [C64::new(h, 0.0), C64::new(0.0, h)],
    };
    PureState { amplitudes }
}

/// Pauli matrix `Γ_i` for `i` in 0..4: I, X, Y, Z.
pub fn pauli(i: usize) -> ComplexMatrix {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let im = C64::new(0.0, 1.0);
    let entries = match i {
        0 => [one, z, z, one],
        1 => [z, one, one, z],
        2 => [z, -im, im, z],
        3 => [one, z, z, -one],
        _ => panic!("Pauli index {i} out of range"),
    };
    ComplexMatrix::from_row_major(&entries).expect("2x2 entries")
}

/// Possibly sub-normalized 2×2 polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, positivity and `0 < tr ≤ 1 + 1e-9`.
    pub fn new(m: ComplexMatrix) -> Result<Self, PolarizationError> {
        if m.dim() != 2 {
            return Err(PolarizationError::InvalidDensity(format!("dimension {}", m.dim())));
        }
        if !m.is_hermitian() {
            return Err(PolarizationError::InvalidDensity("not Hermitian".into()));
        }
        let m = m.hermitian_part();
        let tr = m.trace().re;
        if tr <= 0.0 || tr > 1.0 + 1e-9 {
            return Err(PolarizationError::InvalidDensity(format!("trace {tr}")));
        }
        let min_eig = min_eigenvalue_2x2(&m);
        if min_eig < -PSD_TOL {
            return Err(PolarizationError::InvalidDensity(format!(
                "min eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix already known to be a valid state, e.g. a channel output.
    pub(crate) fn from_matrix_unchecked(m: ComplexMatrix) -> Self {
        Self(m.hermitian_part())
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

    /// Stokes vector `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)` of the trace-normalized state.
    pub fn stokes(&self) -> StokesVector {
        let tr = self.trace();
        let m = &self.0;
        StokesVector {
            s: [
                2.0 * m[(0, 1)].re / tr,
                -2.0 * m[(0, 1)].im / tr,
                (m[(0, 0)].re - m[(1, 1)].re) / tr,
            ],
        }
    }
}

fn min_eigenvalue_2x2(m: &ComplexMatrix) -> f64 {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)].norm();
    0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt()
}

pub fn density_of(psi: &PureState) -> DensityMatrix {
    DensityMatrix(ComplexMatrix::outer(&psi.amplitudes, &psi.amplitudes).hermitian_part())
}

/// Born-rule probability `⟨label|ρ|label⟩`; scales with `tr ρ`.
pub fn projector_prob(rho: &DensityMatrix, analyzer: Label) -> f64 {
    let psi = tomography_state(analyzer).amplitudes;
    let m = rho.matrix();
    let mut p = C64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            p += psi[i].conj() * m[(i, j)] * psi[j];
        }
    }
    p.re
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVector {
    pub s: [f64; 3],
}

impl StokesVector {
    pub fn norm(&self) -> f64 {
        self.s.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Six probabilities indexed by [`Label::index`].
pub type LabelProbs = [f64; 6];

/// Stokes components from pairwise-normalized analyzer probabilities.
pub fn stokes_from_probs(p: &LabelProbs) -> Result<StokesVector, PolarizationError> {
    let component = |plus: Label, minus: Label, name: &'static str| {
        let (a, b) = (p[plus.index()], p[minus.index()]);
        let sum = a + b;
        if sum <= 0.0 {
            Err(PolarizationError::DegeneratePair(name))
        } else {
            Ok((a - b) / sum)
        }
    };
    Ok(StokesVector {
        s: [
            component(Label::D, Label::A, "D/A")?,
            component(Label::L, Label::R, "R/L")?,
            component(Label::H, Label::V, "H/V")?,
        ],
    })
}

/// `(I + s·σ)/2`, with vectors outside the unit ball pulled back to its surface.
pub fn rho_from_stokes(s: &StokesVector) -> DensityMatrix {
    let norm = s.norm();
    let [x, y, z] = if norm > 1.0 { s.s.map(|c| c / norm) } else { s.s };
    let m = ComplexMatrix::from_row_major(&[
        C64::new(0.5 * (1.0 + z), 0.0),
        C64::new(0.5 * x, -0.5 * y),
        C64::new(0.5 * x, 0.5 * y),
        C64::new(0.5 * (1.0 - z), 0.0),
    ])
    .expect("2x2 entries");
    DensityMatrix(m)
}
