use std::sync::OnceLock;

use crate::channel::ProcessMatrix;
use crate::matrix::{hermitian_eig, ComplexMatrix, C64};
use crate::polarization::{density_of, pauli, rho_from_stokes, stokes_from_probs, tomography_state, Label};

use super::counts::{normalized_probs_lenient, CountTable};
use super::{Method, ReconstructionResult, TomographyError};

/// Inputs whose output states pin down χ.
pub const ANCHORS: [Label; 4] = [Label::H, Label::V, Label::D, Label::L];

const N: usize = 16;

type System = [[C64; N]; N];

/// Row `(4a + e)` holds entry `e` of `Γ_i ρ_a Γ_j` for anchor `a`, column `4i + j`.
fn design_matrix() -> System {
    let mut m = [[C64::new(0.0, 0.0); N]; N];
    for (a, &label) in ANCHORS.iter().enumerate() {
        let rho = *density_of(&tomography_state(label)).matrix();
        for i in 0..4 {
            for j in 0..4 {
                let term = pauli(i) * rho * pauli(j);
                for (e, &z) in term.entries().iter().enumerate() {
                    m[4 * a + e][4 * i + j] = z;
                }
            }
        }
    }
    m
}

/// Gauss–Jordan inverse with partial pivoting.
fn invert(mut a: System) -> Option<System> {
    let mut inv = [[C64::new(0.0, 0.0); N]; N];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    for col in 0..N {
        let pivot = (col..N).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))?;
        if a[pivot][col].norm() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col].inv();
        for k in 0..N {
            a[col][k] *= d;
            inv[col][k] *= d;
        }
        for row in 0..N {
            if row == col {
                continue;
            }
            let f = a[row][col];
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..N {
                let (ak, ik) = (a[col][k], inv[col][k]);
                a[row][k] -= f * ak;
                inv[row][k] -= f * ik;
            }
        }
    }
    Some(inv)
}

fn inverse_design() -> Option<&'static System> {
    static INVERSE: OnceLock<Option<System>> = OnceLock::new();
    INVERSE.get_or_init(|| invert(design_matrix())).as_ref()
}

/// Solves `ρ_out(a) = Σ χ_ij Γ_i ρ_a Γ_j` over the four anchors, with each
/// output rebuilt from its Stokes vector and scaled by `I_a / N₀`.
pub fn linear_inversion(table: &CountTable) -> Result<ReconstructionResult, TomographyError> {
    let inverse = inverse_design().ok_or(TomographyError::SingularSystem)?;
    let np = normalized_probs_lenient(table);

    let mut rhs = [C64::new(0.0, 0.0); N];
    for (a, &label) in ANCHORS.iter().enumerate() {
        let m = label.index();
        let stokes = stokes_from_probs(&np.probs[m])?;
        let out = rho_from_stokes(&stokes).scaled(np.intensity[m] / table.photons_per_pulse);
        rhs[4 * a..4 * a + 4].copy_from_slice(out.matrix().entries());
    }

    let mut chi = ComplexMatrix::zeros(4);
    for (r, row) in inverse.iter().enumerate() {
        chi[(r / 4, r % 4)] = row.iter().zip(rhs.iter()).map(|(x, y)| x * y).sum();
    }
    let chi = chi.hermitian_part();
    let min_eigenvalue = hermitian_eig(&chi)?.min_eigenvalue();
    Ok(ReconstructionResult {
        chi: ProcessMatrix::from_hermitian(chi),
        method: Method::LinearInversion,
        nll: None,
        iterations: 1,
        converged: true,
        min_eigenvalue,
        degenerate_pairs: np.degenerate_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{chi_from_kraus, memory_chi, MemoryModel, ShotConfig};
    use crate::matrix::frobenius_distance;

    fn shots() -> ShotConfig {
        ShotConfig {
            photons_per_pulse: 5000.0,
            background: 0.0,
            repetitions: 500,
            seed: 3,
        }
    }

    fn recover(chi: &ProcessMatrix) -> f64 {
        let est = linear_inversion(&CountTable::noiseless(chi, &shots())).unwrap();
        frobenius_distance(est.chi.matrix(), chi.matrix()).unwrap()
    }

    #[test]
    fn design_is_invertible() {
        assert!(inverse_design().is_some());
    }

    #[test]
    fn identity_and_x() {
        assert!(recover(&ProcessMatrix::identity()) < 1e-10);
        assert!(recover(&ProcessMatrix::from_diag([0.0, 1.0, 0.0, 0.0])) < 1e-10);
    }

    #[test]
    fn unbalanced_memory_matches_kraus_oracle() {
        let model = MemoryModel {
            eta_h0: 0.3,
            eta_v0: 0.15,
            ..MemoryModel::balanced(0.0, 1000.0)
        };
        let chi = memory_chi(&model.at(0.0)).unwrap();
        let k = ComplexMatrix::from_real_diag(&[0.3f64.sqrt(), 0.15f64.sqrt()]);
        let oracle = chi_from_kraus(&[k]).unwrap();
        let est = linear_inversion(&CountTable::noiseless(&chi, &shots())).unwrap();
        assert!(frobenius_distance(est.chi.matrix(), oracle.matrix()).unwrap() < 1e-10);
        assert_eq!(est.method, Method::LinearInversion);
    }

    #[test]
    fn background_is_removed() {
        let s = ShotConfig {
            background: 0.25,
            ..shots()
        };
        let chi = memory_chi(&MemoryModel::default().at(300.0)).unwrap();
        let est = linear_inversion(&CountTable::noiseless(&chi, &s)).unwrap();
        assert!(frobenius_distance(est.chi.matrix(), chi.matrix()).unwrap() < 1e-10);
    }

    #[test]
    fn dark_input_gives_zero_process() {
        let est = linear_inversion(&CountTable::noiseless(&ProcessMatrix::identity().scaled(0.0), &shots())).unwrap();
        assert_eq!(est.chi.trace(), 0.0);
        assert_eq!(est.degenerate_pairs, 18);
    }
}
