use crate::channel::ProcessMatrix;
use crate::matrix::psd_sqrt;

use super::TomographyError;

/// `F = (tr √(√A B √A))²` on the trace-normalized arguments, clamped to [0, 1].
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64, TomographyError> {
    let a = a.normalized().ok_or(TomographyError::ZeroTrace)?;
    let b = b.normalized().ok_or(TomographyError::ZeroTrace)?;
    let root_a = psd_sqrt(a.matrix())?;
    let inner = (root_a * *b.matrix() * root_a).hermitian_part();
    let f = psd_sqrt(&inner)?.trace().re.powi(2);
    Ok(f.clamp(0.0, 1.0))
}

/// Average transmission `tr χ`.
pub fn efficiency_of(chi: &ProcessMatrix) -> f64 {
    chi.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{memory_chi, off_chi, unitary_chi, MemoryModel};
    use crate::matrix::{hermitian_eig, ComplexMatrix, C64};
    use crate::polarization::pauli;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn unbalanced() -> MemoryModel {
        MemoryModel {
            eta_h0: 0.3,
            eta_v0: 0.15,
            ..MemoryModel::balanced(0.0, 1000.0)
        }
    }

    #[test]
    fn fidelity_examples() {
        let memory = memory_chi(&MemoryModel::default().at(200.0)).unwrap();
        assert!((process_fidelity(&memory, &memory).unwrap() - 1.0).abs() < 1e-12);

        let x = unitary_chi(&pauli(1)).unwrap();
        assert!(process_fidelity(&ProcessMatrix::identity(), &x).unwrap() < 1e-12);

        let qwp = (ComplexMatrix::identity(2) - pauli(1).scale_complex(C64::new(0.0, 1.0))).scale(FRAC_1_SQRT_2);
        let f = process_fidelity(&ProcessMatrix::identity(), &unitary_chi(&qwp).unwrap()).unwrap();
        assert!((f - 0.5).abs() < 1e-12);

        let chi = memory_chi(&unbalanced().at(0.0)).unwrap();
        let f = process_fidelity(&ProcessMatrix::identity(), &chi).unwrap();
        let closed = (0.3f64.sqrt() + 0.15f64.sqrt()).powi(2) / (2.0 * 0.45);
        assert!((f - closed).abs() < 1e-12);
        assert!((f - 0.971405).abs() < 1e-6);
    }

    #[test]
    fn off_process_anchor() {
        let mut p = MemoryModel::balanced(0.15, 1000.0).at(0.0);
        p.model.off_depolarization = 0.04;
        let f = process_fidelity(&off_chi(&p).unwrap(), &ProcessMatrix::identity()).unwrap();
        assert!((f - 0.97).abs() < 1e-12);
    }

    #[test]
    fn zero_trace_is_an_error() {
        let zero = ProcessMatrix::identity().scaled(0.0);
        assert_eq!(
            process_fidelity(&zero, &ProcessMatrix::identity()),
            Err(TomographyError::ZeroTrace)
        );
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency_of(&ProcessMatrix::identity()), 1.0);
        assert!((efficiency_of(&ProcessMatrix::identity().scaled(0.2)) - 0.2).abs() < 1e-15);
        let chi = memory_chi(&unbalanced().at(0.0)).unwrap();
        assert!((efficiency_of(&chi) - 0.225).abs() < 1e-12);
    }

    fn unitary_from(angles: [f64; 4]) -> ComplexMatrix {
        // e^{iα} · exp(−iθ n·σ/2)
        let [alpha, theta, pol, az] = angles;
        let n = [pol.sin() * az.cos(), pol.sin() * az.sin(), pol.cos()];
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let mut u = ComplexMatrix::identity(2).scale(c);
        for (k, nk) in n.iter().enumerate() {
            u = u - pauli(k + 1).scale_complex(C64::new(0.0, s * nk));
        }
        u.scale_complex(C64::from_polar(1.0, alpha))
    }

    fn random_physical() -> impl Strategy<Value = ProcessMatrix> {
        (prop::array::uniform16(-1.0..1.0f64), 0.05..1.0f64).prop_map(|(t, tr)| {
            let m = crate::matrix::param_to_psd(&t);
            let m = m.scale(tr / m.trace().re.max(1e-12));
            ProcessMatrix::new(m).unwrap()
        })
    }

    // The square root turns round-off in near-zero eigenvalues into errors
    // of order sqrt(1e-16); rank-deficient arguments only reach ~1e-8.
    const ROOT_TOL: f64 = 1e-7;

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(a in random_physical(), b in random_physical(), s in 0.1..10.0f64) {
            let ab = process_fidelity(&a, &b).unwrap();
            let ba = process_fidelity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < ROOT_TOL);
            let scaled = process_fidelity(&a.scaled(s), &b).unwrap();
            prop_assert!((ab - scaled).abs() < ROOT_TOL);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn rank_one_closed_form(u in prop::array::uniform4(0.0..6.3f64), v in prop::array::uniform4(0.0..6.3f64)) {
            let (u, v) = (unitary_from(u), unitary_from(v));
            let f = process_fidelity(&unitary_chi(&u).unwrap(), &unitary_chi(&v).unwrap()).unwrap();
            let closed = (u.adjoint() * v).trace().norm_sqr() / 4.0;
            prop_assert!((f - closed).abs() < ROOT_TOL, "{} vs {}", f, closed);
        }
    }

    #[test]
    fn fidelity_one_only_for_equal_processes() {
        let a = memory_chi(&MemoryModel::default().at(0.0)).unwrap();
        let b = memory_chi(&MemoryModel::default().at(900.0)).unwrap();
        assert!((process_fidelity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = off_chi(&MemoryModel::default().at(0.0)).unwrap();
        assert!(process_fidelity(&a, &c).unwrap() < 0.99);
        assert!(hermitian_eig(c.matrix()).unwrap().min_eigenvalue() > 0.0);
    }
}
