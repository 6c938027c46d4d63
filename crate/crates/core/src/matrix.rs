//! Dense complex 2×2 and 4×4 matrices, with the Hermitian tools the rest of
//! the crate needs: eigendecomposition, PSD square roots and the
//! `T†T` positivity parametrization used by the likelihood fit.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Tolerance for treating a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Negative eigenvalues down to `-PSD_TOL` are clamped to zero.
pub const PSD_TOL: f64 = 1e-9;

const JACOBI_THRESHOLD: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("unsupported dimension {0}; only 2 and 4 are allowed")]
    BadDim(usize),
    #[error("Jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Row-major complex matrix of dimension 2 or 4.
#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: [C64; 16],
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "unsupported dimension {dim}");
        Self {
            dim,
            data: [C64::new(0.0, 0.0); 16],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries; the length fixes the dimension.
    pub fn from_row_major(entries: &[C64]) -> Result<Self, MatrixError> {
        let dim = match entries.len() {
            4 => 2,
            16 => 4,
            n => return Err(MatrixError::BadDim(n)),
        };
        let mut m = Self::zeros(dim);
        m.data[..entries.len()].copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Outer product `u v†`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        let mut m = Self::zeros(u.len());
        for i in 0..u.len() {
            for j in 0..v.len() {
                m[(i, j)] = u[i] * v[j].conj();
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data[..self.dim * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self[(j, i)].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        m.data.iter_mut().for_each(|z| *z *= s);
        m
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        let mut m = *self;
        m.data.iter_mut().for_each(|z| *z *= s);
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `|M[i][j] - conj(M[j][i])|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() <= HERMITIAN_TOL
    }

    /// Averages `M` with `M†`, removing round-off asymmetry.
    pub fn hermitian_part(&self) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            m[(i, i)] = C64::new(self[(i, i)].re, 0.0);
            for j in (i + 1)..self.dim {
                let z = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    pub fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in product");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sum");
        let mut out = self;
        out.data.iter_mut().zip(rhs.data.iter()).for_each(|(a, b)| *a += b);
        out
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in difference");
        let mut out = self;
        out.data.iter_mut().zip(rhs.data.iter()).for_each(|(a, b)| *a -= b);
        out
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
    pub sweeps: usize,
}

impl EigenDecomposition {
    /// `V · diag(f(λ)) · V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.eigenvectors.dim();
        let v = &self.eigenvectors;
        let mut out = ComplexMatrix::zeros(n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|x| x)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Cyclic complex Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<EigenDecomposition, MatrixError> {
    let defect = m.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(MatrixError::NotHermitian(defect));
    }
    let n = m.dim();
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= JACOBI_THRESHOLD * scale {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(MatrixError::NoConvergence(sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                // phase e^{iφ} of a_pq is absorbed into column q, leaving a
                // real symmetric 2×2 block to rotate
                let phase = apq / mag;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s, phase.conj());
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[(row, col)] = v[(row, src)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Applies `A ← G† A G`, `V ← V G` with `G = D·J`, where `D` puts `w` on
/// coordinate `q` and `J` is the real rotation `[[c, s], [-s, c]]` on (p, q).
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize, c: f64, s: f64, w: C64) {
    let n = a.dim();
    let mut g = ComplexMatrix::identity(n);
    g[(p, p)] = C64::new(c, 0.0);
    g[(p, q)] = C64::new(s, 0.0);
    g[(q, p)] = -w * s;
    g[(q, q)] = w * c;
    let mut rotated = g.adjoint() * *a * g;
    rotated[(p, q)] = C64::new(0.0, 0.0);
    rotated[(q, p)] = C64::new(0.0, 0.0);
    *a = rotated;
    *v = *v * g;
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    psd_sqrt_with_tol(m, PSD_TOL)
}

pub fn psd_sqrt_with_tol(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix, MatrixError> {
    let eig = hermitian_eig(m)?;
    let min = eig.min_eigenvalue();
    if min < -tol {
        return Err(MatrixError::NotPsd(min));
    }
    Ok(eig.reconstruct_with(|x| x.max(0.0).sqrt()).hermitian_part())
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues set to zero.
pub fn psd_projection(m: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    let eig = hermitian_eig(m)?;
    Ok(eig.reconstruct_with(|x| x.max(0.0)).hermitian_part())
}

pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64, MatrixError> {
    if a.dim() != b.dim() {
        return Err(MatrixError::DimMismatch(a.dim(), b.dim()));
    }
    Ok((*a - *b).frobenius_norm())
}

/// Number of real parameters of a 4×4 lower-triangular `T` with real diagonal.
pub const PSD_PARAMS: usize = 16;

/// Strictly-lower positions of `T`, in parameter order after the diagonal.
const LOWER: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// Lower-triangular factor `T` for the parameter vector `t`: the first four
/// entries are the real diagonal, the rest are (re, im) pairs of the
/// strictly-lower entries in row order.
pub fn param_to_factor(t: &[f64; PSD_PARAMS]) -> ComplexMatrix {
    let mut f = ComplexMatrix::zeros(4);
    for i in 0..4 {
        f[(i, i)] = C64::new(t[i], 0.0);
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        f[(i, j)] = C64::new(t[4 + 2 * k], t[5 + 2 * k]);
    }
    f
}

/// `T†T`, PSD for every `t`.
pub fn param_to_psd(t: &[f64; PSD_PARAMS]) -> ComplexMatrix {
    let f = param_to_factor(t);
    (f.adjoint() * f).hermitian_part()
}

/// Inverse of [`param_to_psd`] on PSD input: finds lower-triangular `T` with
/// `T†T = M`, working up from the bottom-right corner. Vanishing pivots give
/// a zero row below the diagonal.
pub fn psd_to_param(m: &ComplexMatrix) -> Result<[f64; PSD_PARAMS], MatrixError> {
    if m.dim() != 4 {
        return Err(MatrixError::DimMismatch(m.dim(), 4));
    }
    let pivot_floor = 1e-14 * m.trace().re.abs().max(f64::MIN_POSITIVE);
    let mut f = ComplexMatrix::zeros(4);
    for i in (0..4).rev() {
        let tail: f64 = ((i + 1)..4).map(|k| f[(k, i)].norm_sqr()).sum();
        let pivot = m[(i, i)].re - tail;
        if pivot <= pivot_floor {
            continue;
        }
        let d = pivot.sqrt();
        f[(i, i)] = C64::new(d, 0.0);
        for j in 0..i {
            let tail: C64 = ((i + 1)..4).map(|k| f[(k, i)].conj() * f[(k, j)]).sum();
            f[(i, j)] = (m[(i, j)] - tail) / d;
        }
    }
    let mut t = [0.0; PSD_PARAMS];
    for i in 0..4 {
        t[i] = f[(i, i)].re;
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        t[4 + 2 * k] = f[(i, j)].re;
        t[5 + 2 * k] = f[(i, j)].im;
    }
    Ok(t)
}
