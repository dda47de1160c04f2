//! Dense complex linear algebra at small dimension.
//!
//! [`Matrix`] is a thin square-matrix newtype over `nalgebra::DMatrix<C64>`.
//! Everything downstream (states, effects, Kraus operators, Choi matrices) is
//! expressed in terms of it.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::effects::Povm;
use crate::error::{Error, Result};
use crate::states::DensityOperator;

pub type C64 = Complex64;
pub type Ket = DVector<C64>;

/// Relative rank threshold for inverse powers and pseudo-inverses.
pub const EPS_PINV: f64 = 1e-10;
/// Relative Frobenius tolerance on `M - M†` for Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Absolute tolerance on negative eigenvalues for PSD inputs.
pub const PSD_TOL: f64 = 1e-10;
/// Relative eigenvalue size treated as exact zero by [`sqrt_psd`].
pub const ROUNDOFF_FLOOR: f64 = 1e-14;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<C64>);

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}", self.0)
    }
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Matrix(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Matrix(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds a matrix from rows; panics if the rows do not form a square array.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|row| row.len() == dim), "rows must form a square array");
        Matrix::from_fn(dim, |i, j| rows[i][j])
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|row| row.len() == dim), "rows must form a square array");
        Matrix::from_fn(dim, |i, j| r(rows[i][j]))
    }

    pub fn diag(values: &[f64]) -> Self {
        Matrix::from_fn(values.len(), |i, j| if i == j { r(values[i]) } else { ZERO })
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        Ok(Matrix(m))
    }

    /// `|a⟩⟨b|`.
    pub fn outer(a: &Ket, b: &Ket) -> Self {
        assert_eq!(a.len(), b.len(), "outer product of kets with different lengths");
        Matrix(a * b.adjoint())
    }

    /// `|v⟩⟨v|` without normalisation.
    pub fn projector(v: &Ket) -> Self {
        Matrix::outer(v, v)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.0[(i, j)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Matrix {
        Matrix(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Matrix {
        Matrix(&self.0 * r(s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
    }

    pub fn apply(&self, v: &Ket) -> Ket {
        &self.0 * v
    }

    /// `A X A†`.
    pub fn conjugate(&self, x: &Matrix) -> Matrix {
        Matrix(&self.0 * &x.0 * self.0.adjoint())
    }

    /// Relative Frobenius norm of `M - M†`.
    pub fn hermitian_deviation(&self) -> f64 {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        (self - &self.adjoint()).frobenius_norm() / norm
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    pub fn hermitian_part(&self) -> Matrix {
        Matrix((&self.0 + self.0.adjoint()) * r(0.5))
    }

    /// Frobenius norm of `U†U - I`.
    pub fn unitarity_deviation(&self) -> f64 {
        (&self.adjoint() * self - Matrix::identity(self.dim())).frobenius_norm()
    }

    /// Frobenius distance to `other`.
    pub fn distance(&self, other: &Matrix) -> f64 {
        (self - other).frobenius_norm()
    }

    /// Real coordinates of the entries, row-major, real parts then imaginary parts.
    pub fn real_coordinates(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.0[(i, j)].re);
            }
        }
        for i in 0..d {
            for j in 0..d {
                out.push(self.0[(i, j)].im);
            }
        }
        out
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Matrix> for &Matrix {
            type Output = Matrix;
            fn $method(self, rhs: &Matrix) -> Matrix {
                Matrix(&self.0 $op &rhs.0)
            }
        }
        impl $trait<Matrix> for Matrix {
            type Output = Matrix;
            fn $method(self, rhs: Matrix) -> Matrix {
                Matrix(self.0 $op rhs.0)
            }
        }
        impl $trait<&Matrix> for Matrix {
            type Output = Matrix;
            fn $method(self, rhs: &Matrix) -> Matrix {
                Matrix(self.0 $op &rhs.0)
            }
        }
        impl $trait<Matrix> for &Matrix {
            type Output = Matrix;
            fn $method(self, rhs: Matrix) -> Matrix {
                Matrix(&self.0 $op rhs.0)
            }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);
impl_binop!(Mul, mul, *);

impl AddAssign<&Matrix> for Matrix {
    fn add_assign(&mut self, rhs: &Matrix) {
        self.0 += &rhs.0;
    }
}

impl Neg for Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        Matrix(-self.0)
    }
}

impl std::iter::Sum for Matrix {
    fn sum<It: Iterator<Item = Matrix>>(mut iter: It) -> Matrix {
        let first = iter.next().expect("sum of an empty matrix sequence");
        iter.fold(first, |acc, m| acc + m)
    }
}

pub fn basis_ket(dim: usize, index: usize) -> Ket {
    let mut v = Ket::zeros(dim);
    v[index] = ONE;
    v
}

pub fn ket(amplitudes: &[C64]) -> Ket {
    Ket::from_column_slice(amplitudes)
}

pub fn normalized(v: &Ket) -> Ket {
    v / r(v.norm())
}

pub fn pauli_x() -> Matrix {
    Matrix::from_rows(&[vec![ZERO, ONE], vec![ONE, ZERO]])
}

pub fn pauli_y() -> Matrix {
    Matrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]])
}

pub fn pauli_z() -> Matrix {
    Matrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]])
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Unitary whose columns are the eigenvectors, in eigenvalue order.
    pub eigenvectors: Matrix,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        self.apply(|x| x)
    }

    /// `V f(Λ) V†`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let v = self.eigenvectors.as_dmatrix();
        let d = self.eigenvalues.len();
        let mut scaled = v.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let fk = r(f(lambda));
            for i in 0..d {
                scaled[(i, k)] *= fk;
            }
        }
        Matrix(scaled * v.adjoint())
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    pub fn eigenvector(&self, k: usize) -> Ket {
        self.eigenvectors.as_dmatrix().column(k).into_owned()
    }
}

pub fn eig_hermitian(m: &Matrix) -> Result<EigDecomposition> {
    let deviation = m.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(eig_hermitian_unchecked(&m.hermitian_part()))
}

fn eig_hermitian_unchecked(m: &Matrix) -> EigDecomposition {
    let d = m.dim();
    let eig = SymmetricEigen::new(m.0.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    EigDecomposition { eigenvalues, eigenvectors: Matrix(eigenvectors) }
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    Ok(eig_hermitian(m)?.eigenvalues)
}

fn psd_decomposition(m: &Matrix) -> Result<EigDecomposition> {
    let eig = eig_hermitian(m)?;
    if eig.min() < -PSD_TOL * eig.max().abs().max(1.0) {
        return Err(Error::NotPositive { min_eigenvalue: eig.min() });
    }
    Ok(eig)
}

/// `f(M)` for a PSD Hermitian `M`; slightly negative eigenvalues are clamped to zero.
pub fn mat_fn(m: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let eig = psd_decomposition(m)?;
    Ok(eig.apply(|x| f(x.max(0.0))))
}

/// Square root of a PSD matrix.
///
/// Eigenvalues at round-off level relative to `λ_max` are set to zero first, since
/// the square root would inflate them from `1e-16` to `1e-8`.
pub fn sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let eig = psd_decomposition(m)?;
    let floor = ROUNDOFF_FLOOR * eig.max().max(0.0);
    Ok(eig.apply(|x| if x > floor { x.sqrt() } else { 0.0 }))
}

/// `M^p` for `p < 0`; errors when an eigenvalue falls below `EPS_PINV · λ_max`.
pub fn inverse_power(m: &Matrix, p: f64) -> Result<Matrix> {
    let eig = psd_decomposition(m)?;
    let threshold = EPS_PINV * eig.max().max(0.0);
    if eig.min() <= threshold {
        return Err(Error::SingularOperator { min_eigenvalue: eig.min() });
    }
    Ok(eig.apply(|x| x.powf(p)))
}

pub fn inv_sqrt(m: &Matrix) -> Result<Matrix> {
    inverse_power(m, -0.5)
}

/// Pseudo-inverse square root: inverts on the support, zero on the kernel.
pub fn pinv_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = psd_decomposition(m)?;
    let threshold = EPS_PINV * eig.max().max(0.0);
    Ok(eig.apply(|x| if x > threshold { x.powf(-0.5) } else { 0.0 }))
}

/// Orthogonal projector onto the support of a PSD matrix.
pub fn support_projector(m: &Matrix) -> Result<Matrix> {
    let eig = psd_decomposition(m)?;
    let threshold = EPS_PINV * eig.max().max(0.0);
    Ok(eig.apply(|x| if x > threshold { 1.0 } else { 0.0 }))
}

/// Unitary factor `W` of the polar decomposition `A = W (A†A)^{1/2}`.
///
/// Rank-deficient inputs get an orthonormal completion on the null space from
/// the full singular-vector bases.
pub fn polar_unitary(a: &Matrix) -> Matrix {
    let svd = a.0.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Matrix(u * v_t)
}

pub fn tensor(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix(a.0.kronecker(&b.0))
}

/// Tensor product of a sequence of factors, left to right.
pub fn tensor_all(factors: &[Matrix]) -> Matrix {
    let (first, rest) = factors.split_first().expect("tensor of no factors");
    rest.iter().fold(first.clone(), |acc, m| tensor(&acc, m))
}

pub fn tensor_ket(a: &Ket, b: &Ket) -> Ket {
    a.kronecker(b)
}

/// Which factor of a bipartite space is traced out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Partial trace over `side` of an operator on `H_A ⊗ H_B`.
pub fn partial_trace(m: &Matrix, dims: (usize, usize), side: Subsystem) -> Result<Matrix> {
    let (da, db) = dims;
    if m.dim() != da * db {
        return Err(Error::DimensionMismatch { expected: da * db, found: m.dim() });
    }
    let out = match side {
        Subsystem::A => Matrix::from_fn(db, |i, j| (0..da).map(|k| m.get(k * db + i, k * db + j)).sum()),
        Subsystem::B => Matrix::from_fn(da, |i, j| (0..db).map(|k| m.get(i * db + k, j * db + k)).sum()),
    };
    Ok(out)
}

/// Hilbert–Schmidt inner product `tr(A†B)`.
pub fn hs_inner(a: &Matrix, b: &Matrix) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(a.0.iter().zip(b.0.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// `tr(AB)`, computed without forming the product.
pub fn trace_product(a: &Matrix, b: &Matrix) -> C64 {
    let d = a.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a.0[(i, k)] * b.0[(k, i)];
        }
    }
    acc
}

/// Trace distance `½‖A − B‖₁` between Hermitian matrices.
pub fn trace_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let eig = eig_hermitian(&(a - b).hermitian_part())?;
    Ok(0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

/// Extends orthonormal `columns` to an orthonormal basis of `C^dim`.
///
/// The result starts with the given columns; the completion is drawn from the
/// standard basis by modified Gram–Schmidt.
pub fn complete_orthonormal(columns: &[Ket], dim: usize) -> Vec<Ket> {
    let mut basis: Vec<Ket> = columns.to_vec();
    for k in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = basis_ket(dim, k);
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dotc(&v);
                v -= b * overlap;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / r(norm));
        }
    }
    basis
}

/// Matrix whose columns are the given kets.
pub fn from_columns(columns: &[Ket]) -> Matrix {
    let d = columns.len();
    Matrix::from_fn(d, |i, j| columns[j][i])
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of i.i.d. standard complex Gaussian entries.
pub fn random_ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            m.0[(i, j)] = complex_normal(rng);
        }
    }
    m
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    random_ginibre(dim, rng).hermitian_part()
}

/// Haar-random unit vector.
pub fn random_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Ket {
    let v = Ket::from_fn(dim, |_, _| complex_normal(rng));
    normalized(&v)
}

/// Haar-random unitary (QR of a Ginibre matrix with the phase correction on `R`).
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let z = random_ginibre(dim, rng);
    let qr = z.0.qr();
    let q = qr.q();
    let rr = qr.r();
    let mut u = q;
    for j in 0..dim {
        let d = rr[(j, j)];
        let phase = if d.norm() > 0.0 { d / r(d.norm()) } else { ONE };
        for i in 0..dim {
            u[(i, j)] *= phase;
        }
    }
    Matrix(u)
}

/// Random full-rank density operator `GG†/tr(GG†)` (Hilbert–Schmidt measure).
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator {
    let g = random_ginibre(dim, rng);
    let w = &g * &g.adjoint();
    let t = w.trace().re;
    DensityOperator::new(w.scale_real(1.0 / t)).expect("Ginibre construction yields a state")
}

pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator {
    DensityOperator::pure(&random_ket(dim, rng))
}

/// Random `n`-outcome POVM: `n` random PSD operators conjugated by `Σ^{-1/2}`.
pub fn random_povm<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Povm {
    assert!(n >= 1, "a POVM needs at least one element");
    let raw: Vec<Matrix> = (0..n)
        .map(|_| {
            let g = random_ginibre(dim, rng);
            &g * &g.adjoint()
        })
        .collect();
    let total: Matrix = raw.iter().cloned().sum();
    let norm = inv_sqrt(&total).expect("sum of Ginibre squares is positive definite");
    let elements = raw.iter().map(|m| norm.conjugate(m).hermitian_part()).collect();
    Povm::new(elements).expect("renormalised PSD operators resolve the identity")
}
