//! Dense complex linear algebra for small dimensions, matrix exponentials,
//! fidelity metrics and Pauli utilities.

use std::fmt::{Debug, Display};
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, One, Zero};
use thiserror::Error;

/// Floating-point scalar accepted by the generic linear algebra layer.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |H - H^dagger| = {deviation:e})")]
    NonHermitianInput { deviation: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("basis index {0} listed twice")]
    DuplicateIndex(usize),
    #[error("expected {expected} entries, got {got}")]
    WrongEntryCount { expected: usize, got: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not unitary (defect {defect:e})")]
    NotUnitary { defect: f64 },
    #[error("state vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
}

pub(crate) fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T> {
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self { dim, data: vec![Complex::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex::one();
        }
        m
    }

    /// Builds a matrix from row-major entries, checking count and finiteness.
    pub fn from_vec(dim: usize, data: Vec<Complex<T>>) -> Result<Self, LinalgError> {
        if dim == 0 || data.len() != dim * dim {
            return Err(LinalgError::WrongEntryCount { expected: dim * dim, got: data.len() });
        }
        if let Some(k) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(LinalgError::NonFinite { row: k / dim, col: k % dim });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[&[Complex<T>]]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let data: Vec<_> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(dim, data)
    }

    pub fn diagonal(entries: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_re(&self, s: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
    }

    pub fn hermiticity_defect(&self) -> T {
        let n = self.dim;
        let mut m = T::zero();
        for i in 0..n {
            for j in i..n {
                m = m.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        m
    }

    /// `max |U^dagger U - I|` over entries.
    pub fn unitarity_defect(&self) -> T {
        (&self.adjoint() * self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(v.len(), self.dim, "dimension mismatch");
        let n = self.dim;
        (0..n).map(|i| (0..n).fold(Complex::zero(), |acc, j| acc + self[(i, j)] * v[j])).collect()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.dim, other.dim);
        let mut out = Self::zeros(a * b);
        for i in 0..a {
            for j in 0..a {
                for k in 0..b {
                    for l in 0..b {
                        out[(i * b + k, j * b + l)] = self[(i, j)] * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Submatrix on the listed basis states.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut out = Self::zeros(indices.len());
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.dim + j]
    }
}

impl<T: Real> Mul for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn mul(self, rhs: Self) -> ComplexMatrix<T> {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn add(self, rhs: Self) -> ComplexMatrix<T> {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect();
        ComplexMatrix { dim: self.dim, data }
    }
}

impl<T: Real> Sub for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn sub(self, rhs: Self) -> ComplexMatrix<T> {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect();
        ComplexMatrix { dim: self.dim, data }
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    /// Accepts amplitudes whose Euclidean norm is 1 within 1e-10.
    pub fn new(amplitudes: Vec<Complex<T>>) -> Result<Self, LinalgError> {
        let norm = amplitudes.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
        if amplitudes.is_empty() || (norm - T::one()).abs() > cast(1e-10) {
            return Err(LinalgError::NotNormalized { norm: norm.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex<T>>) -> Result<Self, LinalgError> {
        let norm = amplitudes.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(LinalgError::NotNormalized { norm: norm.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self { amplitudes: amplitudes.into_iter().map(|z| z / norm).collect() })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut a = vec![Complex::zero(); dim];
        a[k] = Complex::one();
        Self { amplitudes: a }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn norm(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amplitudes.iter().zip(&other.amplitudes).fold(Complex::zero(), |acc, (a, b)| acc + a.conj() * *b)
    }

    pub fn populations(&self) -> Vec<T> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Bloch vector of a two-level state.
    pub fn bloch(&self) -> [T; 3] {
        assert_eq!(self.dim(), 2, "Bloch vector needs a qubit state");
        let (a, b) = (self.amplitudes[0], self.amplitudes[1]);
        let c = a.conj() * b;
        let two = cast::<T>(2.0);
        [two * c.re, two * c.im, a.norm_sqr() - b.norm_sqr()]
    }
}

/// Unitary matrix, checked on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix<T> {
    inner: ComplexMatrix<T>,
}

impl<T: Real> UnitaryMatrix<T> {
    /// Tolerance on `max |U^dagger U - I|`.
    pub const DEFECT_TOLERANCE: f64 = 1e-8;

    pub fn new(inner: ComplexMatrix<T>) -> Result<Self, LinalgError> {
        let defect = inner.unitarity_defect();
        if !(defect < cast(Self::DEFECT_TOLERANCE)) {
            return Err(LinalgError::NotUnitary { defect: defect.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self { inner })
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: ComplexMatrix::identity(dim) }
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self { inner: self.inner.adjoint() }
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self { inner: &self.inner * &rhs.inner }
    }

    pub fn apply(&self, psi: &StateVector<T>) -> StateVector<T> {
        StateVector { amplitudes: self.inner.mul_vec(&psi.amplitudes) }
    }

    pub fn defect(&self) -> T {
        self.inner.unitarity_defect()
    }

    /// Multiplies by a global phase `e^{i theta}`.
    pub fn with_phase(&self, theta: T) -> Self {
        Self { inner: self.inner.scale(Complex::from_polar(T::one(), theta)) }
    }
}

/// Eigendecomposition `H = V diag(w) V^dagger` of a Hermitian matrix by cyclic
/// complex Jacobi rotations. Eigenvalues are returned in ascending order.
pub fn hermitian_eigen<T: Real>(h: &ComplexMatrix<T>) -> Result<(Vec<T>, ComplexMatrix<T>), LinalgError> {
    check_hermitian(h)?;
    let n = h.dim();
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.max_abs().max(T::min_positive_value());
    let tiny = T::epsilon() * T::epsilon() * scale * scale;
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[(p, q)].norm_sqr();
            }
        }
        if off <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= T::epsilon() * scale * cast(1e-3) {
                    continue;
                }
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = cast::<T>(0.5) * (r + r).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // J = D R with D = diag(1, e^{-i beta}) on (p, q).
                let jpp = Complex::new(c, T::zero());
                let jpq = Complex::new(s, T::zero());
                let jqp = phase.conj() * (-s);
                let jqq = phase.conj() * c;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = x * jpp + y * jqp;
                    a[(k, q)] = x * jpq + y * jqq;
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = x * jpp + y * jqp;
                    v[(k, q)] = x * jpq + y * jqq;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = jpp.conj() * x + jqp.conj() * y;
                    a[(q, k)] = jpq.conj() * x + jqq.conj() * y;
                }
                a[(p, q)] = Complex::zero();
                a[(q, p)] = Complex::zero();
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).expect("finite eigenvalue"));
    let w = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vs = ComplexMatrix::zeros(n);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vs[(k, col)] = v[(k, i)];
        }
    }
    Ok((w, vs))
}

fn check_hermitian<T: Real>(h: &ComplexMatrix<T>) -> Result<(), LinalgError> {
    let defect = h.hermiticity_defect();
    let tol = cast::<T>(1e-10) * h.max_abs().max(T::one());
    if defect > tol || !defect.is_finite() {
        return Err(LinalgError::NonHermitianInput { deviation: defect.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(())
}

/// `exp(-i H t)` for Hermitian `H` via eigendecomposition.
///
/// Hermiticity is checked relative to the largest entry (tolerance 1e-10).
pub fn mat_exp<T: Real>(h: &ComplexMatrix<T>, t: T) -> Result<UnitaryMatrix<T>, LinalgError> {
    let (w, v) = hermitian_eigen(h)?;
    let n = h.dim();
    let phases: Vec<Complex<T>> = w.iter().map(|&e| Complex::from_polar(T::one(), -e * t)).collect();
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex::zero();
            for k in 0..n {
                acc = acc + v[(i, k)] * phases[k] * v[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    Ok(UnitaryMatrix { inner: out })
}

/// `exp(-i t (a0 I + ax X + ay Y + az Z))` in closed form.
pub fn su2_exp<T: Real>(a0: T, ax: T, ay: T, az: T, t: T) -> ComplexMatrix<T> {
    let r = (ax * ax + ay * ay + az * az).sqrt();
    let (s, c) = (r * t).sin_cos();
    // sin(r t)/r, finite as r -> 0
    let k = if r > T::epsilon() { s / r } else { t };
    let g = Complex::from_polar(T::one(), -a0 * t);
    let i = Complex::<T>::i();
    let z = T::zero();
    let d00 = Complex::new(c, z) - i * (az * k);
    let d11 = Complex::new(c, z) + i * (az * k);
    let d01 = (i * ax + Complex::new(ay, z)) * (-k);
    let d10 = (i * ax - Complex::new(ay, z)) * (-k);
    ComplexMatrix { dim: 2, data: vec![g * d00, g * d01, g * d10, g * d11] }
}

/// `F = |Tr(U^dagger V)| / d`.
pub fn gate_fidelity<T: Real>(u: &UnitaryMatrix<T>, v: &UnitaryMatrix<T>) -> Result<T, LinalgError> {
    if u.dim() != v.dim() {
        return Err(LinalgError::DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let n = u.dim();
    let mut tr: Complex<T> = Complex::zero();
    for i in 0..n {
        for k in 0..n {
            tr = tr + u.inner[(k, i)].conj() * v.inner[(k, i)];
        }
    }
    Ok((tr.norm() / cast::<T>(n as f64)).min(T::one()))
}

/// `F = |Tr(P U^dagger V P)| / |S|` for the projector `P` onto the listed basis states.
pub fn subspace_fidelity<T: Real>(
    u: &UnitaryMatrix<T>,
    v: &UnitaryMatrix<T>,
    basis_indices: &[usize],
) -> Result<T, LinalgError> {
    if u.dim() != v.dim() {
        return Err(LinalgError::DimensionMismatch { left: u.dim(), right: v.dim() });
    }
    let n = u.dim();
    for (k, &i) in basis_indices.iter().enumerate() {
        if i >= n {
            return Err(LinalgError::IndexOutOfRange { index: i, dim: n });
        }
        if basis_indices[..k].contains(&i) {
            return Err(LinalgError::DuplicateIndex(i));
        }
    }
    if basis_indices.is_empty() {
        return Err(LinalgError::WrongEntryCount { expected: 1, got: 0 });
    }
    let mut tr: Complex<T> = Complex::zero();
    for &i in basis_indices {
        for k in 0..n {
            tr = tr + u.inner[(k, i)].conj() * v.inner[(k, i)];
        }
    }
    Ok((tr.norm() / cast::<T>(basis_indices.len() as f64)).min(T::one()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix<T: Real>(self) -> ComplexMatrix<T> {
        let (o, z, i) = (Complex::one(), Complex::zero(), Complex::i());
        let data = match self {
            Pauli::I => vec![o, z, z, o],
            Pauli::X => vec![z, o, o, z],
            Pauli::Y => vec![z, -i, i, z],
            Pauli::Z => vec![o, z, z, -o],
        };
        ComplexMatrix { dim: 2, data }
    }
}

/// `R(theta, phi) = exp(-i theta/2 (cos phi X + sin phi Y))`.
pub fn rotation<T: Real>(theta: T, phi: T) -> UnitaryMatrix<T> {
    let half = cast::<T>(0.5);
    UnitaryMatrix { inner: su2_exp(T::zero(), half * phi.cos(), half * phi.sin(), T::zero(), theta) }
}

/// Rotation about an arbitrary Bloch axis `n` (normalized internally).
pub fn axis_rotation<T: Real>(theta: T, n: [T; 3]) -> UnitaryMatrix<T> {
    let r = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let half = cast::<T>(0.5) / r;
    UnitaryMatrix { inner: su2_exp(T::zero(), half * n[0], half * n[1], half * n[2], theta) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_generator_gives_identity() {
        let u = mat_exp(&ComplexMatrix::<f64>::zeros(2), 3.7).unwrap();
        assert!(u.matrix().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn sigma_x_quarter_turn() {
        // eigenvalues +-1: exp(-i X pi/2) = cos(pi/2) I - i sin(pi/2) X = -iX
        let x = Pauli::X.matrix::<f64>();
        let u = mat_exp(&x, PI / 2.0).unwrap();
        let expected = x.scale(c(0.0, -1.0));
        assert!(u.matrix().max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn sigma_z_half_turn_is_minus_identity() {
        let u = mat_exp(&Pauli::Z.matrix::<f64>(), PI).unwrap();
        assert!(u.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale(c(-1.0, 0.0))) < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = ComplexMatrix::from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]]).unwrap();
        assert!(matches!(mat_exp(&m, 1.0), Err(LinalgError::NonHermitianInput { .. })));
    }

    #[test]
    fn fidelity_examples() {
        let x = UnitaryMatrix::new(Pauli::X.matrix::<f64>()).unwrap();
        let id = UnitaryMatrix::<f64>::identity(2);
        assert!((gate_fidelity(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((gate_fidelity(&id, &id.with_phase(PI / 2.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(gate_fidelity(&id, &x).unwrap().abs() < 1e-15);
        let id3 = UnitaryMatrix::<f64>::identity(3);
        assert!(matches!(gate_fidelity(&id, &id3), Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn subspace_fidelity_ignores_exterior_phase() {
        let id = UnitaryMatrix::<f64>::identity(9);
        let mut d = vec![c(1.0, 0.0); 9];
        d[8] = Complex64::from_polar(1.0, 1.3);
        d[2] = Complex64::from_polar(1.0, -0.4);
        let v = UnitaryMatrix::new(ComplexMatrix::diagonal(&d)).unwrap();
        assert!((subspace_fidelity(&id, &v, &[0, 1, 3, 4]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(subspace_fidelity(&id, &v, &[0, 9]), Err(LinalgError::IndexOutOfRange { index: 9, dim: 9 })));
    }

    #[test]
    fn su2_exp_matches_eigen_route() {
        let (a0, ax, ay, az, t) = (0.3, -0.7, 0.2, 1.1, 0.9);
        let h = &(&(&Pauli::I.matrix::<f64>().scale_re(a0) + &Pauli::X.matrix().scale_re(ax))
            + &Pauli::Y.matrix().scale_re(ay))
            + &Pauli::Z.matrix().scale_re(az);
        let a = mat_exp(&h, t).unwrap();
        let b = su2_exp(a0, ax, ay, az, t);
        assert!(a.matrix().max_abs_diff(&b) < 1e-13);
    }

    #[test]
    fn rotation_about_x_flips_ground_state() {
        let u = rotation(PI, 0.0f64);
        let psi = u.apply(&StateVector::basis(2, 0));
        assert!((psi.populations()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generic_in_f32() {
        let u = mat_exp(&Pauli::X.matrix::<f32>(), std::f32::consts::FRAC_PI_2).unwrap();
        assert!((u.matrix()[(0, 1)].im + 1.0).abs() < 1e-6);
    }
}
