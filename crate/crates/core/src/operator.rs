//! Dense complex matrices, operator builders and tensor-factor embeddings.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Square dense complex matrix on a finite-dimensional Hilbert space.
///
/// Hamiltonian entries are angular frequencies (hbar = 1).
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self(DMatrix::from_fn(dim, dim, f))
    }

    /// Row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::dim("row-major entries", dim * dim, entries.len()));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| C64::new(0.0, 0.0))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(values: &[C64]) -> Self {
        Self::from_fn(values.len(), |i, j| {
            if i == j {
                values[i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Orthogonal projector onto the listed computational basis states.
    pub fn projector(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut p = Self::zeros(dim);
        for &i in indices {
            if i >= dim {
                return Err(Error::IndexOutOfRange { index: i, dim });
            }
            p.0[(i, i)] = C64::new(1.0, 0.0);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(&self.0 * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Dynamical generator `-i H`.
    pub fn generator(&self) -> Self {
        self.scale(C64::new(0.0, -1.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Hilbert-Schmidt inner product `tr(self^dagger other)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.frobenius_norm() <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.0 - self.0.adjoint()).norm() <= tol
    }

    pub fn is_skew_hermitian(&self, tol: f64) -> bool {
        (&self.0 + self.0.adjoint()).norm() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let n = self.dim();
        (self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(n, n)).norm() <= tol
    }

    /// `P M P` for a projector (or any compression matrix) `P`.
    pub fn compress(&self, p: &Self) -> Self {
        Self(&p.0 * &self.0 * &p.0)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// `exp(-i H s)` for this matrix taken as `H`.
    pub fn propagator(&self, s: f64) -> Self {
        Self(self.generator().0.scale(s).exp())
    }

    /// `exp(s G)` for this matrix taken directly as the generator `G`.
    pub fn exp_scaled(&self, s: f64) -> Self {
        Self((&self.0 * C64::new(s, 0.0)).exp())
    }

    /// Column-major flattening, i.e. `vec(M)`.
    pub fn vectorize(&self) -> Vec<C64> {
        self.0.iter().copied().collect()
    }

    pub fn from_vectorized(dim: usize, v: &[C64]) -> Result<Self> {
        if v.len() != dim * dim {
            return Err(Error::dim("vectorized operator", dim * dim, v.len()));
        }
        Self::new(DMatrix::from_column_slice(dim, dim, v))
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, &vj) in v.iter().enumerate() {
            if vj == C64::new(0.0, 0.0) {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.0[(i, j)] * vj;
            }
        }
        out
    }

    /// `<v|M|v>`.
    pub fn expectation(&self, v: &[C64]) -> C64 {
        let mv = self.apply(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_same_dim(&self, other: &Self, context: &str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dim(context, self.dim(), other.dim()));
        }
        Ok(())
    }

    /// `self += c * other`.
    pub(crate) fn axpy_assign(&mut self, c: C64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += c * b;
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "matrix sum")?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "matrix product")?;
        Ok(Self(&self.0 * &other.0))
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{}) {}", self.dim(), self.dim(), self.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.check_same_dim(b, "commutator")?;
    Ok(ComplexMatrix(&a.0 * &b.0 - &b.0 * &a.0))
}

pub(crate) fn commutator_unchecked(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(&a.0 * &b.0 - &b.0 * &a.0)
}

pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// Tensor product of Pauli matrices; the leftmost letter acts on the most
/// significant qubit, so `pauli_string("ZI")` is `sigma_3` on qubit 1.
pub fn pauli_string(word: &str) -> Result<ComplexMatrix> {
    if word.is_empty() {
        return Err(Error::EmptyPauliWord);
    }
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let mut acc: Option<ComplexMatrix> = None;
    for letter in word.chars() {
        let entries = match letter.to_ascii_uppercase() {
            'I' => [one, zero, zero, one],
            'X' => [zero, one, one, zero],
            'Y' => [zero, -i, i, zero],
            'Z' => [one, zero, zero, -one],
            other => return Err(Error::InvalidPauliLetter(other)),
        };
        let m = ComplexMatrix::from_rows(2, &entries)?;
        acc = Some(match acc {
            None => m,
            Some(a) => a.kron(&m),
        });
    }
    Ok(acc.expect("non-empty word"))
}

/// Annihilation operator on `d` Fock levels, `<n-1|a|n> = sqrt(n)`.
pub fn boson_annihilate(d: usize) -> Result<ComplexMatrix> {
    if d < 2 {
        return Err(Error::TruncationTooSmall(d));
    }
    Ok(ComplexMatrix::from_fn(d, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// `|i><j|` on a `dim`-dimensional space.
pub fn ket_bra(i: usize, j: usize, dim: usize) -> Result<ComplexMatrix> {
    for index in [i, j] {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
    }
    let mut m = ComplexMatrix::zeros(dim);
    m.0[(i, j)] = C64::new(1.0, 0.0);
    Ok(m)
}

/// Number of ones in the binary label of a computational basis state.
pub fn hamming_weight(index: usize) -> u32 {
    index.count_ones()
}

/// Split of the joint Hilbert space into system and environment factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertFactorization {
    d_s: usize,
    d_e: usize,
}

impl HilbertFactorization {
    pub fn new(d_s: usize, d_e: usize) -> Result<Self> {
        if d_s == 0 || d_e == 0 {
            return Err(Error::NotSquare {
                rows: d_s,
                cols: d_e,
            });
        }
        Ok(Self { d_s, d_e })
    }

    pub fn system_dim(&self) -> usize {
        self.d_s
    }

    pub fn env_dim(&self) -> usize {
        self.d_e
    }

    pub fn total_dim(&self) -> usize {
        self.d_s * self.d_e
    }

    /// `M (x) I_e`.
    pub fn embed_system(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.dim() != self.d_s {
            return Err(Error::dim("system operator", self.d_s, m.dim()));
        }
        Ok(m.kron(&ComplexMatrix::identity(self.d_e)))
    }

    /// `I_s (x) B`.
    pub fn embed_env(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if b.dim() != self.d_e {
            return Err(Error::dim("environment operator", self.d_e, b.dim()));
        }
        Ok(ComplexMatrix::identity(self.d_s).kron(b))
    }

    /// Lift an operator that is either system-sized or already joint.
    pub fn lift(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.dim() == self.total_dim() {
            Ok(m.clone())
        } else if m.dim() == self.d_s {
            self.embed_system(m)
        } else {
            Err(Error::dim(
                "operator on system or joint space",
                self.total_dim(),
                m.dim(),
            ))
        }
    }

    /// `S (x) B`, checked against the factor dimensions.
    pub fn product(&self, s: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if s.dim() != self.d_s {
            return Err(Error::dim("system factor", self.d_s, s.dim()));
        }
        if b.dim() != self.d_e {
            return Err(Error::dim("environment factor", self.d_e, b.dim()));
        }
        Ok(s.kron(b))
    }
}
