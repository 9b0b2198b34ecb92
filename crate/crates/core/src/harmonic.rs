//! Operator-valued trigonometric polynomials `sum_k exp(i mu_k t) M_k`.
//!
//! Frequencies built from exact literals are carried as rationals (in units of
//! rad/time) so that sums of frequencies do not drift over deep closures.
//! Anything else falls back to floating point, and two frequencies then match
//! when they differ by at most `freq_tol`.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::operator::{commutator_unchecked, ComplexMatrix, HilbertFactorization, C64};
use crate::DEFAULT_FREQ_TOL;

/// Terms whose Frobenius norm falls at or below this are dropped.
pub const DROP_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frequency {
    value: f64,
    exact: Option<Rational64>,
}

impl Frequency {
    pub fn zero() -> Self {
        Self::exact(Rational64::zero())
    }

    pub fn exact(r: Rational64) -> Self {
        Self {
            value: r.to_f64().unwrap_or(f64::NAN),
            exact: Some(r),
        }
    }

    pub fn from_f64(value: f64) -> Self {
        Self { value, exact: None }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn as_exact(&self) -> Option<Rational64> {
        self.exact
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn matches(&self, other: &Self, freq_tol: f64) -> bool {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => a == b,
            _ => (self.value - other.value).abs() <= freq_tol,
        }
    }

    pub fn neg(&self) -> Self {
        match self.exact {
            Some(r) => Self::exact(-r),
            None => Self::from_f64(-self.value),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.exact, other.exact) {
            if let Some(sum) = checked_add(a, b) {
                return Self::exact(sum);
            }
        }
        Self::from_f64(self.value + other.value)
    }
}

fn checked_add(a: Rational64, b: Rational64) -> Option<Rational64> {
    let num = a
        .numer()
        .checked_mul(*b.denom())?
        .checked_add(b.numer().checked_mul(*a.denom())?)?;
    let den = a.denom().checked_mul(*b.denom())?;
    Some(Rational64::new(num, den))
}

impl From<f64> for Frequency {
    fn from(value: f64) -> Self {
        Self::from_f64(value)
    }
}

impl From<Rational64> for Frequency {
    fn from(r: Rational64) -> Self {
        Self::exact(r)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "{}", self.value),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HarmonicTerm {
    pub frequency: Frequency,
    pub matrix: ComplexMatrix,
}

/// `sum_k exp(i mu_k t) M_k`, kept in canonical form: frequencies pairwise
/// distinct, sorted ascending, no negligible terms.
#[derive(Clone, Debug)]
pub struct HarmonicOperator {
    dim: usize,
    terms: Vec<HarmonicTerm>,
    freq_tol: f64,
}

impl HarmonicOperator {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            freq_tol: DEFAULT_FREQ_TOL,
        }
    }

    pub fn constant(m: ComplexMatrix) -> Self {
        Self::single(Frequency::zero(), m)
    }

    pub fn single(frequency: impl Into<Frequency>, m: ComplexMatrix) -> Self {
        let dim = m.dim();
        Self::from_terms(dim, vec![(frequency.into(), m)], DEFAULT_FREQ_TOL)
            .expect("single term has consistent dimension")
    }

    pub fn from_terms(
        dim: usize,
        terms: Vec<(Frequency, ComplexMatrix)>,
        freq_tol: f64,
    ) -> Result<Self> {
        for (_, m) in &terms {
            if m.dim() != dim {
                return Err(Error::dim("harmonic term", dim, m.dim()));
            }
        }
        let mut op = Self {
            dim,
            terms: terms
                .into_iter()
                .map(|(frequency, matrix)| HarmonicTerm { frequency, matrix })
                .collect(),
            freq_tol,
        };
        op.canonicalize();
        Ok(op)
    }

    pub fn with_freq_tol(mut self, freq_tol: f64) -> Self {
        self.freq_tol = freq_tol;
        self.canonicalize();
        self
    }

    fn canonicalize(&mut self) {
        let mut terms = std::mem::take(&mut self.terms);
        terms.sort_by(|a, b| {
            a.frequency
                .value
                .partial_cmp(&b.frequency.value)
                .unwrap_or(Ordering::Equal)
        });
        let mut merged: Vec<HarmonicTerm> = Vec::with_capacity(terms.len());
        for term in terms {
            match merged
                .iter_mut()
                .rev()
                .take_while(|m| term.frequency.value - m.frequency.value <= self.freq_tol)
                .find(|m| m.frequency.matches(&term.frequency, self.freq_tol))
            {
                Some(existing) => {
                    existing.matrix = &existing.matrix + &term.matrix;
                    if !existing.frequency.is_exact() && term.frequency.is_exact() {
                        existing.frequency = term.frequency;
                    }
                }
                None => merged.push(term),
            }
        }
        merged.retain(|t| t.matrix.frobenius_norm() > DROP_TOL);
        self.terms = merged;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn freq_tol(&self) -> f64 {
        self.freq_tol
    }

    pub fn terms(&self) -> &[HarmonicTerm] {
        &self.terms
    }

    pub fn frequencies(&self) -> Vec<Frequency> {
        self.terms.iter().map(|t| t.frequency).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.frequency.matches(&Frequency::zero(), self.freq_tol))
    }

    /// The zero-frequency coefficient.
    pub fn constant_part(&self) -> ComplexMatrix {
        self.terms
            .iter()
            .find(|t| t.frequency.matches(&Frequency::zero(), self.freq_tol))
            .map(|t| t.matrix.clone())
            .unwrap_or_else(|| ComplexMatrix::zeros(self.dim))
    }

    pub fn eval(&self, t: f64) -> ComplexMatrix {
        let mut acc = ComplexMatrix::zeros(self.dim);
        for term in &self.terms {
            let phase = C64::from_polar(1.0, term.frequency.value * t);
            acc = &acc + &term.matrix.scale(phase);
        }
        acc
    }

    /// Norm induced by [`HarmonicOperator::inner`].
    pub fn norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.matrix.frobenius_norm().powi(2))
            .fold(0.0, |acc, x| acc + x)
            .sqrt()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm() <= tol
    }

    /// `sum over matched frequencies of tr(A_k^dagger B_k)`.
    pub fn inner(&self, other: &Self) -> C64 {
        let tol = self.freq_tol.max(other.freq_tol);
        let mut acc = C64::new(0.0, 0.0);
        for a in &self.terms {
            if let Some(b) = other
                .terms
                .iter()
                .find(|b| a.frequency.matches(&b.frequency, tol))
            {
                acc += a.matrix.hs_inner(&b.matrix);
            }
        }
        acc
    }

    fn check_dim(&self, other: &Self, context: &str) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::dim(context, self.dim, other.dim));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other, "harmonic sum")?;
        Ok(self.add_unchecked(other))
    }

    pub(crate) fn add_unchecked(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let mut op = Self {
            dim: self.dim,
            terms,
            freq_tol: self.freq_tol.max(other.freq_tol),
        };
        op.canonicalize();
        op
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut op = Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    frequency: t.frequency,
                    matrix: t.matrix.scale(c),
                })
                .collect(),
            freq_tol: self.freq_tol,
        };
        op.canonicalize();
        op
    }

    /// `self - c * other`.
    pub(crate) fn axpy_neg(&self, c: C64, other: &Self) -> Self {
        self.add_unchecked(&other.scale(-c))
    }

    /// In-place `self -= c * other` without re-canonicalizing; call
    /// [`Self::finish_in_place`] afterwards.
    pub(crate) fn sub_scaled_assign(&mut self, c: C64, other: &Self) {
        let tol = self.freq_tol.max(other.freq_tol);
        for t in &other.terms {
            match self
                .terms
                .iter_mut()
                .find(|s| s.frequency.matches(&t.frequency, tol))
            {
                Some(s) => s.matrix.axpy_assign(-c, &t.matrix),
                None => self.terms.push(HarmonicTerm {
                    frequency: t.frequency,
                    matrix: t.matrix.scale(-c),
                }),
            }
        }
    }

    pub(crate) fn finish_in_place(&mut self) {
        self.canonicalize();
    }

    /// `(mu, M) -> (-mu, M^dagger)`, so that `A(t)^dagger = A^dagger(t)`.
    pub fn adjoint(&self) -> Self {
        let mut op = Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    frequency: t.frequency.neg(),
                    matrix: t.matrix.adjoint(),
                })
                .collect(),
            freq_tol: self.freq_tol,
        };
        op.canonicalize();
        op
    }

    /// Hermitian at every `t`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.add_unchecked(&self.adjoint().scale(C64::new(-1.0, 0.0)))
            .norm()
            <= tol
    }

    /// Apply `f` to every coefficient matrix, keeping frequencies.
    pub fn map_matrices(
        &self,
        dim: usize,
        mut f: impl FnMut(&ComplexMatrix) -> ComplexMatrix,
    ) -> Self {
        let mut op = Self {
            dim,
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    frequency: t.frequency,
                    matrix: f(&t.matrix),
                })
                .collect(),
            freq_tol: self.freq_tol,
        };
        op.canonicalize();
        op
    }

    /// Lift a system-sized operator to the joint space; joint operators pass
    /// through unchanged.
    pub fn lift(&self, factorization: &HilbertFactorization) -> Result<Self> {
        if self.dim == factorization.total_dim() {
            return Ok(self.clone());
        }
        if self.dim != factorization.system_dim() {
            return Err(Error::dim(
                "harmonic operator on system or joint space",
                factorization.total_dim(),
                self.dim,
            ));
        }
        let id = ComplexMatrix::identity(factorization.env_dim());
        Ok(self.map_matrices(factorization.total_dim(), |m| m.kron(&id)))
    }

    /// `[self, m]` for a constant matrix `m`.
    pub fn commutator_with(&self, m: &ComplexMatrix) -> Result<Self> {
        if m.dim() != self.dim {
            return Err(Error::dim("harmonic commutator", self.dim, m.dim()));
        }
        Ok(self.map_matrices(self.dim, |a| commutator_unchecked(a, m)))
    }

    /// Time derivative.
    pub fn time_derivative(&self) -> Self {
        let mut op = Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    frequency: t.frequency,
                    matrix: t.matrix.scale(C64::new(0.0, t.frequency.value)),
                })
                .collect(),
            freq_tol: self.freq_tol,
        };
        op.canonicalize();
        op
    }

    pub fn compress(&self, p: &ComplexMatrix) -> Self {
        self.map_matrices(self.dim, |m| m.compress(p))
    }
}

/// Termwise commutator: `(mu + nu, [M, N])` for every pair of terms.
pub fn harmonic_commutator(a: &HarmonicOperator, b: &HarmonicOperator) -> Result<HarmonicOperator> {
    a.check_dim(b, "harmonic commutator")?;
    let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
    for s in &a.terms {
        for t in &b.terms {
            terms.push(HarmonicTerm {
                frequency: s.frequency.add(&t.frequency),
                matrix: commutator_unchecked(&s.matrix, &t.matrix),
            });
        }
    }
    let mut op = HarmonicOperator {
        dim: a.dim,
        terms,
        freq_tol: a.freq_tol.max(b.freq_tol),
    };
    op.canonicalize();
    Ok(op)
}

/// Drift derivation `A -> dA/dt + [A, -i H0]` for a Hermitian, constant `H0`.
///
/// Termwise this is `exp(i mu t) ([M, -i H0] + i mu M)`. Its expectation value
/// is the rate of change of `<psi|A(t)|psi>` under free evolution.
pub fn harmonic_derivation(a: &HarmonicOperator, h0: &ComplexMatrix) -> Result<HarmonicOperator> {
    if h0.dim() != a.dim {
        return Err(Error::dim("harmonic derivation", a.dim, h0.dim()));
    }
    let g0 = h0.generator();
    let mut op = HarmonicOperator {
        dim: a.dim,
        terms: a
            .terms
            .iter()
            .map(|t| HarmonicTerm {
                frequency: t.frequency,
                matrix: &commutator_unchecked(&t.matrix, &g0)
                    + &t.matrix.scale(C64::new(0.0, t.frequency.value)),
            })
            .collect(),
        freq_tol: a.freq_tol,
    };
    op.canonicalize();
    Ok(op)
}
