//! Ready-made models: a monitored harmonic oscillator coupled to one bath
//! mode, and qubit registers under collective dephasing.

use crate::dynamics::SystemModel;
use crate::error::Result;
use crate::harmonic::{Frequency, HarmonicOperator};
use crate::operator::{
    boson_annihilate, ket_bra, pauli_string, ComplexMatrix, HilbertFactorization, C64,
};
use crate::DEFAULT_FREQ_TOL;

/// `sum_q Z_q` on `n` qubits.
pub fn collective_z(n: usize) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(1 << n);
    for q in 0..n {
        let word: String = (0..n).map(|k| if k == q { 'Z' } else { 'I' }).collect();
        s = &s + &pauli_string(&word).expect("valid word");
    }
    s
}

/// `X` on qubit `q` of `n`.
pub fn flip(n: usize, q: usize) -> ComplexMatrix {
    let word: String = (0..n).map(|k| if k == q { 'X' } else { 'I' }).collect();
    pauli_string(&word).expect("valid word")
}

/// `|i><j| + |j><i|`.
pub fn coherence_pair(i: usize, j: usize, dim: usize) -> ComplexMatrix {
    let m = ket_bra(i, j, dim).expect("indices in range");
    &m + &m.adjoint()
}

/// `|000><000| + |001><001| + |010><100| + |011><101|`.
pub fn three_qubit_observable() -> ComplexMatrix {
    [(0, 0), (1, 1), (2, 4), (3, 5)]
        .iter()
        .fold(ComplexMatrix::zeros(8), |acc, &(i, j)| {
            &acc + &ket_bra(i, j, 8).expect("in range")
        })
}

/// Normalized `(|i> + |j>) / sqrt(2)`.
pub fn bell_like(i: usize, j: usize, dim: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[i] += C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[j] += C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v
}

/// Number operator `a^dagger a` on `d` levels.
pub fn number(d: usize) -> ComplexMatrix {
    let a = boson_annihilate(d).expect("d >= 2");
    &a.adjoint() * &a
}

/// Rotating quadrature `a e^{i w t} + a^dagger e^{-i w t}`.
pub fn rotating_quadrature(d: usize, omega: Frequency) -> HarmonicOperator {
    let a = boson_annihilate(d).expect("d >= 2");
    HarmonicOperator::from_terms(
        d,
        vec![(omega, a.clone()), (omega.neg(), a.adjoint())],
        DEFAULT_FREQ_TOL,
    )
    .expect("matching dimensions")
}

/// Hermitian drive `i (a^dagger - a)`; its generator is `a^dagger - a`.
pub fn quadrature_drive(d: usize) -> ComplexMatrix {
    let a = boson_annihilate(d).expect("d >= 2");
    (&a.adjoint() - &a).scale(C64::new(0.0, 1.0))
}

/// Projector onto Fock levels `0..d-1`, where the truncated ladder
/// operators obey the canonical commutator.
pub fn interior_projector(d: usize) -> ComplexMatrix {
    let idx: Vec<usize> = (0..d - 1).collect();
    ComplexMatrix::projector(d, &idx).expect("indices in range")
}

/// Oscillator with `H0 = w a^dagger a`, drive `i (a^dagger - a)`, observable
/// the rotating quadrature, one bath mode `H_e = w c^dagger c` and exchange
/// coupling `kappa (a c^dagger + a^dagger c)`.
pub fn oscillator_model(d: usize, d_e: usize, omega: Frequency, kappa: f64) -> Result<SystemModel> {
    let f = HilbertFactorization::new(d, d_e)?;
    let a = boson_annihilate(d)?;
    let c = boson_annihilate(d_e)?;
    let w = omega.value();
    let coupling = vec![
        (a.scale_real(kappa), c.adjoint()),
        (a.adjoint().scale_real(kappa), c.clone()),
    ];
    SystemModel::new(
        f,
        number(d).scale_real(w),
        number(d_e).scale_real(w),
        rotating_quadrature(d, omega),
    )?
    .with_control(quadrature_drive(d))?
    .with_coupling(coupling)
}

/// `n` qubits with `H0 = S / 2`, `S = sum_q Z_q`, one bath mode
/// `H_e = b^dagger b` on `d_e` levels and `H_SB = g S (x) (b + b^dagger)`.
pub fn dephasing_model(
    n: usize,
    d_e: usize,
    g: f64,
    observable: ComplexMatrix,
) -> Result<SystemModel> {
    let f = HilbertFactorization::new(1 << n, d_e)?;
    let s = collective_z(n);
    let b = boson_annihilate(d_e)?;
    SystemModel::new(
        f,
        s.scale_real(0.5),
        number(d_e),
        HarmonicOperator::constant(observable),
    )?
    .with_coupling(vec![(s.scale_real(g), &b + &b.adjoint())])
}

/// [`dephasing_model`] with a flip control on every qubit.
pub fn controlled_dephasing_model(
    n: usize,
    d_e: usize,
    g: f64,
    observable: ComplexMatrix,
) -> Result<SystemModel> {
    dephasing_model(n, d_e, g, observable)?.with_controls((0..n).map(|q| flip(n, q)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        assert_eq!(collective_z(3).get(7, 7), C64::new(-3.0, 0.0));
        assert!(quadrature_drive(4).is_hermitian(0.0));
        let m = oscillator_model(5, 3, Frequency::from(1.0), 1.0).unwrap();
        assert!(m.interaction().is_hermitian(1e-14));
        assert_eq!(m.interaction_factors().unwrap().len(), 2);
        let p = three_qubit_observable();
        assert_eq!(p.get(2, 4), C64::new(1.0, 0.0));
    }
}
