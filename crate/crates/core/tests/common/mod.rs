#![allow(dead_code)]

use decoq_core::operator::{commutator, ket_bra};
use decoq_core::{ComplexMatrix, Frequency, HarmonicOperator, C64, DEFAULT_FREQ_TOL};
use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn hermitian(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let m = matrix(rng, d);
    (&m + &m.adjoint()).scale_real(0.5)
}

/// Up to three terms with half-integer frequencies in `[-2, 2]`.
pub fn harmonic(rng: &mut ChaCha8Rng, d: usize) -> HarmonicOperator {
    let k = rng.random_range(1..=3);
    let terms = (0..k)
        .map(|_| {
            let mu = Frequency::exact(Rational64::new(rng.random_range(-4..=4), 2));
            (mu, matrix(rng, d))
        })
        .collect();
    HarmonicOperator::from_terms(d, terms, DEFAULT_FREQ_TOL).unwrap()
}

pub fn state(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn diff(a: &HarmonicOperator, b: &HarmonicOperator) -> f64 {
    a.add(&b.scale(C64::new(-1.0, 0.0))).unwrap().norm()
}

/// Dimension of `{M : [w(M), S_k] = 0 for every ad-word w of length <= max_len}`
/// by stacking the word superoperators and taking a nullspace.
pub fn brute_force_dimension(
    hamiltonians: &[ComplexMatrix],
    factors: &[ComplexMatrix],
    max_len: usize,
) -> usize {
    let d = factors[0].dim();
    let n = d * d;
    let superop = |h: &ComplexMatrix| -> DMatrix<C64> {
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            let unit = ket_bra(k % d, k / d, d).unwrap();
            let image = commutator(&unit, h).unwrap();
            m.set_column(k, &DVector::from_vec(image.vectorize()));
        }
        m
    };
    let ad_factors: Vec<DMatrix<C64>> = factors.iter().map(superop).collect();
    let ads: Vec<DMatrix<C64>> = hamiltonians.iter().map(superop).collect();
    let mut words = vec![DMatrix::<C64>::identity(n, n)];
    let mut layer = words.clone();
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| ads.iter().map(move |a| a * w))
            .collect();
        words.extend(layer.iter().cloned());
    }
    let rows: Vec<DMatrix<C64>> = words
        .iter()
        .flat_map(|w| ad_factors.iter().map(move |s| s * w))
        .collect();
    let mut stacked = DMatrix::zeros(rows.len() * n, n);
    for (k, r) in rows.iter().enumerate() {
        stacked.rows_mut(k * n, n).copy_from(r);
    }
    let sv = stacked.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    n - sv.iter().filter(|&&x| x > 1e-9 * smax.max(1.0)).count()
}
