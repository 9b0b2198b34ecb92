mod common;

use decoq_core::fixtures::collective_z;
use decoq_core::operator::hamming_weight;
use decoq_core::{
    extend_distribution, generate_distribution, harmonic_derivation, orthonormalize,
    ClosureOptions, ComplexMatrix, HarmonicOperator, C64,
};
use proptest::prelude::*;
use rand::Rng;

fn instance(seed: u64) -> (HarmonicOperator, ComplexMatrix, Vec<ComplexMatrix>) {
    let mut rng = common::rng(seed);
    let d = rng.random_range(2..=3);
    let c = common::harmonic(&mut rng, d);
    let h0 = common::hermitian(&mut rng, d);
    let r = rng.random_range(0..=2);
    let controls = (0..r).map(|_| common::hermitian(&mut rng, d)).collect();
    (c, h0, controls)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stages_grow_monotonically_within_bounds(seed: u64) {
        let (c, h0, controls) = instance(seed);
        let (space, report) = generate_distribution(&c, &h0, &controls, &ClosureOptions::default()).unwrap();
        prop_assert!(report.converged);
        prop_assert!(report.per_stage_dims.windows(2).all(|w| w[0] <= w[1]));
        let d = c.dim();
        prop_assert!(report.final_dimension <= d * d * c.terms().len().max(1));
        prop_assert_eq!(report.final_dimension, space.len());
        prop_assert!(space.contains(&c));
        prop_assert!(space.gram_defect() < 1e-9);
    }

    #[test]
    fn closure_is_idempotent(seed: u64) {
        let (c, h0, controls) = instance(seed);
        let options = ClosureOptions::default();
        let (space, _) = generate_distribution(&c, &h0, &controls, &options).unwrap();
        let before = space.len();
        let (again, report) = extend_distribution(space, &h0, &controls, &options).unwrap();
        prop_assert!(report.converged);
        prop_assert_eq!(again.len(), before);
        prop_assert_eq!(report.iterations, 1);
    }

    #[test]
    fn closure_contains_every_image(seed: u64) {
        let (c, h0, controls) = instance(seed);
        let (space, _) = generate_distribution(&c, &h0, &controls, &ClosureOptions::default()).unwrap();
        for b in space.basis() {
            for h in &controls {
                let mut image = b.clone();
                for _ in 0..3 {
                    image = image.commutator_with(&h.generator()).unwrap();
                    prop_assert!(space.contains(&image));
                }
            }
            prop_assert!(space.contains(&harmonic_derivation(b, &h0).unwrap()));
        }
    }

    #[test]
    fn membership_survives_reorthonormalization(seed: u64) {
        let (c, h0, controls) = instance(seed);
        let (space, _) = generate_distribution(&c, &h0, &controls, &ClosureOptions::default()).unwrap();
        let again = orthonormalize(space.basis(), space.rank_tol());
        prop_assert_eq!(again.len(), space.len());
        let mut rng = common::rng(seed ^ 0x5eed);
        let probe = common::harmonic(&mut rng, c.dim());
        prop_assert_eq!(space.contains(&probe), again.contains(&probe));
        for b in space.basis() {
            prop_assert!(again.contains(b));
        }
    }

    /// Under pure dephasing drift every generated element has coordinates
    /// `c_ij (w(j) - w(i))^K`, so the closure is the span of those vectors.
    #[test]
    fn dephasing_closure_follows_weight_pattern(seed: u64) {
        let mut rng = common::rng(seed);
        let c = common::matrix(&mut rng, 4);
        let h0 = collective_z(2).scale_real(0.5);
        let (space, _) = generate_distribution(
            &HarmonicOperator::constant(c.clone()),
            &h0,
            &[],
            &ClosureOptions::default(),
        )
        .unwrap();
        let patterned: Vec<HarmonicOperator> = (0..5)
            .map(|k| {
                HarmonicOperator::constant(ComplexMatrix::from_fn(4, |i, j| {
                    let dw = hamming_weight(j) as f64 - hamming_weight(i) as f64;
                    c.get(i, j) * C64::new(dw.powi(k), 0.0)
                }))
            })
            .collect();
        let reference = orthonormalize(&patterned, 1e-9);
        prop_assert_eq!(space.len(), reference.len());
        for b in space.basis() {
            prop_assert!(reference.contains(b));
        }
    }
}

#[test]
fn zero_observable_gives_empty_distribution() {
    let (space, report) = generate_distribution(
        &HarmonicOperator::zero(3),
        &ComplexMatrix::identity(3),
        &[],
        &ClosureOptions::default(),
    )
    .unwrap();
    assert!(space.is_empty());
    assert!(report.degenerate);
    assert!(report.converged);
}
