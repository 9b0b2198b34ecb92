mod common;

use decoq_core::dynamics::{propagate, SystemModel, NORM_DEFECT_BOUND};
use decoq_core::{
    ComplexMatrix, Frequency, HarmonicOperator, HilbertFactorization, DEFAULT_FREQ_TOL,
};
use num_rational::Rational64;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn hermitian_harmonic(rng: &mut ChaCha8Rng, n: usize) -> HarmonicOperator {
    let m = common::matrix(rng, n);
    let mu = Frequency::exact(Rational64::new(rng.random_range(1..=4), 2));
    HarmonicOperator::from_terms(
        n,
        vec![
            (Frequency::from(0.0), common::hermitian(rng, n)),
            (mu, m.clone()),
            (mu.neg(), m.adjoint()),
        ],
        DEFAULT_FREQ_TOL,
    )
    .unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, observable_on_joint: bool) -> SystemModel {
    let d_s = rng.random_range(2..=3);
    let d_e = rng.random_range(2..=3);
    let f = HilbertFactorization::new(d_s, d_e).unwrap();
    let n = f.total_dim();
    let c = if observable_on_joint {
        common::hermitian(rng, n)
    } else {
        common::matrix(rng, d_s)
    };
    SystemModel::new(
        f,
        common::hermitian(rng, d_s),
        common::hermitian(rng, d_e),
        HarmonicOperator::constant(c),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_preserves_the_norm(seed: u64) {
        let mut rng = common::rng(seed);
        let model = random_model(&mut rng, false);
        let n = model.factorization().total_dim();
        let h_sb = hermitian_harmonic(&mut rng, n);
        let model = model.with_interaction(h_sb).unwrap();
        let psi = common::state(&mut rng, n);
        let trace = propagate(&model, &psi, (0.0, 2.0), 0.01, true).unwrap();
        let worst = trace.norm_defect.iter().cloned().fold(0.0, f64::max);
        prop_assert!(worst <= NORM_DEFECT_BOUND, "norm defect {worst:e}");
    }

    #[test]
    fn total_energy_is_conserved(seed: u64) {
        let mut rng = common::rng(seed);
        let base = random_model(&mut rng, false);
        let f = *base.factorization();
        let h_sb = common::hermitian(&mut rng, f.total_dim());
        let total = &base.drift_joint() + &h_sb;
        let model = SystemModel::new(f, base.h0().clone(), base.h_env().clone(), HarmonicOperator::constant(total))
            .unwrap()
            .with_interaction(HarmonicOperator::constant(h_sb))
            .unwrap();
        let psi = common::state(&mut rng, f.total_dim());
        let trace = propagate(&model, &psi, (0.0, 3.0), 0.05, true).unwrap();
        let e0 = trace.outputs[0];
        for y in &trace.outputs {
            prop_assert!((y - e0).norm() <= 1e-8 * e0.norm().max(1.0), "{y} vs {e0}");
        }
    }

    #[test]
    fn constant_hamiltonian_matches_exact_propagator(seed: u64) {
        let mut rng = common::rng(seed);
        let model = random_model(&mut rng, true);
        let n = model.factorization().total_dim();
        let h_sb = common::hermitian(&mut rng, n);
        let total = &model.drift_joint() + &h_sb;
        let model = model.with_interaction(HarmonicOperator::constant(h_sb)).unwrap();
        let psi = common::state(&mut rng, n);
        let trace = propagate(&model, &psi, (0.0, 1.5), 0.1, true).unwrap();
        let exact: ComplexMatrix = total.propagator(1.5);
        let c = model.observable_joint().eval(1.5);
        let expected = c.expectation(&exact.apply(&psi));
        let got = *trace.outputs.last().unwrap();
        prop_assert!((got - expected).norm() <= 1e-9, "{got} vs {expected}");
        prop_assert_eq!(trace.times.len(), 16);
        prop_assert!(trace.outputs.iter().all(|y| y.re.is_finite() && y.im.is_finite()));
    }
}
