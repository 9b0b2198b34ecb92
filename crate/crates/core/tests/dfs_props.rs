mod common;

use common::brute_force_dimension;
use decoq_core::dfs::{
    find_invariant_interactions, find_invariant_observables, verify_bracket_closure,
};
use decoq_core::fixtures::{collective_z, flip, number};
use decoq_core::operator::{commutator, hamming_weight, ket_bra, pauli_string};
use decoq_core::{
    ChainIndex, ClosureOptions, ComplexMatrix, HarmonicOperator, HilbertFactorization, C64,
};
use proptest::prelude::*;
use rand::Rng;

struct Instance {
    h0: ComplexMatrix,
    controls: Vec<ComplexMatrix>,
    factors: Vec<ComplexMatrix>,
}

/// Two qubits: diagonal drift, a random subset of flips and ZZ as controls,
/// and one or two diagonal noise factors.
fn random_instance(seed: u64) -> Instance {
    let mut rng = common::rng(seed);
    let zz = pauli_string("ZZ").unwrap();
    let z0 = pauli_string("ZI").unwrap();
    let s = collective_z(2);
    let h0 =
        &s.scale_real(rng.random_range(0.2..1.5)) + &zz.scale_real(rng.random_range(-1.0..1.0));
    let pool = [
        flip(2, 0),
        flip(2, 1),
        zz.clone(),
        pauli_string("XX").unwrap(),
    ];
    let controls = pool.into_iter().filter(|_| rng.random_bool(0.35)).collect();
    let mut factors = vec![if rng.random_bool(0.7) { s } else { z0 }];
    if rng.random_bool(0.3) {
        factors.push(zz.scale_real(rng.random_range(0.1..1.0)));
    }
    Instance {
        h0,
        controls,
        factors,
    }
}

fn apply_word(m: &ComplexMatrix, word: &[ChainIndex], inst: &Instance) -> ComplexMatrix {
    word.iter().fold(m.clone(), |acc, index| {
        let h = match index {
            ChainIndex::Drift => &inst.h0,
            ChainIndex::Control(i) => &inst.controls[*i],
            ChainIndex::Interaction => unreachable!("words only use drift and controls"),
        };
        commutator(&acc, h).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fixed_point_matches_brute_force(seed: u64) {
        let inst = random_instance(seed);
        let v = find_invariant_observables(&inst.h0, &inst.controls, &inst.factors, 1e-10).unwrap();
        let generators: Vec<ComplexMatrix> = std::iter::once(inst.h0.clone()).chain(inst.controls.iter().cloned()).collect();
        prop_assert_eq!(v.len(), brute_force_dimension(&generators, &inst.factors, 6));
    }

    #[test]
    fn members_have_no_witness_and_outsiders_do(seed: u64) {
        let inst = random_instance(seed);
        let v = find_invariant_observables(&inst.h0, &inst.controls, &inst.factors, 1e-10).unwrap();
        let mut rng = common::rng(seed ^ 0x5eed);
        let mut inside = ComplexMatrix::zeros(4);
        for b in v.basis() {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            inside = &inside + &b.scale(z);
        }
        prop_assert!(v.contains(&inside));
        prop_assert!(v.leakage_witness(&inside).is_none());

        let outside = common::matrix(&mut rng, 4);
        prop_assume!(!v.contains(&outside));
        let witness = v.leakage_witness(&outside).expect("an outsider leaks");
        let image = apply_word(&outside, &witness.word, &inst);
        let norm = commutator(&image, &inst.factors[witness.factor_index]).unwrap().frobenius_norm();
        prop_assert!((norm - witness.norm).abs() <= 1e-9 * norm.max(1.0));
        prop_assert!(norm > 1e-10);
    }

    #[test]
    fn commutant_is_closed_under_brackets(seed: u64) {
        let inst = random_instance(seed);
        let mut rng = common::rng(seed ^ 0xab);
        let f = HilbertFactorization::new(4, 2).unwrap();
        let (i, j) = (rng.random_range(0..4), rng.random_range(0..4));
        let c = HarmonicOperator::constant(ket_bra(i, j, 4).unwrap());
        let space = find_invariant_interactions(&c, &inst.h0, &inst.controls, &f, &ClosureOptions::default(), 1e-10).unwrap();
        let drift = &f.embed_system(&inst.h0).unwrap() + &f.embed_env(&number(2)).unwrap();
        let controls: Vec<ComplexMatrix> = inst.controls.iter().map(|h| f.embed_system(h).unwrap()).collect();
        prop_assert!(verify_bracket_closure(&space, &drift, &controls, 1e-10).unwrap());
    }
}

#[test]
fn collective_dephasing_protects_equal_weight_coordinates() {
    for n in 2..=4usize {
        let d = 1 << n;
        let s = collective_z(n);
        let v =
            find_invariant_observables(&s.scale_real(0.5), &[], std::slice::from_ref(&s), 1e-10)
                .unwrap();
        let mut expected = 0;
        for i in 0..d {
            for j in 0..d {
                let unit = ket_bra(i, j, d).unwrap();
                let equal = hamming_weight(i) == hamming_weight(j);
                expected += usize::from(equal);
                assert_eq!(v.contains(&unit), equal, "N = {n}, |{i}><{j}|");
            }
        }
        assert_eq!(v.len(), expected, "N = {n}");
    }
}
