//! Decoupling checks.
//!
//! The open-loop check asks whether every element of the generated
//! distribution commutes with the interaction; the feedback check only asks
//! that the commutators stay inside the distribution. Chained Lie
//! derivatives of the output are available in closed form (as expectation
//! values of nested commutators) and through an independent oracle that
//! differentiates compositions of propagator flows numerically.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::distribution::{generate_distribution, ClosureOptions, ClosureReport, OperatorSpace};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::harmonic::{harmonic_commutator, harmonic_derivation, Frequency, HarmonicOperator};
use crate::operator::{ComplexMatrix, HilbertFactorization, C64};

/// Longest chain the finite-difference oracle accepts.
pub const MAX_ORACLE_CHAIN: usize = 4;
/// Base step of the oracle's central differences.
pub const DEFAULT_ORACLE_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    /// Index of the offending basis element.
    pub basis_index: usize,
    /// Frequency of the largest term of the offending commutator.
    pub frequency: Frequency,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViolationReport {
    pub decoupled: bool,
    pub worst_norm: f64,
    pub witness: Option<Witness>,
    pub per_element_norms: Vec<f64>,
}

impl ViolationReport {
    fn from_norms(norms: Vec<f64>, residuals: &[HarmonicOperator], tol: f64) -> Self {
        let (worst_index, worst_norm) =
            norms
                .iter()
                .cloned()
                .enumerate()
                .fold(
                    (None, 0.0),
                    |(bi, bn), (i, n)| {
                        if n > bn {
                            (Some(i), n)
                        } else {
                            (bi, bn)
                        }
                    },
                );
        let decoupled = worst_norm <= tol;
        let witness = match worst_index {
            Some(i) if !decoupled => {
                let frequency = residuals[i]
                    .terms()
                    .iter()
                    .max_by(|a, b| {
                        a.matrix
                            .frobenius_norm()
                            .total_cmp(&b.matrix.frobenius_norm())
                    })
                    .map(|t| t.frequency)
                    .unwrap_or_else(Frequency::zero);
                Some(Witness {
                    basis_index: i,
                    frequency,
                    norm: worst_norm,
                })
            }
            _ => None,
        };
        Self {
            decoupled,
            worst_norm,
            witness,
            per_element_norms: norms,
        }
    }
}

fn joint_space(
    space: &OperatorSpace,
    factorization: &HilbertFactorization,
) -> Result<OperatorSpace> {
    if space.dim() != factorization.system_dim() && space.dim() != factorization.total_dim() {
        return Err(Error::dim(
            "distribution (system or joint space)",
            factorization.system_dim(),
            space.dim(),
        ));
    }
    space.lift(factorization)
}

fn check_interaction(h_sb: &HarmonicOperator, factorization: &HilbertFactorization) -> Result<()> {
    if h_sb.dim() != factorization.total_dim() {
        return Err(Error::dim(
            "interaction Hamiltonian",
            factorization.total_dim(),
            h_sb.dim(),
        ));
    }
    Ok(())
}

/// `worst_norm = max_T || [T, H_SB] ||` over the (lifted) basis.
pub fn check_open_loop(
    space: &OperatorSpace,
    h_sb: &HarmonicOperator,
    factorization: &HilbertFactorization,
    tol: f64,
) -> Result<ViolationReport> {
    check_interaction(h_sb, factorization)?;
    let joint = joint_space(space, factorization)?;
    let residuals: Vec<HarmonicOperator> = joint
        .basis()
        .iter()
        .map(|t| harmonic_commutator(t, h_sb))
        .collect::<Result<_>>()?;
    let norms = residuals.iter().map(|r| r.norm()).collect();
    Ok(ViolationReport::from_norms(norms, &residuals, tol))
}

/// Membership of every `[T, H_SB]` in the (lifted) space. The reported norm
/// of each element is its projection residual divided by `max(1, ||R||)`.
pub fn check_feedback(
    space: &OperatorSpace,
    h_sb: &HarmonicOperator,
    factorization: &HilbertFactorization,
    tol: f64,
) -> Result<ViolationReport> {
    check_interaction(h_sb, factorization)?;
    let joint = joint_space(space, factorization)?;
    let mut residuals = Vec::with_capacity(joint.len());
    let mut norms = Vec::with_capacity(joint.len());
    for t in joint.basis() {
        let r = harmonic_commutator(t, h_sb)?;
        let scale = r.norm().max(1.0);
        let res = joint.residual(&r);
        norms.push(res.norm() / scale);
        residuals.push(res);
    }
    Ok(ViolationReport::from_norms(norms, &residuals, tol))
}

/// Generate the distribution of a model's observable and check it against
/// the model's interaction.
pub fn analyze_open_loop(
    model: &SystemModel,
    options: &ClosureOptions,
    tol: f64,
) -> Result<(OperatorSpace, ClosureReport, ViolationReport)> {
    let (c, h0, controls) = model.closure_inputs();
    let (space, report) = generate_distribution(&c, &h0, &controls, options)?;
    let verdict = check_open_loop(&space, model.interaction(), model.factorization(), tol)?;
    Ok((space, report, verdict))
}

/// Feedback check of the same distribution, represented on the joint space.
pub fn analyze_feedback(
    model: &SystemModel,
    space: &OperatorSpace,
    tol: f64,
) -> Result<ViolationReport> {
    check_feedback(space, model.interaction(), model.factorization(), tol)
}

/// One vector field of the augmented system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChainIndex {
    /// Drift `K_0`: advances time and evolves under `H0 + H_e`.
    Drift,
    /// Control field `K_i` (zero based).
    Control(usize),
    /// Interaction field `K_I`.
    Interaction,
}

impl std::fmt::Display for ChainIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainIndex::Drift => write!(f, "0"),
            ChainIndex::Control(i) => write!(f, "{}", i + 1),
            ChainIndex::Interaction => write!(f, "I"),
        }
    }
}

/// A chained Lie derivative evaluated at one joint state and time. Indices
/// are written left to right as in `L_{K_I} L_{K_0} L_{K_1} y`; the rightmost
/// derivative acts first on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct LieChainSpec {
    pub indices: Vec<ChainIndex>,
    pub state: Vec<C64>,
    pub time: f64,
}

impl LieChainSpec {
    pub fn new(indices: Vec<ChainIndex>, state: Vec<C64>, time: f64) -> Result<Self> {
        let n: f64 = state.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(n));
        }
        Ok(Self {
            indices,
            state,
            time,
        })
    }
}

/// A chain whose fields are real combinations of the basic fields.
pub type FieldCombination = Vec<(ChainIndex, f64)>;

fn check_index(index: ChainIndex, model: &SystemModel) -> Result<()> {
    if let ChainIndex::Control(i) = index {
        if i >= model.control_count() {
            return Err(Error::UnknownControl {
                index: i,
                count: model.control_count(),
            });
        }
    }
    Ok(())
}

fn apply_field(
    index: ChainIndex,
    op: &HarmonicOperator,
    model: &SystemModel,
    drift: &ComplexMatrix,
) -> Result<HarmonicOperator> {
    check_index(index, model)?;
    match index {
        ChainIndex::Drift => harmonic_derivation(op, drift),
        ChainIndex::Control(i) => {
            op.commutator_with(&model.control_joint(i).expect("index checked").generator())
        }
        ChainIndex::Interaction => {
            harmonic_commutator(op, &model.interaction().scale(C64::new(0.0, -1.0)))
        }
    }
}

/// Operator `T` with `L_{K_{j1}} ... L_{K_{jn}} y = <xi|T(t)|xi>` on the
/// joint space.
pub fn lie_chain_operator(indices: &[ChainIndex], model: &SystemModel) -> Result<HarmonicOperator> {
    let chain: Vec<FieldCombination> = indices.iter().map(|&i| vec![(i, 1.0)]).collect();
    lie_chain_combination(&chain, model)
}

/// As [`lie_chain_operator`], with every field a real linear combination.
pub fn lie_chain_combination(
    chain: &[FieldCombination],
    model: &SystemModel,
) -> Result<HarmonicOperator> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let drift = model.drift_joint();
    let mut op = model.observable_joint();
    for field in chain.iter().rev() {
        let mut next = HarmonicOperator::zero(op.dim());
        for &(index, weight) in field {
            let image = apply_field(index, &op, model, &drift)?;
            next = next.add_unchecked(&image.scale(C64::new(weight, 0.0)));
        }
        op = next;
    }
    Ok(op)
}

/// `exp(-i s H)` for a Hermitian `H`, via one eigendecomposition.
struct HermitianFlow {
    vectors: DMatrix<C64>,
    values: DVector<f64>,
}

impl HermitianFlow {
    fn new(h: &ComplexMatrix) -> Self {
        let herm = (h.as_matrix() + h.as_matrix().adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        }
    }

    /// `(exp(-i s H) - 1) psi`, accurate relative to its own size.
    fn displacement(&self, s: f64, psi: &DVector<C64>) -> DVector<C64> {
        let mut coeffs = self.vectors.adjoint() * psi;
        for (c, &l) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= phase_minus_one(-s * l);
        }
        &self.vectors * coeffs
    }
}

/// `exp(i x) - 1` without cancellation for small `x`.
fn phase_minus_one(x: f64) -> C64 {
    C64::new(0.0, 2.0 * (0.5 * x).sin()) * C64::from_polar(1.0, 0.5 * x)
}

struct FlowCache<'a> {
    model: &'a SystemModel,
    drift: HermitianFlow,
    controls: HashMap<usize, HermitianFlow>,
    interactions: HashMap<u64, HermitianFlow>,
}

impl<'a> FlowCache<'a> {
    fn new(model: &'a SystemModel) -> Self {
        Self {
            model,
            drift: HermitianFlow::new(&model.drift_joint()),
            controls: HashMap::new(),
            interactions: HashMap::new(),
        }
    }

    /// Flow of `index` for time `s` from `(t, xi + delta)`; returns the new
    /// time and displacement from `xi`.
    fn step(
        &mut self,
        index: ChainIndex,
        s: f64,
        t: f64,
        xi: &DVector<C64>,
        delta: &DVector<C64>,
    ) -> (f64, DVector<C64>) {
        let psi = xi + delta;
        match index {
            ChainIndex::Drift => (t + s, delta + self.drift.displacement(s, &psi)),
            ChainIndex::Control(i) => {
                let model = self.model;
                let flow = self.controls.entry(i).or_insert_with(|| {
                    HermitianFlow::new(model.control_joint(i).expect("index checked"))
                });
                (t, delta + flow.displacement(s, &psi))
            }
            ChainIndex::Interaction => {
                let model = self.model;
                let flow = self
                    .interactions
                    .entry(t.to_bits())
                    .or_insert_with(|| HermitianFlow::new(&model.interaction().eval(t)));
                (t, delta + flow.displacement(s, &psi))
            }
        }
    }
}

/// Mixed central difference of `f(s_1, ..., s_k)` at the origin with step
/// `h` in every direction.
fn mixed_difference(k: usize, h: f64, mut f: impl FnMut(&[f64]) -> C64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    let mut s = vec![0.0; k];
    for mask in 0..(1usize << k) {
        let mut sign = 1.0;
        for (j, sj) in s.iter_mut().enumerate() {
            if mask & (1 << j) != 0 {
                *sj = -h;
                sign = -sign;
            } else {
                *sj = h;
            }
        }
        total += f(&s) * sign;
    }
    total / (2.0 * h).powi(k as i32)
}

/// Finite-difference oracle for one chain at one state.
pub fn lie_chain_oracle(spec: &LieChainSpec, model: &SystemModel, h: f64) -> Result<C64> {
    Ok(lie_chain_oracle_batch(
        &spec.indices,
        std::slice::from_ref(&spec.state),
        spec.time,
        model,
        h,
    )?[0])
}

/// Finite-difference oracle for one chain at many states sharing a time.
///
/// The chain value is the mixed derivative of
/// `y(Z_n^{s_n} o ... o Z_1^{s_1} (t, xi))` at `s = 0`, where `Z_k` is the
/// flow of the k-th field from the left. Two central-difference levels
/// (`h`, `h/2`) are combined by Richardson extrapolation. Each sample is
/// evaluated as `y - y(0)` from the state displacement, so rounding error
/// scales with the step rather than with `|y|`.
pub fn lie_chain_oracle_batch(
    indices: &[ChainIndex],
    states: &[Vec<C64>],
    time: f64,
    model: &SystemModel,
    h: f64,
) -> Result<Vec<C64>> {
    if indices.is_empty() {
        return Err(Error::EmptyChain);
    }
    if indices.len() > MAX_ORACLE_CHAIN {
        return Err(Error::ChainTooLong(indices.len()));
    }
    for &i in indices {
        check_index(i, model)?;
    }
    let n = model.factorization().total_dim();
    for s in states {
        if s.len() != n {
            return Err(Error::dim("chain state", n, s.len()));
        }
    }
    let observable = model.observable_joint();
    let mut cache = FlowCache::new(model);
    let k = indices.len();
    let mut results = Vec::with_capacity(states.len());
    for state in states {
        let xi = DVector::from_column_slice(state);
        let c0 = observable.eval(time);
        let c_xi = c0.as_matrix() * &xi;
        let mut y = |s: &[f64]| -> C64 {
            let mut t = time;
            let mut delta = DVector::zeros(n);
            for (index, &sj) in indices.iter().zip(s) {
                let (t_next, d_next) = cache.step(*index, sj, t, &xi, &delta);
                t = t_next;
                delta = d_next;
            }
            // <xi + d| C(t0) + dC |xi + d> - <xi|C(t0)|xi>
            let mut dy = (xi.adjoint() * (c0.as_matrix() * &delta))[(0, 0)]
                + (delta.adjoint() * &c_xi)[(0, 0)]
                + (delta.adjoint() * c0.as_matrix() * &delta)[(0, 0)];
            if t != time {
                let psi = &xi + &delta;
                for term in observable.terms() {
                    let mu = term.frequency.value();
                    let factor = C64::from_polar(1.0, mu * time) * phase_minus_one(mu * (t - time));
                    dy += (psi.adjoint() * term.matrix.as_matrix() * &psi)[(0, 0)] * factor;
                }
            }
            dy
        };
        let coarse = mixed_difference(k, h, &mut y);
        let fine = mixed_difference(k, 0.5 * h, &mut y);
        results.push((fine * 4.0 - coarse) / 3.0);
    }
    Ok(results)
}

/// Bound on `|<xi|T|xi>|` for the chain operator: `||C||_2` times, per
/// field, twice the spectral norm of its Hamiltonian (plus the largest
/// observable frequency for the drift).
pub fn chain_scale(indices: &[ChainIndex], model: &SystemModel) -> Result<f64> {
    let spectral = |m: &ComplexMatrix| {
        m.as_matrix()
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    };
    let c = model.observable_joint();
    let mut scale: f64 = c.terms().iter().map(|t| spectral(&t.matrix)).sum();
    let max_freq = c
        .terms()
        .iter()
        .chain(model.interaction().terms())
        .map(|t| t.frequency.value().abs())
        .fold(0.0, f64::max);
    for &i in indices {
        check_index(i, model)?;
        let norm = match i {
            ChainIndex::Drift => 2.0 * spectral(&model.drift_joint()) + max_freq,
            ChainIndex::Control(j) => 2.0 * spectral(model.control_joint(j).expect("checked")),
            ChainIndex::Interaction => {
                2.0 * model
                    .interaction()
                    .terms()
                    .iter()
                    .map(|t| spectral(&t.matrix))
                    .sum::<f64>()
            }
        };
        scale *= norm;
    }
    Ok(scale)
}

/// All chains `[I, j_1, ..., j_m]` with `m < max_len` and `j` over the drift
/// and controls.
pub fn interaction_terminated_chains(controls: usize, max_len: usize) -> Vec<Vec<ChainIndex>> {
    let fields: Vec<ChainIndex> = std::iter::once(ChainIndex::Drift)
        .chain((0..controls).map(ChainIndex::Control))
        .collect();
    let mut out = Vec::new();
    let mut layer: Vec<Vec<ChainIndex>> = vec![vec![ChainIndex::Interaction]];
    for _ in 0..max_len {
        out.extend(layer.iter().cloned());
        layer = layer
            .iter()
            .flat_map(|chain| {
                fields.iter().map(move |&f| {
                    let mut c = chain.clone();
                    c.push(f);
                    c
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemModel;
    use crate::operator::{boson_annihilate, ket_bra, pauli_string};

    fn dephasing_model(observable: ComplexMatrix) -> SystemModel {
        let f = HilbertFactorization::new(4, 3).unwrap();
        let s = &pauli_string("ZI").unwrap() + &pauli_string("IZ").unwrap();
        let b = boson_annihilate(3).unwrap();
        SystemModel::new(
            f,
            s.scale_real(0.5),
            &b.adjoint() * &b,
            HarmonicOperator::constant(observable),
        )
        .unwrap()
        .with_coupling(vec![(s.scale_real(0.5), &b + &b.adjoint())])
        .unwrap()
    }

    fn coherence(i: usize, j: usize) -> ComplexMatrix {
        let m = ket_bra(i, j, 4).unwrap();
        &m + &m.adjoint()
    }

    fn random_state(n: usize, seed: u64) -> Vec<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let n: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn zero_interaction_is_decoupled() {
        let f = HilbertFactorization::new(2, 2).unwrap();
        let space = crate::distribution::orthonormalize(
            &[HarmonicOperator::constant(pauli_string("X").unwrap())],
            1e-9,
        );
        let report = check_open_loop(&space, &HarmonicOperator::zero(4), &f, 1e-10).unwrap();
        assert!(report.decoupled);
        assert_eq!(report.worst_norm, 0.0);
        assert!(
            check_feedback(&space, &HarmonicOperator::zero(4), &f, 1e-10)
                .unwrap()
                .decoupled
        );
    }

    #[test]
    fn equal_weight_coherence_decouples() {
        let model = dephasing_model(coherence(1, 2));
        let (space, report, verdict) =
            analyze_open_loop(&model, &ClosureOptions::default(), 1e-10).unwrap();
        assert_eq!(space.len(), 1);
        assert!(report.converged);
        assert!(verdict.decoupled);
        assert!(verdict.witness.is_none());
    }

    #[test]
    fn unequal_weight_coherence_fails_with_witness() {
        let model = dephasing_model(coherence(0, 3));
        let (space, _, verdict) =
            analyze_open_loop(&model, &ClosureOptions::default(), 1e-10).unwrap();
        assert!(!verdict.decoupled);
        let w = verdict.witness.unwrap();
        assert!(w.basis_index < space.len());
        assert!(w.norm > 0.1);
        // the system-only span cannot absorb [C, H_SB] either
        assert!(!analyze_feedback(&model, &space, 1e-10).unwrap().decoupled);
    }

    #[test]
    fn chain_operator_closed_forms() {
        let model = dephasing_model(coherence(0, 3))
            .with_control(pauli_string("XI").unwrap())
            .unwrap();
        let c = model.observable_joint();
        let g1 = model.control_joint(0).unwrap().generator();
        let gi = model.interaction().scale(C64::new(0.0, -1.0));
        let expected = harmonic_commutator(&c.commutator_with(&g1).unwrap(), &gi).unwrap();
        let got =
            lie_chain_operator(&[ChainIndex::Interaction, ChainIndex::Control(0)], &model).unwrap();
        assert!(
            got.add_unchecked(&expected.scale(C64::new(-1.0, 0.0)))
                .norm()
                < 1e-12
        );
        assert!(matches!(
            lie_chain_operator(&[ChainIndex::Control(3)], &model),
            Err(Error::UnknownControl { index: 3, count: 1 })
        ));
        assert!(matches!(
            lie_chain_operator(&[], &model),
            Err(Error::EmptyChain)
        ));
    }

    #[test]
    fn drift_chain_vanishes_on_stationary_observable() {
        let model = dephasing_model(coherence(1, 2));
        let op = lie_chain_operator(&[ChainIndex::Drift], &model).unwrap();
        assert!(op.is_zero(1e-12));
    }

    #[test]
    fn oracle_matches_first_and_second_order() {
        let model = dephasing_model(coherence(0, 3))
            .with_control(pauli_string("XI").unwrap())
            .unwrap();
        let psi = random_state(12, 3);
        for chain in [
            vec![ChainIndex::Control(0)],
            vec![ChainIndex::Interaction, ChainIndex::Control(0)],
            vec![
                ChainIndex::Interaction,
                ChainIndex::Drift,
                ChainIndex::Control(0),
            ],
        ] {
            let exact = lie_chain_operator(&chain, &model)
                .unwrap()
                .eval(0.4)
                .expectation(&psi);
            let spec = LieChainSpec::new(chain.clone(), psi.clone(), 0.4).unwrap();
            let approx = lie_chain_oracle(&spec, &model, DEFAULT_ORACLE_STEP).unwrap();
            assert!(
                (exact - approx).norm() < 1e-6,
                "{chain:?}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn oracle_rejects_long_chains() {
        let model = dephasing_model(coherence(1, 2));
        let psi = random_state(12, 1);
        let spec = LieChainSpec::new(vec![ChainIndex::Drift; 5], psi, 0.0).unwrap();
        assert!(matches!(
            lie_chain_oracle(&spec, &model, 1e-3),
            Err(Error::ChainTooLong(5))
        ));
    }

    #[test]
    fn chain_enumeration() {
        let chains = interaction_terminated_chains(1, 3);
        assert_eq!(chains.len(), 1 + 2 + 4);
        assert!(chains.iter().all(|c| c[0] == ChainIndex::Interaction));
    }
}
