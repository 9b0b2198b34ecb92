//! Decoupling analysis for measured outputs of open quantum control systems.
//!
//! The crate answers one question: does the expectation value
//! `y(t) = <psi|C(t)|psi>` of an observable depend on a given system-bath
//! interaction `H_SB`? It does so three ways:
//!
//! * algebraically, by closing the observable under the commutator action of
//!   the control Hamiltonians and the drift derivation ([`distribution`]) and
//!   testing the closure against `H_SB` ([`invariance`]);
//! * pointwise, through chained Lie derivatives of the output and an
//!   independent flow-composition finite-difference oracle;
//! * dynamically, by propagating the joint system-bath wavefunction with and
//!   without the interaction ([`dynamics`]).
//!
//! The inverse problem (which observables are protected, and which
//! interactions leave a given observable alone) lives in [`dfs`].
//!
//! All Hamiltonians are stored Hermitian. Wherever a Hamiltonian acts as a
//! vector field (commutator chains, the drift derivation, propagation) the
//! generator `-iH` is used.

pub mod dfs;
pub mod distribution;
pub mod dynamics;
mod error;
pub mod fixtures;
pub mod harmonic;
pub mod invariance;
pub mod linalg;
pub mod operator;

pub use dfs::{
    find_invariant_interactions, find_invariant_observables, verify_bracket_closure,
    InvariantObservableSpace, LeakageWitness,
};
pub use distribution::{
    extend_distribution, generate_distribution, orthonormalize, CapHit, ClosureCaps,
    ClosureOptions, ClosureReport, OperatorSpace,
};
pub use dynamics::{
    invariance_experiment, propagate, AffineFeedback, ControlLaw, ExperimentReport, Schedule,
    SystemModel, TraceRecord,
};
pub use error::{Error, Result};
pub use harmonic::{harmonic_commutator, harmonic_derivation, Frequency, HarmonicOperator};
pub use invariance::{
    check_feedback, check_open_loop, lie_chain_operator, lie_chain_oracle, ChainIndex,
    LieChainSpec, ViolationReport,
};
pub use operator::{
    boson_annihilate, commutator, ket_bra, pauli_string, tensor, ComplexMatrix,
    HilbertFactorization, C64,
};

/// Default absolute Frobenius tolerance for "this operator is zero".
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;
/// Default tolerance for merging harmonic frequencies, in rad/time.
pub const DEFAULT_FREQ_TOL: f64 = 1e-9;
/// Default relative tolerance for rank decisions in operator spans.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
