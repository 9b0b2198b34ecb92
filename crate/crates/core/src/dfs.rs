//! Inverse problems: which observables are protected from a given
//! interaction, and which interactions leave a given observable alone.
//!
//! Operators are handled as column-major vectors, so `ad_H(X) = [X, H]`
//! becomes the matrix `H^T (x) I - I (x) H`.

use nalgebra::DMatrix;

use crate::distribution::{generate_distribution, orthonormalize, ClosureOptions, OperatorSpace};
use crate::error::{Error, Result};
use crate::harmonic::HarmonicOperator;
use crate::invariance::ChainIndex;
use crate::linalg;
use crate::operator::{commutator_unchecked, ket_bra, ComplexMatrix, HilbertFactorization, C64};

/// Superoperator of `X -> [X, H]`.
fn ad_superoperator(h: &ComplexMatrix) -> DMatrix<C64> {
    let d = h.dim();
    let id = DMatrix::<C64>::identity(d, d);
    h.as_matrix().transpose().kronecker(&id) - id.kronecker(h.as_matrix())
}

fn stack(blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

fn column_matrix(q: &DMatrix<C64>, k: usize, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_vectorized(d, q.column(k).as_slice()).expect("column has d*d entries")
}

/// First word (in breadth-first order) whose image of an operator fails to
/// commute with an interaction factor.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageWitness {
    /// Fields in the order they act: `[Control(0)]` means `[M, H_1]`.
    pub word: Vec<ChainIndex>,
    pub factor_index: usize,
    /// `|| [w(M), S_k] ||`.
    pub norm: f64,
}

/// Largest space of system observables whose every drift/control
/// commutator image commutes with all interaction factors.
#[derive(Clone, Debug)]
pub struct InvariantObservableSpace {
    basis: Vec<ComplexMatrix>,
    coordinate_pattern: Option<Vec<(usize, usize)>>,
    iterations: usize,
    tol: f64,
    h0: ComplexMatrix,
    controls: Vec<ComplexMatrix>,
    factors: Vec<ComplexMatrix>,
}

impl InvariantObservableSpace {
    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Orthonormal under the Hilbert-Schmidt inner product.
    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    /// `(i, j)` pairs of the basis `|i><j|`, when every generator is
    /// diagonal and the space is spanned by matrix units.
    pub fn coordinate_pattern(&self) -> Option<&[(usize, usize)]> {
        self.coordinate_pattern.as_deref()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn controls(&self) -> &[ComplexMatrix] {
        &self.controls
    }

    pub fn factors(&self) -> &[ComplexMatrix] {
        &self.factors
    }

    /// Frobenius norm of the part of `m` outside the space.
    pub fn residual(&self, m: &ComplexMatrix) -> f64 {
        let mut r = m.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.hs_inner(&r);
                r.axpy_assign(-c, b);
            }
        }
        r.frobenius_norm()
    }

    pub fn contains(&self, m: &ComplexMatrix) -> bool {
        self.residual(m) <= self.tol * m.frobenius_norm().max(1.0)
    }

    /// Breadth-first search over commutator words for an image of `m` that
    /// does not commute with some factor. Images already in the span of
    /// earlier ones are not expanded, so the search is exhaustive once it
    /// has visited `dim^2` independent images.
    pub fn leakage_witness(&self, m: &ComplexMatrix) -> Option<LeakageWitness> {
        let d = self.dim();
        if m.dim() != d {
            return None;
        }
        let threshold = self.tol * m.frobenius_norm().max(1.0);
        let fields: Vec<(ChainIndex, &ComplexMatrix)> =
            std::iter::once((ChainIndex::Drift, &self.h0))
                .chain(
                    self.controls
                        .iter()
                        .enumerate()
                        .map(|(i, h)| (ChainIndex::Control(i), h)),
                )
                .collect();
        let mut seen: Vec<ComplexMatrix> = Vec::new();
        let mut queue = std::collections::VecDeque::from([(Vec::new(), m.clone())]);
        while let Some((word, image)) = queue.pop_front() {
            // keep only images independent of what was already explored
            let mut r = image.clone();
            for _ in 0..2 {
                for b in &seen {
                    let c = b.hs_inner(&r);
                    r.axpy_assign(-c, b);
                }
            }
            let rn = r.frobenius_norm();
            if rn <= threshold {
                continue;
            }
            seen.push(r.scale_real(1.0 / rn));
            for (k, s) in self.factors.iter().enumerate() {
                let norm = commutator_unchecked(&image, s).frobenius_norm();
                if norm > threshold {
                    return Some(LeakageWitness {
                        word,
                        factor_index: k,
                        norm,
                    });
                }
            }
            if seen.len() >= d * d {
                continue;
            }
            for (index, h) in &fields {
                let mut w = word.clone();
                w.push(*index);
                queue.push_back((w, commutator_unchecked(&image, h)));
            }
        }
        None
    }
}

fn is_diagonal(m: &ComplexMatrix, tol: f64) -> bool {
    let d = m.dim();
    (0..d).all(|i| (0..d).all(|j| i == j || m.get(i, j).norm() <= tol))
}

/// Fixed-point iteration `V_{n+1} = {v in V_n : ad_H v in V_n}` for
/// `H in {H0, H_i}`, started from the common kernel of `ad_{S_k}`.
pub fn find_invariant_observables(
    h0: &ComplexMatrix,
    controls: &[ComplexMatrix],
    factors: &[ComplexMatrix],
    tol: f64,
) -> Result<InvariantObservableSpace> {
    if factors.is_empty() {
        return Err(Error::MissingDecomposition);
    }
    let d = h0.dim();
    for (i, h) in controls.iter().enumerate() {
        if h.dim() != d {
            return Err(Error::dim(
                format!("control Hamiltonian {}", i + 1),
                d,
                h.dim(),
            ));
        }
    }
    for (k, s) in factors.iter().enumerate() {
        if s.dim() != d {
            return Err(Error::dim(
                format!("interaction factor {}", k + 1),
                d,
                s.dim(),
            ));
        }
    }
    let n = d * d;

    let kernel_blocks: Vec<DMatrix<C64>> = factors.iter().map(ad_superoperator).collect();
    let mut q = linalg::null_space(&stack(&kernel_blocks), tol);
    let ads: Vec<DMatrix<C64>> = std::iter::once(h0)
        .chain(controls.iter())
        .map(ad_superoperator)
        .collect();

    let mut iterations = 0;
    while q.ncols() > 0 && iterations <= n {
        iterations += 1;
        let outside = DMatrix::<C64>::identity(n, n) - &q * q.adjoint();
        let blocks: Vec<DMatrix<C64>> = ads.iter().map(|a| &outside * (a * &q)).collect();
        let keep = linalg::null_space(&stack(&blocks), tol);
        if keep.ncols() == q.ncols() {
            break;
        }
        let k = keep.ncols();
        if k == 0 {
            q = DMatrix::zeros(n, 0);
            break;
        }
        // restore orthonormality lost to rounding
        q = (&q * keep).qr().q().columns(0, k).into_owned();
    }

    let diagonal = std::iter::once(h0)
        .chain(controls)
        .chain(factors)
        .all(|m| is_diagonal(m, tol));
    let mut coordinate_pattern = None;
    let basis = if diagonal {
        let mut pattern = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let row_norm: f64 = q.row(i + j * d).iter().map(|x| x.norm_sqr()).sum();
                if row_norm > 0.5 {
                    pattern.push((i, j));
                }
            }
        }
        pattern.sort_unstable();
        if pattern.len() == q.ncols() {
            let units = pattern
                .iter()
                .map(|&(i, j)| ket_bra(i, j, d))
                .collect::<Result<Vec<_>>>()?;
            coordinate_pattern = Some(pattern);
            units
        } else {
            (0..q.ncols()).map(|k| column_matrix(&q, k, d)).collect()
        }
    } else {
        (0..q.ncols()).map(|k| column_matrix(&q, k, d)).collect()
    };

    Ok(InvariantObservableSpace {
        basis,
        coordinate_pattern,
        iterations,
        tol,
        h0: h0.clone(),
        controls: controls.to_vec(),
        factors: factors.to_vec(),
    })
}

/// Commutant (within the operators on `dim`) of every coefficient matrix of
/// every basis element, as orthonormal matrices.
fn commutant(space: &OperatorSpace, tol: f64) -> Vec<ComplexMatrix> {
    let d = space.dim();
    let blocks: Vec<DMatrix<C64>> = space
        .basis()
        .iter()
        .flat_map(|b| b.terms().iter().map(|t| ad_superoperator(&t.matrix)))
        .collect();
    if blocks.is_empty() {
        let mut all = Vec::with_capacity(d * d);
        for j in 0..d {
            for i in 0..d {
                all.push(ket_bra(i, j, d).expect("in range"));
            }
        }
        return all;
    }
    let q = linalg::null_space(&stack(&blocks), tol);
    (0..q.ncols()).map(|k| column_matrix(&q, k, d)).collect()
}

/// Every joint-space `H_tau` commuting with the whole distribution generated
/// by `c`. A system-level distribution is lifted as `T (x) I_e`, so its
/// commutant is the system commutant tensored with all environment
/// operators.
pub fn find_invariant_interactions(
    c: &HarmonicOperator,
    h0: &ComplexMatrix,
    controls: &[ComplexMatrix],
    factorization: &HilbertFactorization,
    options: &ClosureOptions,
    tol: f64,
) -> Result<OperatorSpace> {
    let (dist, _) = generate_distribution(c, h0, controls, options)?;
    let d_e = factorization.env_dim();
    let matrices: Vec<ComplexMatrix> = if dist.dim() == factorization.total_dim() {
        commutant(&dist, tol)
    } else if dist.dim() == factorization.system_dim() {
        let system = commutant(&dist, tol);
        let mut out = Vec::with_capacity(system.len() * d_e * d_e);
        for m in &system {
            for a in 0..d_e {
                for b in 0..d_e {
                    out.push(m.kron(&ket_bra(a, b, d_e)?));
                }
            }
        }
        out
    } else {
        return Err(Error::dim(
            "observable (system or joint space)",
            factorization.system_dim(),
            dist.dim(),
        ));
    };
    let ops: Vec<HarmonicOperator> = matrices
        .into_iter()
        .map(HarmonicOperator::constant)
        .collect();
    Ok(orthonormalize(&ops, options.rank_tol))
}

/// Largest relative residual of `[H_tau, H]` against `space`, over basis
/// elements `H_tau` and `H` in the drift and controls.
pub fn bracket_closure_residual(
    space: &OperatorSpace,
    h0: &ComplexMatrix,
    controls: &[ComplexMatrix],
) -> Result<f64> {
    let d = space.dim();
    let mut worst: f64 = 0.0;
    for h in std::iter::once(h0).chain(controls) {
        if h.dim() != d {
            return Err(Error::dim("bracket closure generator", d, h.dim()));
        }
        for tau in space.basis() {
            let r = tau.commutator_with(h)?;
            worst = worst.max(space.residual_norm(&r) / r.norm().max(1.0));
        }
    }
    Ok(worst)
}

/// Whether `space` is closed under brackets with the drift and every
/// control, within `tol`.
pub fn verify_bracket_closure(
    space: &OperatorSpace,
    h0: &ComplexMatrix,
    controls: &[ComplexMatrix],
    tol: f64,
) -> Result<bool> {
    Ok(bracket_closure_residual(space, h0, controls)? <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{boson_annihilate, hamming_weight, pauli_string};

    fn collective_z(n: usize) -> ComplexMatrix {
        let mut s = ComplexMatrix::zeros(1 << n);
        for q in 0..n {
            let word: String = (0..n).map(|k| if k == q { 'Z' } else { 'I' }).collect();
            s = &s + &pauli_string(&word).unwrap();
        }
        s
    }

    #[test]
    fn two_qubit_dephasing_pattern() {
        let s = collective_z(2);
        let v = find_invariant_observables(&s, &[], std::slice::from_ref(&s), 1e-10).unwrap();
        assert_eq!(v.len(), 6);
        let pattern = v.coordinate_pattern().unwrap();
        for &(i, j) in pattern {
            assert_eq!(hamming_weight(i), hamming_weight(j));
        }
        assert!(v.contains(&ket_bra(1, 2, 4).unwrap()));
        assert!(!v.contains(&ket_bra(0, 3, 4).unwrap()));
    }

    #[test]
    fn flip_controls_collapse_to_identity() {
        let s = collective_z(2);
        let controls = [pauli_string("XI").unwrap(), pauli_string("IX").unwrap()];
        let v = find_invariant_observables(&s, &controls, std::slice::from_ref(&s), 1e-10).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.contains(&ComplexMatrix::identity(4)));
        assert!(v.coordinate_pattern().is_none());
        let c = ket_bra(1, 2, 4).unwrap();
        let w = v.leakage_witness(&c).unwrap();
        assert_eq!(w.word.len(), 1);
        assert!(matches!(w.word[0], ChainIndex::Control(_)));
        assert!(w.norm > 0.1);
    }

    #[test]
    fn members_have_no_witness() {
        let s = collective_z(2);
        let v = find_invariant_observables(&s, &[], std::slice::from_ref(&s), 1e-10).unwrap();
        assert!(v.leakage_witness(&ket_bra(1, 2, 4).unwrap()).is_none());
        let w = v.leakage_witness(&ket_bra(0, 3, 4).unwrap()).unwrap();
        assert!(w.word.is_empty());
    }

    #[test]
    fn missing_decomposition_is_an_error() {
        assert!(matches!(
            find_invariant_observables(&collective_z(2), &[], &[], 1e-10),
            Err(Error::MissingDecomposition)
        ));
    }

    #[test]
    fn identity_commutant_is_everything() {
        let f = HilbertFactorization::new(2, 2).unwrap();
        let space = find_invariant_interactions(
            &HarmonicOperator::constant(ComplexMatrix::identity(2)),
            &pauli_string("Z").unwrap(),
            &[],
            &f,
            &ClosureOptions::default(),
            1e-10,
        )
        .unwrap();
        assert_eq!(space.len(), 16);
    }

    #[test]
    fn full_algebra_commutant_is_scalar() {
        let f = HilbertFactorization::new(2, 1).unwrap();
        let space = find_invariant_interactions(
            &HarmonicOperator::constant(pauli_string("Z").unwrap()),
            &pauli_string("Z").unwrap(),
            &[pauli_string("X").unwrap()],
            &f,
            &ClosureOptions::default(),
            1e-10,
        )
        .unwrap();
        assert_eq!(space.len(), 1);
        assert!(space.contains(&HarmonicOperator::constant(ComplexMatrix::identity(2))));
        assert!(verify_bracket_closure(
            &space,
            &pauli_string("Z").unwrap(),
            &[pauli_string("X").unwrap()],
            1e-10
        )
        .unwrap());
    }

    #[test]
    fn dephasing_commutant_holds_interaction() {
        let f = HilbertFactorization::new(4, 3).unwrap();
        let s = collective_z(2);
        let b = boson_annihilate(3).unwrap();
        let space = find_invariant_interactions(
            &HarmonicOperator::constant(ket_bra(1, 2, 4).unwrap()),
            &s,
            &[],
            &f,
            &ClosureOptions::default(),
            1e-10,
        )
        .unwrap();
        let h_sb = f.product(&s, &(&b + &b.adjoint())).unwrap();
        assert!(space.contains(&HarmonicOperator::constant(h_sb)));
        let drift = &f.embed_system(&s).unwrap() + &f.embed_env(&(&b.adjoint() * &b)).unwrap();
        assert!(verify_bracket_closure(&space, &drift, &[], 1e-10).unwrap());
    }
}
