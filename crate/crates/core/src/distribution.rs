//! Iterated-commutator closure of an observable.
//!
//! Starting from `C(t)`, each stage first spans the powers of `ad` of every
//! control generator and then the powers of the drift derivation
//! `d/dt + ad_{-i H0}`, each applied to everything collected so far. Stages
//! repeat until one of them adds nothing, at which point the span is closed
//! under every control commutator and under the drift derivation.
//!
//! Because the drift derivation differentiates the harmonic time
//! coefficients, a closure that contains `cos(wt) I` also contains
//! `sin(wt) I`. The span over constant coefficients can therefore be larger
//! than the rank of the operators at a fixed time; both numbers are reported.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonic::{harmonic_derivation, HarmonicOperator};
use crate::linalg;
use crate::operator::{ComplexMatrix, HilbertFactorization, C64};
use crate::DEFAULT_RANK_TOL;

/// Orthonormal span of harmonic operators under
/// `<A, B> = sum over matched frequencies of tr(A_k^dagger B_k)`.
#[derive(Clone, Debug)]
pub struct OperatorSpace {
    dim: usize,
    basis: Vec<HarmonicOperator>,
    rank_tol: f64,
}

impl OperatorSpace {
    pub fn new(dim: usize, rank_tol: f64) -> Self {
        Self {
            dim,
            basis: Vec::new(),
            rank_tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis elements.
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[HarmonicOperator] {
        &self.basis
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Component of `a` orthogonal to the span (two Gram-Schmidt passes).
    pub fn residual(&self, a: &HarmonicOperator) -> HarmonicOperator {
        let mut r = a.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.inner(&r);
                if c.norm() > 0.0 {
                    r.sub_scaled_assign(c, b);
                }
            }
        }
        r.finish_in_place();
        r
    }

    pub fn residual_norm(&self, a: &HarmonicOperator) -> f64 {
        self.residual(a).norm()
    }

    pub fn project(&self, a: &HarmonicOperator) -> HarmonicOperator {
        let r = self.residual(a);
        a.axpy_neg(C64::new(1.0, 0.0), &r)
    }

    /// `a` lies in the span up to `rank_tol` relative to its norm.
    pub fn contains(&self, a: &HarmonicOperator) -> bool {
        self.contains_within(a, self.rank_tol)
    }

    pub fn contains_within(&self, a: &HarmonicOperator, rel_tol: f64) -> bool {
        let n = a.norm();
        n == 0.0 || self.residual_norm(a) <= rel_tol * n
    }

    /// Add the direction of `a` if it is new; returns the index of the new
    /// basis element.
    pub fn insert(&mut self, a: &HarmonicOperator) -> Result<Option<usize>> {
        if a.dim() != self.dim {
            return Err(Error::dim("operator space element", self.dim, a.dim()));
        }
        Ok(self.insert_unchecked(a))
    }

    fn insert_unchecked(&mut self, a: &HarmonicOperator) -> Option<usize> {
        let n = a.norm();
        if n == 0.0 {
            return None;
        }
        let r = self.residual(a);
        let rn = r.norm();
        if rn <= self.rank_tol * n {
            return None;
        }
        self.basis.push(r.scale(C64::new(1.0 / rn, 0.0)));
        Some(self.basis.len() - 1)
    }

    /// Largest entry of `G - I` for the Gram matrix `G` of the basis.
    pub fn gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.inner(b) - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Rank of `{T(t)}` at a fixed time, maximised over the given times.
    pub fn pointwise_rank(&self, times: &[f64], rel_tol: f64) -> usize {
        if self.basis.is_empty() {
            return 0;
        }
        times
            .iter()
            .map(|&t| {
                let cols: Vec<Vec<C64>> =
                    self.basis.iter().map(|b| b.eval(t).vectorize()).collect();
                linalg::rank(&linalg::columns(self.dim * self.dim, &cols), rel_tol)
            })
            .max()
            .unwrap_or(0)
    }

    /// Same span with every element lifted to the joint space.
    pub fn lift(&self, factorization: &HilbertFactorization) -> Result<Self> {
        let mut lifted = Self::new(factorization.total_dim(), self.rank_tol);
        for b in &self.basis {
            lifted.insert_unchecked(&b.lift(factorization)?);
        }
        Ok(lifted)
    }
}

/// Orthonormalize with modified Gram-Schmidt plus one re-orthogonalization
/// pass; inputs whose residual is below `rank_tol` times their norm are
/// discarded.
pub fn orthonormalize(ops: &[HarmonicOperator], rank_tol: f64) -> OperatorSpace {
    let dim = ops.first().map(|o| o.dim()).unwrap_or(0);
    let mut space = OperatorSpace::new(dim, rank_tol);
    for op in ops {
        assert_eq!(op.dim(), dim, "orthonormalize expects equal dimensions");
        space.insert_unchecked(op);
    }
    space
}

/// Which limit stopped a closure that did not converge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapHit {
    AdDepth,
    Stage,
    Dimension,
}

/// Termination limits. `None` selects the default for the problem size:
/// `d^2` per frequency bucket for the dimension, `2 d^2` for ad depth and
/// stage count.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClosureCaps {
    pub max_ad_depth: Option<usize>,
    pub max_stage: Option<usize>,
    pub max_dim: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ClosureOptions {
    pub caps: ClosureCaps,
    pub rank_tol: f64,
    /// Optional compression `X -> P X P` applied to every generated image
    /// (not to the seed). Used to confine truncated bosonic modes to the
    /// levels where the canonical commutation relation holds.
    pub compression: Option<ComplexMatrix>,
    /// Times at which the fixed-time rank is sampled.
    pub sample_times: Vec<f64>,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            caps: ClosureCaps::default(),
            rank_tol: DEFAULT_RANK_TOL,
            compression: None,
            sample_times: vec![0.3711, 1.2093, 2.6119],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureReport {
    pub converged: bool,
    /// Stages run.
    pub iterations: usize,
    /// Dimension of the span over constant coefficients.
    pub final_dimension: usize,
    /// Rank of the span at a fixed generic time.
    pub pointwise_rank: usize,
    pub per_stage_dims: Vec<usize>,
    pub cap_hit: Option<CapHit>,
    /// The observable was zero; the distribution is empty.
    pub degenerate: bool,
}

/// Build the closure of `c` under the control commutators and the drift
/// derivation.
pub fn generate_distribution(
    c: &HarmonicOperator,
    h0: &ComplexMatrix,
    controls: &[ComplexMatrix],
    options: &ClosureOptions,
) -> Result<(OperatorSpace, ClosureReport)> {
    let space = OperatorSpace::new(c.dim(), options.rank_tol);
    let mut seeded = space;
    seeded.insert(c)?;
    let degenerate = seeded.is_empty();
    let (space, mut report) = extend_distribution(seeded, h0, controls, options)?;
    report.degenerate = degenerate;
    Ok((space, report))
}

/// Continue the closure from an existing space.
pub fn extend_distribution(
    mut space: OperatorSpace,
    h0: &ComplexMatrix,
    controls: &[ComplexMatrix],
    options: &ClosureOptions,
) -> Result<(OperatorSpace, ClosureReport)> {
    let dim = space.dim();
    if h0.dim() != dim {
        return Err(Error::dim("drift Hamiltonian", dim, h0.dim()));
    }
    for (i, h) in controls.iter().enumerate() {
        if h.dim() != dim {
            return Err(Error::dim(
                format!("control Hamiltonian {}", i + 1),
                dim,
                h.dim(),
            ));
        }
    }
    if let Some(p) = &options.compression {
        if p.dim() != dim {
            return Err(Error::dim("compression", dim, p.dim()));
        }
    }

    let mut buckets: Vec<crate::harmonic::Frequency> = Vec::new();
    for b in space.basis() {
        for f in b.frequencies() {
            if !buckets.iter().any(|g| g.matches(&f, b.freq_tol())) {
                buckets.push(f);
            }
        }
    }
    let d2 = dim * dim;
    let max_dim = options.caps.max_dim.unwrap_or(d2 * buckets.len().max(1));
    let max_ad_depth = options.caps.max_ad_depth.unwrap_or(2 * d2).max(1);
    let max_stage = options.caps.max_stage.unwrap_or(2 * d2).max(1);

    let generators: Vec<ComplexMatrix> = controls.iter().map(|h| h.generator()).collect();
    let compress = |op: HarmonicOperator| match &options.compression {
        Some(p) => op.compress(p),
        None => op,
    };

    let mut report = ClosureReport {
        converged: false,
        iterations: 0,
        final_dimension: space.len(),
        pointwise_rank: 0,
        per_stage_dims: Vec::new(),
        cap_hit: None,
        degenerate: false,
    };

    if space.is_empty() {
        report.converged = true;
        return Ok((space, report));
    }

    // Each phase maps the whole current span, then keeps mapping only the
    // newly found directions until nothing new appears or the depth cap.
    enum Map<'a> {
        Ad(&'a ComplexMatrix),
        Drift,
    }
    let apply = |m: &Map<'_>, op: &HarmonicOperator| -> HarmonicOperator {
        let image = match m {
            Map::Ad(g) => op.commutator_with(g).expect("dimensions checked"),
            Map::Drift => harmonic_derivation(op, h0).expect("dimensions checked"),
        };
        compress(image)
    };

    'stages: for _ in 0..max_stage {
        report.iterations += 1;
        let start = space.len();
        let maps: Vec<Map<'_>> = generators
            .iter()
            .map(Map::Ad)
            .chain(std::iter::once(Map::Drift))
            .collect();
        for map in &maps {
            let mut frontier: Vec<HarmonicOperator> = space.basis().to_vec();
            for depth in 1..=max_ad_depth {
                let images: Vec<HarmonicOperator> =
                    frontier.par_iter().map(|op| apply(map, op)).collect();
                let mut fresh = Vec::new();
                for image in &images {
                    let n = image.norm();
                    if n == 0.0 || space.residual_norm(image) <= space.rank_tol * n {
                        continue;
                    }
                    if space.len() >= max_dim {
                        report.cap_hit = Some(CapHit::Dimension);
                        break 'stages;
                    }
                    if let Some(k) = space.insert_unchecked(image) {
                        fresh.push(space.basis()[k].clone());
                    }
                }
                if fresh.is_empty() {
                    break;
                }
                if depth == max_ad_depth {
                    report.cap_hit = Some(CapHit::AdDepth);
                }
                frontier = fresh;
            }
        }
        report.per_stage_dims.push(space.len());
        if space.len() == start {
            report.converged = true;
            report.cap_hit = None;
            break;
        }
    }
    if !report.converged && report.cap_hit.is_none() {
        report.cap_hit = Some(CapHit::Stage);
    }
    report.final_dimension = space.len();
    report.pointwise_rank = space.pointwise_rank(&options.sample_times, options.rank_tol);
    Ok((space, report))
}
