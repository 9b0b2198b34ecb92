//! Joint system-bath wavefunction propagation and output-invariance
//! experiments.
//!
//! Each step applies `exp(-i H(t_mid) dt)` with the total Hamiltonian sampled
//! at the step midpoint (exponential midpoint rule, second order for smooth
//! time dependence, exact for piecewise-constant Hamiltonians whose breaks
//! fall on the grid).

use std::io::Write;

use rayon::prelude::*;

use crate::distribution::{ClosureOptions, ClosureReport};
use crate::error::{Error, Result};
use crate::harmonic::HarmonicOperator;
use crate::invariance::{analyze_open_loop, ViolationReport};
use crate::operator::{ComplexMatrix, HilbertFactorization, C64};

/// Hermiticity tolerance applied when a model is assembled.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Largest accepted `| ||psi|| - 1 |` during propagation.
pub const NORM_DEFECT_BOUND: f64 = 1e-9;
/// Interaction-on/off deviations at or below this count as "no effect".
pub const SIMULATION_THRESHOLD: f64 = 10.0 * NORM_DEFECT_BOUND;
/// Top-Fock-level population above which the bath truncation is suspect.
pub const TRUNCATION_WARNING: f64 = 1e-6;

/// Piecewise-constant control values; `values[k]` applies from `times[k]`
/// until `times[k + 1]` (the last piece extends forever, and the first piece
/// also covers earlier times).
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Schedule {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidTimeGrid(format!(
                "schedule needs one value row per breakpoint ({} times, {} rows)",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTimeGrid(
                "schedule breakpoints must increase".into(),
            ));
        }
        let width = values[0].len();
        if values.iter().any(|v| v.len() != width) {
            return Err(Error::InvalidTimeGrid(
                "schedule rows differ in length".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn constant(values: Vec<f64>) -> Self {
        Self {
            times: vec![0.0],
            values: vec![values],
        }
    }

    pub fn width(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        &self.values[k]
    }
}

/// `u = alpha(y) + beta(y) v(t)` with
/// `alpha(y) = alpha0 + A y` and `beta(y) = B0 + sum_k y_k B_k`,
/// where `y_k = Re <psi|O_k|psi>` are the declared feedback outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFeedback {
    pub alpha0: Vec<f64>,
    /// `r x k`.
    pub alpha: Vec<Vec<f64>>,
    /// `r x m`.
    pub beta0: Vec<Vec<f64>>,
    /// One `r x m` slope per output; may be empty.
    pub beta_slopes: Vec<Vec<Vec<f64>>>,
    /// Reference input `v(t)` of width `m`.
    pub reference: Schedule,
}

impl AffineFeedback {
    fn validate(&self, controls: usize, outputs: usize) -> Result<()> {
        if self.alpha0.len() != controls {
            return Err(Error::ControlCount {
                expected: controls,
                found: self.alpha0.len(),
            });
        }
        if self.alpha.len() != controls || self.beta0.len() != controls {
            return Err(Error::ControlCount {
                expected: controls,
                found: self.alpha.len().min(self.beta0.len()),
            });
        }
        for row in &self.alpha {
            if row.len() > outputs {
                return Err(Error::UndefinedOutput {
                    index: row.len() - 1,
                    count: outputs,
                });
            }
        }
        if self.beta_slopes.len() > outputs {
            return Err(Error::UndefinedOutput {
                index: self.beta_slopes.len() - 1,
                count: outputs,
            });
        }
        let m = self.reference.width();
        let bad_width = self
            .beta0
            .iter()
            .chain(self.beta_slopes.iter().flatten())
            .any(|row| row.len() != m);
        if bad_width || self.beta_slopes.iter().any(|b| b.len() != controls) {
            return Err(Error::InvalidTimeGrid(format!(
                "feedback gain shapes must be {controls} x {m}"
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64, outputs: &[f64]) -> Vec<f64> {
        let v = self.reference.at(t);
        (0..self.alpha0.len())
            .map(|i| {
                let alpha = self.alpha0[i]
                    + self.alpha[i]
                        .iter()
                        .zip(outputs)
                        .map(|(a, y)| a * y)
                        .sum::<f64>();
                let beta_v: f64 = (0..v.len())
                    .map(|j| {
                        let b = self.beta0[i][j]
                            + self
                                .beta_slopes
                                .iter()
                                .zip(outputs)
                                .map(|(slope, y)| slope[i][j] * y)
                                .sum::<f64>();
                        b * v[j]
                    })
                    .sum();
                alpha + beta_v
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControlLaw {
    Schedule(Schedule),
    Feedback(AffineFeedback),
}

#[derive(Clone, Debug)]
struct Control {
    hamiltonian: ComplexMatrix,
    joint: ComplexMatrix,
    acts_on_joint: bool,
}

/// Drift, controls, interaction and observable of a system coupled to an
/// environment.
#[derive(Clone, Debug)]
pub struct SystemModel {
    factorization: HilbertFactorization,
    h0: ComplexMatrix,
    h_env: ComplexMatrix,
    controls: Vec<Control>,
    interaction: HarmonicOperator,
    interaction_factors: Option<Vec<(ComplexMatrix, ComplexMatrix)>>,
    observable: HarmonicOperator,
    feedback_outputs: Vec<HarmonicOperator>,
    control_law: ControlLaw,
    bath_state: Option<Vec<C64>>,
}

fn require_hermitian(name: &str, m: &ComplexMatrix) -> Result<()> {
    let dev = (m - &m.adjoint()).frobenius_norm();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(name.to_string(), dev));
    }
    Ok(())
}

impl SystemModel {
    /// A model with no controls and no interaction.
    pub fn new(
        factorization: HilbertFactorization,
        h0: ComplexMatrix,
        h_env: ComplexMatrix,
        observable: HarmonicOperator,
    ) -> Result<Self> {
        if h0.dim() != factorization.system_dim() {
            return Err(Error::dim(
                "drift Hamiltonian",
                factorization.system_dim(),
                h0.dim(),
            ));
        }
        if h_env.dim() != factorization.env_dim() {
            return Err(Error::dim(
                "environment Hamiltonian",
                factorization.env_dim(),
                h_env.dim(),
            ));
        }
        require_hermitian("drift Hamiltonian", &h0)?;
        require_hermitian("environment Hamiltonian", &h_env)?;
        let observable = check_observable(&factorization, observable, "observable")?;
        Ok(Self {
            factorization,
            h0,
            h_env,
            controls: Vec::new(),
            interaction: HarmonicOperator::zero(factorization.total_dim()),
            interaction_factors: None,
            observable,
            feedback_outputs: Vec::new(),
            control_law: ControlLaw::Schedule(Schedule::constant(Vec::new())),
            bath_state: None,
        })
    }

    /// Append a control Hamiltonian acting on the system (or on the joint
    /// space, when it has the joint dimension). The control law is reset to
    /// `u = 0` if its width no longer matches.
    pub fn with_control(mut self, h: ComplexMatrix) -> Result<Self> {
        let name = format!("control Hamiltonian {}", self.controls.len() + 1);
        require_hermitian(&name, &h)?;
        let acts_on_joint =
            h.dim() == self.factorization.total_dim() && h.dim() != self.factorization.system_dim();
        let joint = self.factorization.lift(&h)?;
        self.controls.push(Control {
            hamiltonian: h,
            joint,
            acts_on_joint,
        });
        if let ControlLaw::Schedule(s) = &self.control_law {
            if s.width() != self.controls.len() {
                self.control_law =
                    ControlLaw::Schedule(Schedule::constant(vec![0.0; self.controls.len()]));
            }
        }
        Ok(self)
    }

    pub fn with_controls(self, hs: impl IntoIterator<Item = ComplexMatrix>) -> Result<Self> {
        hs.into_iter().try_fold(self, |m, h| m.with_control(h))
    }

    /// Joint-space interaction, possibly time dependent.
    pub fn with_interaction(mut self, h_sb: HarmonicOperator) -> Result<Self> {
        if h_sb.dim() != self.factorization.total_dim() {
            return Err(Error::dim(
                "interaction Hamiltonian",
                self.factorization.total_dim(),
                h_sb.dim(),
            ));
        }
        if !h_sb.is_hermitian(HERMITIAN_TOL) {
            let dev = h_sb
                .add_unchecked(&h_sb.adjoint().scale(C64::new(-1.0, 0.0)))
                .norm();
            return Err(Error::NotHermitian("interaction Hamiltonian".into(), dev));
        }
        self.interaction = h_sb;
        self.interaction_factors = None;
        Ok(self)
    }

    /// Interaction `sum_k S_k (x) B_k` with the factors kept for the inverse
    /// solvers.
    pub fn with_coupling(mut self, factors: Vec<(ComplexMatrix, ComplexMatrix)>) -> Result<Self> {
        let mut total = ComplexMatrix::zeros(self.factorization.total_dim());
        for (s, b) in &factors {
            total = &total + &self.factorization.product(s, b)?;
        }
        self = self.with_interaction(HarmonicOperator::constant(total))?;
        self.interaction_factors = Some(factors);
        Ok(self)
    }

    pub fn with_feedback_outputs(mut self, outputs: Vec<HarmonicOperator>) -> Result<Self> {
        self.feedback_outputs = outputs
            .into_iter()
            .map(|o| check_observable(&self.factorization, o, "feedback output"))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn with_control_law(mut self, law: ControlLaw) -> Result<Self> {
        match &law {
            ControlLaw::Schedule(s) => {
                if s.width() != self.controls.len() {
                    return Err(Error::ControlCount {
                        expected: self.controls.len(),
                        found: s.width(),
                    });
                }
            }
            ControlLaw::Feedback(f) => {
                f.validate(self.controls.len(), self.feedback_outputs.len())?
            }
        }
        self.control_law = law;
        Ok(self)
    }

    /// Initial environment state (defaults to the first basis state, the
    /// vacuum of a bosonic bath).
    pub fn with_bath_state(mut self, state: Vec<C64>) -> Result<Self> {
        if state.len() != self.factorization.env_dim() {
            return Err(Error::dim(
                "bath state",
                self.factorization.env_dim(),
                state.len(),
            ));
        }
        self.bath_state = Some(normalized(state)?);
        Ok(self)
    }

    pub fn factorization(&self) -> &HilbertFactorization {
        &self.factorization
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn h_env(&self) -> &ComplexMatrix {
        &self.h_env
    }

    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    pub fn control(&self, i: usize) -> Option<&ComplexMatrix> {
        self.controls.get(i).map(|c| &c.hamiltonian)
    }

    pub fn control_joint(&self, i: usize) -> Option<&ComplexMatrix> {
        self.controls.get(i).map(|c| &c.joint)
    }

    pub fn interaction(&self) -> &HarmonicOperator {
        &self.interaction
    }

    pub fn interaction_factors(&self) -> Option<&[(ComplexMatrix, ComplexMatrix)]> {
        self.interaction_factors.as_deref()
    }

    pub fn observable(&self) -> &HarmonicOperator {
        &self.observable
    }

    pub fn observable_joint(&self) -> HarmonicOperator {
        self.observable
            .lift(&self.factorization)
            .expect("observable dimension checked on construction")
    }

    pub fn control_law(&self) -> &ControlLaw {
        &self.control_law
    }

    /// `H0 (x) I + I (x) H_e`.
    pub fn drift_joint(&self) -> ComplexMatrix {
        &self
            .factorization
            .embed_system(&self.h0)
            .expect("checked on construction")
            + &self
                .factorization
                .embed_env(&self.h_env)
                .expect("checked on construction")
    }

    /// Observable, drift and controls on the smallest space that holds all
    /// of them: the system space unless the observable or a control acts on
    /// the joint space.
    pub fn closure_inputs(&self) -> (HarmonicOperator, ComplexMatrix, Vec<ComplexMatrix>) {
        let system_only = self.observable.dim() == self.factorization.system_dim()
            && self.controls.iter().all(|c| !c.acts_on_joint);
        if system_only {
            (
                self.observable.clone(),
                self.h0.clone(),
                self.controls
                    .iter()
                    .map(|c| c.hamiltonian.clone())
                    .collect(),
            )
        } else {
            (
                self.observable_joint(),
                self.drift_joint(),
                self.controls.iter().map(|c| c.joint.clone()).collect(),
            )
        }
    }

    /// Joint initial state `psi_s (x) bath`, or `psi` itself when it already
    /// has the joint dimension.
    pub fn initial_state(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let d_s = self.factorization.system_dim();
        let d_e = self.factorization.env_dim();
        if psi.len() == self.factorization.total_dim() {
            return normalized(psi.to_vec());
        }
        if psi.len() != d_s {
            return Err(Error::dim("initial state", d_s, psi.len()));
        }
        let bath = self.bath_state.clone().unwrap_or_else(|| {
            let mut v = vec![C64::new(0.0, 0.0); d_e];
            v[0] = C64::new(1.0, 0.0);
            v
        });
        let joint: Vec<C64> = psi
            .iter()
            .flat_map(|a| bath.iter().map(move |b| a * b))
            .collect();
        normalized(joint)
    }
}

fn check_observable(
    f: &HilbertFactorization,
    op: HarmonicOperator,
    what: &str,
) -> Result<HarmonicOperator> {
    if op.dim() != f.system_dim() && op.dim() != f.total_dim() {
        return Err(Error::dim(what.to_string(), f.system_dim(), op.dim()));
    }
    Ok(op)
}

fn normalized(mut v: Vec<C64>) -> Result<Vec<C64>> {
    let n = state_norm(&v);
    if n == 0.0 {
        return Err(Error::NotNormalized(0.0));
    }
    for x in &mut v {
        *x /= n;
    }
    Ok(v)
}

fn state_norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Output trace of one propagation run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub times: Vec<f64>,
    pub outputs: Vec<C64>,
    pub controls: Vec<Vec<f64>>,
    pub norm_defect: Vec<f64>,
    /// Largest population of the top environment level over the run.
    pub max_top_level_population: f64,
}

impl TraceRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_deviation(&self, other: &Self) -> f64 {
        self.outputs
            .iter()
            .zip(&other.outputs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,re_y,im_y,u_1..u_r,norm_defect`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let r = self.controls.first().map(|u| u.len()).unwrap_or(0);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = vec!["t".to_string(), "re_y".into(), "im_y".into()];
        header.extend((1..=r).map(|i| format!("u_{i}")));
        header.push("norm_defect".into());
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![
                self.times[k].to_string(),
                self.outputs[k].re.to_string(),
                self.outputs[k].im.to_string(),
            ];
            row.extend(self.controls[k].iter().map(|u| u.to_string()));
            row.push(self.norm_defect[k].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn top_level_population(psi: &[C64], d_e: usize) -> f64 {
    psi.iter()
        .skip(d_e - 1)
        .step_by(d_e)
        .map(|x| x.norm_sqr())
        .sum()
}

/// Propagate `psi0` over `t_span` and record `y(t) = <psi|C(t)|psi>` at
/// every grid point. The interaction is included only when
/// `interaction_on`.
pub fn propagate(
    model: &SystemModel,
    psi0: &[C64],
    t_span: (f64, f64),
    dt: f64,
    interaction_on: bool,
) -> Result<TraceRecord> {
    let f = model.factorization;
    let n_dim = f.total_dim();
    if psi0.len() != n_dim {
        return Err(Error::dim("joint state", n_dim, psi0.len()));
    }
    let n0 = state_norm(psi0);
    if (n0 - 1.0).abs() > NORM_DEFECT_BOUND {
        return Err(Error::NotNormalized(n0));
    }
    let (t0, t1) = t_span;
    if dt.is_nan() || dt <= 0.0 || !t0.is_finite() || !t1.is_finite() || t1 < t0 {
        return Err(Error::InvalidTimeGrid(format!(
            "need dt > 0 and t1 >= t0 (dt = {dt}, span = [{t0}, {t1}])"
        )));
    }
    let steps = if t1 == t0 {
        0
    } else {
        ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize
    };
    let h = if steps == 0 {
        0.0
    } else {
        (t1 - t0) / steps as f64
    };

    let observable = model.observable_joint();
    let outputs_joint: Vec<HarmonicOperator> = model
        .feedback_outputs
        .iter()
        .map(|o| o.lift(&f).expect("checked on construction"))
        .collect();
    let drift = model.drift_joint();
    let time_dependent_interaction = interaction_on && !model.interaction.is_constant();
    let static_interaction = if interaction_on {
        Some(model.interaction.constant_part())
    } else {
        None
    };

    let control_values = |t_mid: f64, t_start: f64, psi: &[C64]| -> Vec<f64> {
        match &model.control_law {
            ControlLaw::Schedule(s) => s.at(t_mid).to_vec(),
            ControlLaw::Feedback(fb) => {
                let ys: Vec<f64> = outputs_joint
                    .iter()
                    .map(|o| o.eval(t_start).expectation(psi).re)
                    .collect();
                fb.evaluate(t_start, &ys)
            }
        }
    };

    let mut psi = psi0.to_vec();
    let mut record = TraceRecord {
        times: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        norm_defect: Vec::with_capacity(steps + 1),
        max_top_level_population: 0.0,
    };
    let mut cached: Option<(Vec<f64>, ComplexMatrix)> = None;

    for k in 0..=steps {
        let t = if k == steps { t1 } else { t0 + k as f64 * h };
        let defect = (state_norm(&psi) - 1.0).abs();
        if defect > NORM_DEFECT_BOUND {
            return Err(Error::NormDefect { time: t, defect });
        }
        record.max_top_level_population = record
            .max_top_level_population
            .max(top_level_population(&psi, f.env_dim()));
        let t_mid = t + 0.5 * h;
        let u = control_values(if k == steps { t } else { t_mid }, t, &psi);
        record.times.push(t);
        record.outputs.push(observable.eval(t).expectation(&psi));
        record.norm_defect.push(defect);
        record.controls.push(u.clone());
        if k == steps {
            break;
        }

        let reuse = !time_dependent_interaction && matches!(&cached, Some((prev, _)) if *prev == u);
        if !reuse {
            let mut hamiltonian = drift.clone();
            for (c, ui) in model.controls.iter().zip(&u) {
                hamiltonian = &hamiltonian + &c.joint.scale_real(*ui);
            }
            if time_dependent_interaction {
                hamiltonian = &hamiltonian + &model.interaction.eval(t_mid);
            } else if let Some(hsb) = &static_interaction {
                hamiltonian = &hamiltonian + hsb;
            }
            cached = Some((u, hamiltonian.propagator(h)));
        }
        let (_, step) = cached.as_ref().expect("propagator computed above");
        psi = step.apply(&psi);
    }

    if record.max_top_level_population > TRUNCATION_WARNING {
        log::warn!(
            "top environment level reached population {:.3e}; bath truncation may be unreliable",
            record.max_top_level_population
        );
    }
    Ok(record)
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub closure: ClosureOptions,
    pub tol: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            closure: ClosureOptions::default(),
            tol: crate::DEFAULT_ZERO_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub max_deviation: f64,
    pub per_state_deviation: Vec<f64>,
    /// `(interaction on, interaction off)` per initial state.
    pub traces: Vec<(TraceRecord, TraceRecord)>,
    pub algebraic: ViolationReport,
    pub closure: ClosureReport,
    pub simulation_decoupled: bool,
    pub agreement: bool,
}

/// Run every initial state with and without the interaction and compare the
/// output traces with the algebraic open-loop verdict.
pub fn invariance_experiment(
    model: &SystemModel,
    initial_states: &[Vec<C64>],
    t_span: (f64, f64),
    dt: f64,
    options: &ExperimentOptions,
) -> Result<ExperimentReport> {
    if initial_states.is_empty() {
        return Err(Error::NoInitialStates);
    }
    let joint_states: Vec<Vec<C64>> = initial_states
        .iter()
        .map(|psi| model.initial_state(psi))
        .collect::<Result<_>>()?;
    let traces: Vec<(TraceRecord, TraceRecord)> = joint_states
        .par_iter()
        .map(|psi| -> Result<_> {
            let on = propagate(model, psi, t_span, dt, true)?;
            let off = propagate(model, psi, t_span, dt, false)?;
            Ok((on, off))
        })
        .collect::<Result<_>>()?;
    let per_state_deviation: Vec<f64> = traces
        .iter()
        .map(|(on, off)| on.max_deviation(off))
        .collect();
    let max_deviation = per_state_deviation.iter().cloned().fold(0.0, f64::max);
    let (_, closure, algebraic) = analyze_open_loop(model, &options.closure, options.tol)?;
    let simulation_decoupled = max_deviation <= SIMULATION_THRESHOLD;
    Ok(ExperimentReport {
        max_deviation,
        per_state_deviation,
        traces,
        agreement: algebraic.decoupled == simulation_decoupled,
        algebraic,
        closure,
        simulation_decoupled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{boson_annihilate, ket_bra, pauli_string};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn qubit_model(observable: ComplexMatrix) -> SystemModel {
        let f = HilbertFactorization::new(2, 2).unwrap();
        SystemModel::new(
            f,
            pauli_string("Z").unwrap().scale_real(0.5),
            pauli_string("Z").unwrap(),
            HarmonicOperator::constant(observable),
        )
        .unwrap()
    }

    #[test]
    fn identity_output_is_one() {
        let model = qubit_model(ComplexMatrix::identity(2))
            .with_coupling(vec![(
                pauli_string("X").unwrap(),
                pauli_string("X").unwrap(),
            )])
            .unwrap();
        let psi = model.initial_state(&[c(0.6), C64::new(0.0, 0.8)]).unwrap();
        let trace = propagate(&model, &psi, (0.0, 2.0), 0.01, true).unwrap();
        assert_eq!(trace.len(), 201);
        for y in &trace.outputs {
            assert!((y - c(1.0)).norm() < 1e-12);
        }
        assert!(trace.norm_defect.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn zero_span_records_single_point() {
        let model = qubit_model(pauli_string("X").unwrap());
        let psi = model.initial_state(&[c(1.0), c(1.0)]).unwrap();
        let trace = propagate(&model, &psi, (1.0, 1.0), 0.1, true).unwrap();
        assert_eq!(trace.times, vec![1.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = qubit_model(pauli_string("X").unwrap());
        let psi = model.initial_state(&[c(1.0), c(0.0)]).unwrap();
        assert!(matches!(
            propagate(&model, &psi, (0.0, 1.0), 0.0, true),
            Err(Error::InvalidTimeGrid(_))
        ));
        assert!(matches!(
            propagate(
                &model,
                &[c(2.0), c(0.0), c(0.0), c(0.0)],
                (0.0, 1.0),
                0.1,
                true
            ),
            Err(Error::NotNormalized(_))
        ));
        let non_hermitian = boson_annihilate(2).unwrap();
        assert!(matches!(
            qubit_model(pauli_string("X").unwrap()).with_control(non_hermitian),
            Err(Error::NotHermitian(..))
        ));
    }

    #[test]
    fn feedback_must_reference_declared_outputs() {
        let model = qubit_model(pauli_string("X").unwrap())
            .with_control(pauli_string("X").unwrap())
            .unwrap();
        let law = ControlLaw::Feedback(AffineFeedback {
            alpha0: vec![0.0],
            alpha: vec![vec![1.0]],
            beta0: vec![vec![0.0]],
            beta_slopes: vec![],
            reference: Schedule::constant(vec![0.0]),
        });
        assert!(matches!(
            model.clone().with_control_law(law.clone()),
            Err(Error::UndefinedOutput { index: 0, count: 0 })
        ));
        let model = model
            .with_feedback_outputs(vec![HarmonicOperator::constant(pauli_string("Z").unwrap())])
            .unwrap()
            .with_control_law(law)
            .unwrap();
        let psi = model.initial_state(&[c(1.0), c(0.0)]).unwrap();
        let trace = propagate(&model, &psi, (0.0, 0.5), 0.05, false).unwrap();
        // u = <Z> at the start of each step; starts in |0> so u(0) = 1
        assert!((trace.controls[0][0] - 1.0).abs() < 1e-12);
        assert!(trace.controls.iter().all(|u| u[0] <= 1.0 + 1e-12));
        assert!(trace.controls.last().unwrap()[0] < 1.0 - 1e-3);
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule::new(vec![0.0, 1.0], vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(s.at(-1.0), &[1.0]);
        assert_eq!(s.at(0.5), &[1.0]);
        assert_eq!(s.at(1.0), &[2.0]);
        assert!(Schedule::new(vec![1.0, 0.0], vec![vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn csv_layout() {
        let model = qubit_model(ket_bra(0, 1, 2).unwrap())
            .with_control(pauli_string("X").unwrap())
            .unwrap();
        let psi = model.initial_state(&[c(1.0), c(1.0)]).unwrap();
        let trace = propagate(&model, &psi, (0.0, 0.2), 0.1, false).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "t,re_y,im_y,u_1,norm_defect");
        assert_eq!(lines.len(), 5); // header, 3 rows, trailing empty
        assert!(!text.contains('\r'));
        assert_eq!(lines[1].split(',').count(), 5);
    }

    #[test]
    fn bath_truncation_population_is_tracked() {
        let f = HilbertFactorization::new(2, 3).unwrap();
        let b = boson_annihilate(3).unwrap();
        let model = SystemModel::new(
            f,
            pauli_string("Z").unwrap(),
            &b.adjoint() * &b,
            HarmonicOperator::constant(pauli_string("Z").unwrap()),
        )
        .unwrap()
        .with_coupling(vec![(pauli_string("Z").unwrap(), &b + &b.adjoint())])
        .unwrap();
        let psi = model.initial_state(&[c(1.0), c(0.0)]).unwrap();
        let on = propagate(&model, &psi, (0.0, 3.0), 0.01, true).unwrap();
        let off = propagate(&model, &psi, (0.0, 3.0), 0.01, false).unwrap();
        assert!(on.max_top_level_population > TRUNCATION_WARNING);
        assert_eq!(off.max_top_level_population, 0.0);
    }
}
