//! The `analyze`, `dfs`, `simulate` and `report` commands. Each returns the
//! report text and the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use decoq_core::dfs::bracket_closure_residual;
use decoq_core::dynamics::{invariance_experiment, ExperimentOptions};
use decoq_core::invariance::{
    analyze_feedback, analyze_open_loop, chain_scale, interaction_terminated_chains,
};
use decoq_core::{
    find_invariant_interactions, find_invariant_observables, lie_chain_operator, ChainIndex,
    ClosureOptions, ComplexMatrix, ViolationReport, C64, DEFAULT_ZERO_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::format::{ket_bra_label, sci, sig3};
use crate::scenario::{Built, Scenario};

pub const EXIT_DECOUPLED: i32 = 0;
pub const EXIT_COUPLED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_DISAGREEMENT: i32 = 3;

const DEFAULT_T_SPAN: (f64, f64) = (0.0, 10.0);
const DEFAULT_DT: f64 = 0.01;
const DEFAULT_CHAIN_STATES: usize = 20;
const DEFAULT_CHAIN_TIMES: usize = 5;
const DEFAULT_RANDOM_STATES: usize = 3;

/// Command-line overrides of scenario settings.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_dim: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

/// A loaded scenario with overrides applied.
pub struct Session {
    pub scenario: Scenario,
    pub built: Built,
    pub tol: f64,
    pub dt: f64,
    pub seed: u64,
    /// Directory that relative output paths resolve against.
    base: PathBuf,
    out: Option<PathBuf>,
}

impl Session {
    pub fn open(path: &Path, overrides: &Overrides) -> Result<Self> {
        let scenario = Scenario::load(path)?;
        let base = path.parent().map_or_else(PathBuf::new, Path::to_path_buf);
        Self::new(scenario, base, overrides)
    }

    pub fn new(scenario: Scenario, base: PathBuf, overrides: &Overrides) -> Result<Self> {
        let mut built = scenario.build()?;
        if let Some(m) = overrides.max_dim {
            built.closure.caps.max_dim = Some(m);
        }
        let tol = overrides
            .tol
            .or(scenario.analysis.tol)
            .unwrap_or(DEFAULT_ZERO_TOL);
        let dt = overrides.dt.or(scenario.analysis.dt).unwrap_or(DEFAULT_DT);
        if tol.is_nan() || tol <= 0.0 || dt.is_nan() || dt <= 0.0 {
            bail!("tolerance and step must be positive (tol {tol}, dt {dt})");
        }
        Ok(Self {
            tol,
            dt,
            seed: overrides.seed.unwrap_or(0),
            out: overrides.out.clone(),
            base,
            built,
            scenario,
        })
    }

    fn closure(&self) -> &ClosureOptions {
        &self.built.closure
    }

    /// Directory for trace files, if any was requested.
    fn trace_dir(&self) -> Option<PathBuf> {
        self.out.clone().or_else(|| {
            self.scenario
                .outputs
                .traces
                .as_ref()
                .map(|p| self.base.join(p))
        })
    }

    fn report_path(&self) -> Option<PathBuf> {
        let name = self.scenario.outputs.report.as_ref();
        match (&self.out, name) {
            (Some(dir), Some(n)) => Some(dir.join(Path::new(n).file_name().unwrap_or(n.as_ref()))),
            (Some(dir), None) => Some(dir.join("report.txt")),
            (None, Some(n)) => Some(self.base.join(n)),
            (None, None) => None,
        }
    }
}

fn verdict_word(decoupled: bool) -> &'static str {
    if decoupled {
        "decoupled"
    } else {
        "not decoupled"
    }
}

fn element_name(index: usize) -> String {
    // the closure is seeded with the observable itself
    if index == 0 {
        "C".into()
    } else {
        format!("T_{index}")
    }
}

fn chain_label(chain: &[ChainIndex]) -> String {
    let parts: Vec<String> = chain.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(","))
}

/// `c |i><j| + ...` for the significant entries, at most eight of them.
fn matrix_terms(m: &ComplexMatrix) -> String {
    const SHOWN: usize = 8;
    let d = m.dim();
    let largest = m.as_matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let entries: Vec<(usize, usize, C64)> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, m.get(i, j)))
        .filter(|(_, _, z)| z.norm() > 1e-9 * largest.max(1e-300))
        .collect();
    let mut parts: Vec<String> = entries
        .iter()
        .take(SHOWN)
        .map(|&(i, j, z)| format!("({}) {}", complex(z), ket_bra_label(i, j, d)))
        .collect();
    if entries.len() > SHOWN {
        parts.push(format!("... ({} more)", entries.len() - SHOWN));
    }
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}

fn complex(z: C64) -> String {
    if z.im.abs() <= 1e-12 * z.norm() {
        sig3(z.re)
    } else if z.re.abs() <= 1e-12 * z.norm() {
        format!("{}i", sig3(z.im))
    } else {
        format!(
            "{}{}{}i",
            sig3(z.re),
            if z.im < 0.0 { "-" } else { "+" },
            sig3(z.im.abs())
        )
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn describe_violation(out: &mut String, label: &str, report: &ViolationReport, relative: bool) {
    let measure = if relative {
        "worst relative residual"
    } else {
        "worst residual"
    };
    let _ = write!(
        out,
        "{label}: {}, {measure} {}",
        verdict_word(report.decoupled),
        sci(report.worst_norm)
    );
    if let (false, Some(w)) = (report.decoupled, &report.witness) {
        let _ = write!(
            out,
            "; [{}, H_SB] at frequency {} has norm {}",
            element_name(w.basis_index),
            w.frequency,
            sci(w.norm)
        );
    }
    out.push('\n');
}

pub fn analyze(session: &Session) -> Result<Outcome> {
    let model = &session.built.model;
    let tol = session.tol;
    let (space, closure, open_loop) = analyze_open_loop(model, session.closure(), tol)?;
    let feedback = analyze_feedback(model, &space, tol)?;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", session.scenario.name);
    let _ = writeln!(
        out,
        "distribution dim {}, open-loop {}",
        closure.final_dimension,
        verdict_word(open_loop.decoupled)
    );
    let stages: Vec<String> = closure
        .per_stage_dims
        .iter()
        .map(ToString::to_string)
        .collect();
    let _ = writeln!(
        out,
        "closure: {} after {} stages (dims {}), rank {} at fixed t{}",
        if closure.converged {
            "converged"
        } else {
            "stopped"
        },
        closure.iterations,
        stages.join(" -> "),
        closure.pointwise_rank,
        closure
            .cap_hit
            .map_or(String::new(), |c| format!(", cap hit: {c:?}")),
    );
    if closure.degenerate {
        out.push_str("observable is zero; the output is trivially decoupled\n");
    }
    describe_violation(&mut out, "open-loop condition", &open_loop, false);
    describe_violation(&mut out, "feedback condition", &feedback, true);

    // pointwise cross-check through interaction-terminated Lie chains
    let mut rng = ChaCha8Rng::seed_from_u64(session.seed);
    let n = model.factorization().total_dim();
    let n_states = session
        .scenario
        .analysis
        .chain_states
        .unwrap_or(DEFAULT_CHAIN_STATES);
    let n_times = session
        .scenario
        .analysis
        .chain_times
        .unwrap_or(DEFAULT_CHAIN_TIMES);
    let (t0, t1) = session
        .scenario
        .analysis
        .t_span
        .unwrap_or((0.0, std::f64::consts::TAU));
    let states: Vec<Vec<C64>> = (0..n_states).map(|_| random_state(&mut rng, n)).collect();
    let times: Vec<f64> = (0..n_times)
        .map(|_| {
            if t1 > t0 {
                rng.random_range(t0..t1)
            } else {
                t0
            }
        })
        .collect();
    let chains = interaction_terminated_chains(model.control_count(), 3);
    let mut worst: (f64, Option<Vec<ChainIndex>>) = (0.0, None);
    for chain in &chains {
        let op = lie_chain_operator(chain, model)?;
        let scale = chain_scale(chain, model)?.max(1.0);
        for &t in &times {
            let m = op.eval(t);
            for psi in &states {
                let v = m.expectation(psi).norm() / scale;
                if v > worst.0 {
                    worst = (v, Some(chain.clone()));
                }
            }
        }
    }
    let chains_vanish = worst.0 <= tol;
    let _ = write!(
        out,
        "Lie chains: {} chains x {} states x {} times, largest relative value {}",
        chains.len(),
        n_states,
        n_times,
        sci(worst.0)
    );
    if let (false, Some(c)) = (chains_vanish, &worst.1) {
        let _ = write!(out, " on {}", chain_label(c));
    }
    let _ = writeln!(
        out,
        ", {}",
        if chains_vanish == open_loop.decoupled {
            "consistent with the open-loop verdict"
        } else if open_loop.decoupled {
            "INCONSISTENT with the open-loop verdict"
        } else {
            "none nonzero at this depth"
        }
    );
    let code = if open_loop.decoupled {
        EXIT_DECOUPLED
    } else {
        EXIT_COUPLED
    };
    Ok(Outcome { text: out, code })
}

pub fn dfs(session: &Session) -> Result<Outcome> {
    let model = &session.built.model;
    let tol = session.tol;
    let factors: Vec<_> = model
        .interaction_factors()
        .context("dfs needs the interaction as `coupling` pairs")?
        .iter()
        .map(|(s, _)| s.clone())
        .collect();
    let controls: Vec<_> = (0..model.control_count())
        .map(|i| model.control(i).cloned())
        .collect::<Option<_>>()
        .context("dfs needs system-space controls")?;
    let observable = model.observable();
    if !observable.is_constant() || observable.dim() != model.factorization().system_dim() {
        bail!("dfs needs a constant observable on the system space");
    }
    let c = observable.constant_part();
    let v = find_invariant_observables(model.h0(), &controls, &factors, tol)?;
    let d = v.dim();
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", session.scenario.name);
    let _ = writeln!(
        out,
        "invariant observables: dim {} after {} iterations",
        v.len(),
        v.iterations()
    );
    match v.coordinate_pattern() {
        Some(pattern) => {
            let labels: Vec<String> = pattern
                .iter()
                .map(|&(i, j)| ket_bra_label(i, j, d))
                .collect();
            for row in labels.chunks(8) {
                let _ = writeln!(out, "  {}", row.join(" "));
            }
        }
        None => {
            for (k, b) in v.basis().iter().enumerate() {
                let _ = writeln!(out, "  T_{}: {}", k + 1, matrix_terms(b));
            }
        }
    }
    let contained = v.contains(&c);
    if contained {
        let _ = writeln!(
            out,
            "observable C: contained (residual {})",
            sci(v.residual(&c))
        );
    } else {
        let _ = write!(
            out,
            "observable C: not contained (residual {})",
            sci(v.residual(&c))
        );
        if let Some(w) = v.leakage_witness(&c) {
            let mut term = "C".to_string();
            for index in &w.word {
                let field = match index {
                    ChainIndex::Drift => "H_0".to_string(),
                    ChainIndex::Control(i) => format!("H_{}", i + 1),
                    ChainIndex::Interaction => "H_SB".to_string(),
                };
                term = format!("[{term}, {field}]");
            }
            let _ = write!(
                out,
                "; witness [{term}, S_{}] has norm {}",
                w.factor_index + 1,
                sci(w.norm)
            );
        }
        out.push('\n');
    }

    let (c_h, h0, closure_controls) = model.closure_inputs();
    let interactions = find_invariant_interactions(
        &c_h,
        &h0,
        &closure_controls,
        model.factorization(),
        session.closure(),
        tol,
    )?;
    let controls_joint: Vec<_> = (0..model.control_count())
        .filter_map(|i| model.control_joint(i).cloned())
        .collect();
    let residual = bracket_closure_residual(&interactions, &model.drift_joint(), &controls_joint)?;
    let _ = writeln!(
        out,
        "invariant interactions: dim {}, bracket closure {} (residual {})",
        interactions.len(),
        if residual <= tol { "holds" } else { "FAILS" },
        sci(residual)
    );
    let code = if contained {
        EXIT_DECOUPLED
    } else {
        EXIT_COUPLED
    };
    Ok(Outcome { text: out, code })
}

pub fn simulate(session: &Session) -> Result<Outcome> {
    let model = &session.built.model;
    let (t0, t1) = session.scenario.analysis.t_span.unwrap_or(DEFAULT_T_SPAN);
    let mut states = session.built.states.clone();
    let mut note = "";
    if states.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(session.seed);
        let d = model.factorization().system_dim();
        states = (0..DEFAULT_RANDOM_STATES)
            .map(|_| random_state(&mut rng, d))
            .collect();
        note = " (random, from --seed)";
    }
    let options = ExperimentOptions {
        closure: session.closure().clone(),
        tol: session.tol,
    };
    let report = invariance_experiment(model, &states, (t0, t1), session.dt, &options)?;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", session.scenario.name);
    let _ = writeln!(
        out,
        "simulation: {} initial states{note}, t in [{}, {}], dt {}",
        states.len(),
        sig3(t0),
        sig3(t1),
        sig3(session.dt)
    );
    for (k, dev) in report.per_state_deviation.iter().enumerate() {
        let _ = writeln!(out, "  state {}: max |y_on - y_off| {}", k + 1, sci(*dev));
    }
    let defect = report
        .traces
        .iter()
        .flat_map(|(a, b)| a.norm_defect.iter().chain(&b.norm_defect))
        .cloned()
        .fold(0.0, f64::max);
    let _ = writeln!(out, "  worst norm defect {}", sci(defect));
    if let Some(dir) = session.trace_dir() {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, (on, off)) in report.traces.iter().enumerate() {
            on.write_csv_file(&dir.join(format!("state{}_on.csv", k + 1)))?;
            off.write_csv_file(&dir.join(format!("state{}_off.csv", k + 1)))?;
        }
        let _ = writeln!(out, "  traces written to {}", dir.display());
    }
    let _ = writeln!(
        out,
        "algebraic verdict: {}; simulation: {}",
        verdict_word(report.algebraic.decoupled),
        if report.simulation_decoupled {
            "no deviation"
        } else {
            "deviation detected"
        }
    );
    let detail = match (report.agreement, report.algebraic.decoupled) {
        (true, true) => "both report decoupling",
        (true, false) => "both detect coupling",
        (false, _) => "verdicts differ",
    };
    let _ = writeln!(
        out,
        "agreement: {}, max dev {} ({detail})",
        if report.agreement { "yes" } else { "NO" },
        sci(report.max_deviation)
    );
    let code = if report.agreement {
        EXIT_DECOUPLED
    } else {
        EXIT_DISAGREEMENT
    };
    Ok(Outcome { text: out, code })
}

/// All three analyses in one document. The exit code is the analysis one.
pub fn report(session: &Session) -> Result<Outcome> {
    let analysis = analyze(session)?;
    let mut text = String::from("== analyze ==\n");
    text.push_str(&analysis.text);
    text.push_str("\n== dfs ==\n");
    match dfs(session) {
        Ok(o) => text.push_str(&o.text),
        Err(e) => {
            let _ = writeln!(text, "skipped: {e:#}");
        }
    }
    text.push_str("\n== simulate ==\n");
    let sim = simulate(session)?;
    text.push_str(&sim.text);
    if let Some(path) = session.report_path() {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        let _ = writeln!(text, "report written to {}", path.display());
    }
    Ok(Outcome {
        text,
        code: analysis.code,
    })
}
