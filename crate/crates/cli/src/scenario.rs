//! Scenario files: a TOML document naming operators by builder expressions
//! and wiring them into a model.
//!
//! ```toml
//! name = "two-qubit dephasing"
//!
//! [dims]
//! system = 4
//! environment = 2
//!
//! [operators]
//! S = 'sum(pauli("ZI"), pauli("IZ"))'
//! b = 'boson_a(2)'
//!
//! [model]
//! drift = 'scale(0.5, S)'
//! environment = 'mul(dag(b), b)'
//! observable = 'ketbra(1, 2, 4)'
//! coupling = [['scale(0.5, S)', 'sum(b, dag(b))']]
//! ```

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use decoq_core::dynamics::SystemModel;
use decoq_core::{
    ClosureOptions, ComplexMatrix, ControlLaw, HarmonicOperator, HilbertFactorization, Schedule,
    C64,
};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::eval::{EvalError, Evaluator, Value};
use crate::expr::{self, Expr};

/// 1-based line and column in the scenario file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TextPos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for TextPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{at}: {message}")]
    Syntax { at: TextPos, message: String },
    #[error("{message}")]
    Invalid { message: String },
    #[error("{at}: in {context}: {message}")]
    Expression {
        at: TextPos,
        context: String,
        message: String,
    },
    #[error("{context} has dimension {found}, expected {expected}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("{context}: {message}")]
    Model { context: String, message: String },
}

/// An expression together with where it was read from.
#[derive(Clone, Debug)]
pub struct Source {
    pub expr: Expr,
    /// Start of the expression text, when it came from a file.
    pub at: Option<TextPos>,
}

impl PartialEq for Source {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl From<Expr> for Source {
    fn from(expr: Expr) -> Self {
        Self { expr, at: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub drift: Source,
    pub environment: Source,
    pub observable: Source,
    pub controls: Vec<Source>,
    /// `(S_k, B_k)` pairs; the interaction is `sum_k S_k (x) B_k`.
    pub coupling: Vec<(Source, Source)>,
    /// Joint-space interaction, used when no coupling pairs are given.
    pub interaction: Option<Source>,
    pub bath_state: Option<Source>,
    pub schedule: Option<ScheduleSpec>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AnalysisSpec {
    pub tol: Option<f64>,
    pub max_dim: Option<usize>,
    /// Applied as `X -> P X P` to every generated image.
    pub compression: Option<Source>,
    pub t_span: Option<(f64, f64)>,
    pub dt: Option<f64>,
    pub states: Vec<Source>,
    pub chain_states: Option<usize>,
    pub chain_times: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct OutputSpec {
    pub traces: Option<String>,
    pub report: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub system_dim: usize,
    pub env_dim: usize,
    pub operators: IndexMap<String, Source>,
    pub model: ModelSpec,
    pub analysis: AnalysisSpec,
    pub outputs: OutputSpec,
}

// On-disk layout. `E` is `Spanned<String>` when reading, `String` when writing.

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawScenario<E> {
    name: String,
    dims: RawDims,
    #[serde(default = "IndexMap::new", skip_serializing_if = "IndexMap::is_empty")]
    operators: IndexMap<String, E>,
    model: RawModel<E>,
    #[serde(
        default = "RawAnalysis::default",
        skip_serializing_if = "RawAnalysis::is_empty"
    )]
    analysis: RawAnalysis<E>,
    #[serde(default, skip_serializing_if = "RawOutputs::is_empty")]
    outputs: RawOutputs,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawDims {
    system: usize,
    environment: usize,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModel<E> {
    drift: E,
    environment: E,
    observable: E,
    #[serde(default = "Vec::new", skip_serializing_if = "Vec::is_empty")]
    controls: Vec<E>,
    #[serde(default = "Vec::new", skip_serializing_if = "Vec::is_empty")]
    coupling: Vec<(E, E)>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    interaction: Option<E>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    bath_state: Option<E>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<RawSchedule>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis<E> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_dim: Option<usize>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    compression: Option<E>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_span: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(default = "Vec::new", skip_serializing_if = "Vec::is_empty")]
    states: Vec<E>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain_times: Option<usize>,
}

impl<E> RawAnalysis<E> {
    fn default() -> Self {
        Self {
            tol: None,
            max_dim: None,
            compression: None,
            t_span: None,
            dt: None,
            states: Vec::new(),
            chain_states: None,
            chain_times: None,
        }
    }

    fn is_empty(&self) -> bool {
        self.tol.is_none()
            && self.max_dim.is_none()
            && self.compression.is_none()
            && self.t_span.is_none()
            && self.dt.is_none()
            && self.states.is_empty()
            && self.chain_states.is_none()
            && self.chain_times.is_none()
    }
}

#[derive(Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    traces: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<String>,
}

impl RawOutputs {
    fn is_empty(&self) -> bool {
        self.traces.is_none() && self.report.is_none()
    }
}

/// Maps byte offsets in the file to line and column.
struct LineIndex<'a> {
    text: &'a str,
}

impl LineIndex<'_> {
    fn pos(&self, offset: usize) -> TextPos {
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before
            .rfind('\n')
            .map_or(before.len(), |p| before.len() - p - 1)
            + 1;
        TextPos { line, col }
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), ScenarioError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ScenarioError::Invalid {
            message: format!("{what} must be finite"),
        })
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let index = LineIndex { text };
        let raw: RawScenario<Spanned<String>> = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map_or(TextPos { line: 1, col: 1 }, |s| index.pos(s.start));
            ScenarioError::Syntax {
                at,
                message: e.message().trim_end().to_string(),
            }
        })?;
        let source = |s: &Spanned<String>| -> Result<Source, ScenarioError> {
            let span: Range<usize> = s.span();
            // skip the opening quote
            let start = span.start + 1;
            match expr::parse(s.get_ref()) {
                Ok(expr) => Ok(Source {
                    expr,
                    at: Some(index.pos(start)),
                }),
                Err(e) => Err(ScenarioError::Syntax {
                    at: index.pos(start + e.offset),
                    message: e.message,
                }),
            }
        };
        let opt = |s: &Option<Spanned<String>>| s.as_ref().map(&source).transpose();

        let mut operators = IndexMap::new();
        for (name, e) in &raw.operators {
            if !is_identifier(name) {
                return Err(ScenarioError::Invalid {
                    message: format!("operator name {name:?} is not an identifier"),
                });
            }
            operators.insert(name.clone(), source(e)?);
        }
        let m = &raw.model;
        let schedule = m
            .schedule
            .as_ref()
            .map(|s| {
                check_finite("schedule times", &s.times)?;
                for row in &s.values {
                    check_finite("schedule values", row)?;
                }
                Ok::<_, ScenarioError>(ScheduleSpec {
                    times: s.times.clone(),
                    values: s.values.clone(),
                })
            })
            .transpose()?;
        let model = ModelSpec {
            drift: source(&m.drift)?,
            environment: source(&m.environment)?,
            observable: source(&m.observable)?,
            controls: m.controls.iter().map(&source).collect::<Result<_, _>>()?,
            coupling: m
                .coupling
                .iter()
                .map(|(s, b)| Ok((source(s)?, source(b)?)))
                .collect::<Result<_, ScenarioError>>()?,
            interaction: opt(&m.interaction)?,
            bath_state: opt(&m.bath_state)?,
            schedule,
        };
        let a = &raw.analysis;
        check_finite("tol", a.tol.as_slice())?;
        check_finite("dt", a.dt.as_slice())?;
        if let Some((t0, t1)) = a.t_span {
            check_finite("t_span", &[t0, t1])?;
        }
        let analysis = AnalysisSpec {
            tol: a.tol,
            max_dim: a.max_dim,
            compression: opt(&a.compression)?,
            t_span: a.t_span,
            dt: a.dt,
            states: a.states.iter().map(&source).collect::<Result<_, _>>()?,
            chain_states: a.chain_states,
            chain_times: a.chain_times,
        };
        let scenario = Scenario {
            name: raw.name,
            system_dim: raw.dims.system,
            env_dim: raw.dims.environment,
            operators,
            model,
            analysis,
            outputs: OutputSpec {
                traces: raw.outputs.traces,
                report: raw.outputs.report,
            },
        };
        scenario.check_references()?;
        Ok(scenario)
    }

    /// Every name used in an expression must be a defined operator.
    fn check_references(&self) -> Result<(), ScenarioError> {
        for (context, s) in self.sources() {
            for (name, offset) in s.expr.references() {
                if !self.operators.contains_key(name) {
                    let at = s.at.map_or(TextPos { line: 0, col: 0 }, |p| TextPos {
                        line: p.line,
                        col: p.col + offset,
                    });
                    return Err(ScenarioError::Expression {
                        at,
                        context,
                        message: format!("undefined operator `{name}`"),
                    });
                }
            }
        }
        Ok(())
    }

    fn sources(&self) -> Vec<(String, &Source)> {
        let mut out: Vec<(String, &Source)> = self
            .operators
            .iter()
            .map(|(n, s)| (format!("operator `{n}`"), s))
            .collect();
        let m = &self.model;
        out.push(("drift".into(), &m.drift));
        out.push(("environment Hamiltonian".into(), &m.environment));
        out.push(("observable".into(), &m.observable));
        for (k, c) in m.controls.iter().enumerate() {
            out.push((format!("control {}", k + 1), c));
        }
        for (k, (s, b)) in m.coupling.iter().enumerate() {
            out.push((format!("coupling {} system factor", k + 1), s));
            out.push((format!("coupling {} environment factor", k + 1), b));
        }
        if let Some(s) = &m.interaction {
            out.push(("interaction".into(), s));
        }
        if let Some(s) = &m.bath_state {
            out.push(("bath state".into(), s));
        }
        if let Some(s) = &self.analysis.compression {
            out.push(("compression".into(), s));
        }
        for (k, s) in self.analysis.states.iter().enumerate() {
            out.push((format!("initial state {}", k + 1), s));
        }
        out
    }

    /// Canonical TOML text. Parsing it back gives an equal scenario and
    /// printing that again gives the same bytes.
    pub fn to_canonical(&self) -> String {
        let text = |s: &Source| s.expr.to_string();
        let m = &self.model;
        let a = &self.analysis;
        let raw = RawScenario::<String> {
            name: self.name.clone(),
            dims: RawDims {
                system: self.system_dim,
                environment: self.env_dim,
            },
            operators: self
                .operators
                .iter()
                .map(|(k, v)| (k.clone(), text(v)))
                .collect(),
            model: RawModel {
                drift: text(&m.drift),
                environment: text(&m.environment),
                observable: text(&m.observable),
                controls: m.controls.iter().map(text).collect(),
                coupling: m.coupling.iter().map(|(s, b)| (text(s), text(b))).collect(),
                interaction: m.interaction.as_ref().map(text),
                bath_state: m.bath_state.as_ref().map(text),
                schedule: m.schedule.as_ref().map(|s| RawSchedule {
                    times: s.times.clone(),
                    values: s.values.clone(),
                }),
            },
            analysis: RawAnalysis {
                tol: a.tol,
                max_dim: a.max_dim,
                compression: a.compression.as_ref().map(text),
                t_span: a.t_span,
                dt: a.dt,
                states: a.states.iter().map(text).collect(),
                chain_states: a.chain_states,
                chain_times: a.chain_times,
            },
            outputs: RawOutputs {
                traces: self.outputs.traces.clone(),
                report: self.outputs.report.clone(),
            },
        };
        toml::to_string(&raw).expect("scenario fields are always representable")
    }

    /// Evaluate every expression and assemble the model.
    pub fn build(&self) -> Result<Built, ScenarioError> {
        let factorization =
            HilbertFactorization::new(self.system_dim, self.env_dim).map_err(|e| {
                ScenarioError::Invalid {
                    message: format!("dims: {e}"),
                }
            })?;
        let (d_s, d_e, n) = (self.system_dim, self.env_dim, factorization.total_dim());
        let definitions: HashMap<String, Expr> = self
            .operators
            .iter()
            .map(|(k, v)| (k.clone(), v.expr.clone()))
            .collect();
        let mut ev = Evaluator::new(&definitions);
        let mut eval = |context: &str, s: &Source| -> Result<Value, ScenarioError> {
            ev.eval(&s.expr)
                .map_err(|e| self.expression_error(context, s, e))
        };

        let m = &self.model;
        let drift = matrix("drift", eval("drift", &m.drift)?, &[d_s])?;
        let environment = matrix(
            "environment Hamiltonian",
            eval("environment Hamiltonian", &m.environment)?,
            &[d_e],
        )?;
        let observable = harmonic("observable", eval("observable", &m.observable)?, &[d_s, n])?;
        let mut model = SystemModel::new(factorization, drift, environment, observable)
            .map_err(|e| model_error("model", e))?;
        for (k, c) in m.controls.iter().enumerate() {
            let context = format!("control {} (`{}`)", k + 1, c.expr);
            let h = matrix(&context, eval(&context, c)?, &[d_s, n])?;
            model = model
                .with_control(h)
                .map_err(|e| model_error(&context, e))?;
        }
        match (&m.interaction, m.coupling.is_empty()) {
            (Some(_), false) => {
                return Err(ScenarioError::Invalid {
                    message: "model sets both `coupling` and `interaction`; use one".into(),
                })
            }
            (Some(s), true) => {
                let h = harmonic("interaction", eval("interaction", s)?, &[n])?;
                model = model
                    .with_interaction(h)
                    .map_err(|e| model_error("interaction", e))?;
            }
            (None, false) => {
                let mut pairs = Vec::new();
                for (k, (s, b)) in m.coupling.iter().enumerate() {
                    let cs = format!("coupling {} system factor (`{}`)", k + 1, s.expr);
                    let cb = format!("coupling {} environment factor (`{}`)", k + 1, b.expr);
                    pairs.push((
                        matrix(&cs, eval(&cs, s)?, &[d_s])?,
                        matrix(&cb, eval(&cb, b)?, &[d_e])?,
                    ));
                }
                model = model
                    .with_coupling(pairs)
                    .map_err(|e| model_error("coupling", e))?;
            }
            (None, true) => {}
        }
        if let Some(s) = &m.bath_state {
            let v = vector("bath state", eval("bath state", s)?, &[d_e])?;
            model = model
                .with_bath_state(v)
                .map_err(|e| model_error("bath state", e))?;
        }
        if let Some(s) = &m.schedule {
            let schedule = Schedule::new(s.times.clone(), s.values.clone())
                .map_err(|e| model_error("schedule", e))?;
            model = model
                .with_control_law(ControlLaw::Schedule(schedule))
                .map_err(|e| model_error("schedule", e))?;
        }

        let a = &self.analysis;
        let mut closure = ClosureOptions::default();
        closure.caps.max_dim = a.max_dim;
        if let Some(s) = &a.compression {
            closure.compression = Some(matrix("compression", eval("compression", s)?, &[d_s, n])?);
        }
        let mut states = Vec::new();
        for (k, s) in a.states.iter().enumerate() {
            let context = format!("initial state {}", k + 1);
            states.push(vector(&context, eval(&context, s)?, &[d_s, n])?);
        }
        Ok(Built {
            model,
            closure,
            states,
        })
    }

    fn expression_error(&self, context: &str, s: &Source, e: EvalError) -> ScenarioError {
        let (at, context) = match &e.definition {
            Some(name) => {
                let def = &self.operators[name];
                (def.at, format!("operator `{name}`"))
            }
            None => (s.at, context.to_string()),
        };
        let at = at.map_or(TextPos { line: 0, col: 0 }, |p| TextPos {
            line: p.line,
            col: p.col + e.offset,
        });
        ScenarioError::Expression {
            at,
            context,
            message: e.message,
        }
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && name != "i"
}

fn model_error(context: &str, e: decoq_core::Error) -> ScenarioError {
    ScenarioError::Model {
        context: context.to_string(),
        message: e.to_string(),
    }
}

fn check_dim(context: &str, found: usize, allowed: &[usize]) -> Result<(), ScenarioError> {
    if allowed.contains(&found) {
        Ok(())
    } else {
        Err(ScenarioError::Dimension {
            context: context.to_string(),
            expected: allowed[0],
            found,
        })
    }
}

fn wrong_kind(context: &str, want: &str, v: &Value) -> ScenarioError {
    ScenarioError::Model {
        context: context.to_string(),
        message: format!("expected {want}, got {}", v.kind()),
    }
}

fn matrix(context: &str, v: Value, allowed: &[usize]) -> Result<ComplexMatrix, ScenarioError> {
    let kind = v.clone();
    let m = v
        .into_matrix()
        .ok_or_else(|| wrong_kind(context, "a constant operator", &kind))?;
    check_dim(context, m.dim(), allowed)?;
    Ok(m)
}

fn harmonic(context: &str, v: Value, allowed: &[usize]) -> Result<HarmonicOperator, ScenarioError> {
    let kind = v.clone();
    let h = v
        .into_harmonic()
        .ok_or_else(|| wrong_kind(context, "an operator", &kind))?;
    check_dim(context, h.dim(), allowed)?;
    Ok(h)
}

fn vector(context: &str, v: Value, allowed: &[usize]) -> Result<Vec<C64>, ScenarioError> {
    match v {
        Value::Vector(x) => {
            check_dim(context, x.len(), allowed)?;
            Ok(x)
        }
        other => Err(wrong_kind(context, "a state vector", &other)),
    }
}

/// Evaluated scenario.
pub struct Built {
    pub model: SystemModel,
    pub closure: ClosureOptions,
    /// Initial states, on the system or the joint space.
    pub states: Vec<Vec<C64>>,
}
