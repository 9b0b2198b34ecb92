//! Evaluation of builder expressions to matrices, harmonic operators and
//! state vectors.

use std::collections::HashMap;

use decoq_core::{
    boson_annihilate, ket_bra, pauli_string, ComplexMatrix, Frequency, HarmonicOperator, C64,
    DEFAULT_FREQ_TOL,
};
use num_traits::ToPrimitive;

use crate::expr::{Expr, ExprKind, Scalar};

#[derive(Clone, Debug)]
pub enum Value {
    Scalar(Scalar),
    Str(String),
    Matrix(ComplexMatrix),
    Harmonic(HarmonicOperator),
    Vector(Vec<C64>),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Scalar(_) => "scalar",
            Value::Str(_) => "string",
            Value::Matrix(_) => "matrix",
            Value::Harmonic(_) => "time-dependent operator",
            Value::Vector(_) => "state vector",
        }
    }

    /// Dimension of an operator or length of a vector.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Value::Matrix(m) => Some(m.dim()),
            Value::Harmonic(h) => Some(h.dim()),
            Value::Vector(v) => Some(v.len()),
            _ => None,
        }
    }

    pub fn into_harmonic(self) -> Option<HarmonicOperator> {
        match self {
            Value::Matrix(m) => Some(HarmonicOperator::constant(m)),
            Value::Harmonic(h) => Some(h),
            _ => None,
        }
    }

    pub fn into_matrix(self) -> Option<ComplexMatrix> {
        match self {
            Value::Matrix(m) => Some(m),
            Value::Harmonic(h) if h.is_constant() => Some(h.constant_part()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct EvalError {
    /// Name of the definition being evaluated, when inside one.
    pub definition: Option<String>,
    /// Byte offset within that expression.
    pub offset: usize,
    pub message: String,
}

type Terms = Vec<(Frequency, ComplexMatrix)>;

/// Resolves names against a table of parsed definitions, evaluating each at
/// most once and rejecting cycles.
pub struct Evaluator<'a> {
    definitions: &'a HashMap<String, Expr>,
    cache: HashMap<String, Value>,
    active: Vec<String>,
}

impl<'a> Evaluator<'a> {
    pub fn new(definitions: &'a HashMap<String, Expr>) -> Self {
        Self {
            definitions,
            cache: HashMap::new(),
            active: Vec::new(),
        }
    }

    /// Value of the named definition.
    pub fn lookup(&mut self, name: &str) -> Result<Value, EvalError> {
        if let Some(v) = self.cache.get(name) {
            return Ok(v.clone());
        }
        let expr = self.definitions.get(name).ok_or_else(|| EvalError {
            definition: None,
            offset: 0,
            message: format!("undefined operator `{name}`"),
        })?;
        if self.active.iter().any(|n| n == name) {
            return Err(EvalError {
                definition: Some(name.to_string()),
                offset: 0,
                message: format!("`{name}` is defined in terms of itself"),
            });
        }
        self.active.push(name.to_string());
        let result = self.eval(expr).map_err(|mut e| {
            e.definition.get_or_insert_with(|| name.to_string());
            e
        });
        self.active.pop();
        let v = result?;
        self.cache.insert(name.to_string(), v.clone());
        Ok(v)
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Value, EvalError> {
        let fail = |message: String| EvalError {
            definition: None,
            offset: e.offset,
            message,
        };
        match &e.kind {
            ExprKind::Scalar(s) => Ok(Value::Scalar(*s)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Name(n) => match self.lookup(n) {
                Err(err) if err.definition.is_none() => Err(fail(err.message)),
                other => other,
            },
            ExprKind::Call { name, args } => {
                let values = args
                    .iter()
                    .map(|a| self.eval(a))
                    .collect::<Result<Vec<_>, _>>()?;
                call(name, values).map_err(fail)
            }
        }
    }
}

fn arity(name: &str, values: &[Value], n: usize) -> Result<(), String> {
    if values.len() == n {
        Ok(())
    } else {
        Err(format!(
            "{name} takes {n} argument(s), got {}",
            values.len()
        ))
    }
}

fn index(v: &Value, what: &str) -> Result<usize, String> {
    match v {
        Value::Scalar(s) if s.is_real() && s.re.is_integer() && *s.re.numer() >= 0 => {
            Ok(s.re.to_integer() as usize)
        }
        other => Err(format!(
            "{what} must be a non-negative integer, got {}",
            other.kind()
        )),
    }
}

fn core(e: decoq_core::Error) -> String {
    e.to_string()
}

fn terms_of(v: &Value, position: usize) -> Result<Terms, String> {
    match v {
        Value::Matrix(m) => Ok(vec![(Frequency::zero(), m.clone())]),
        Value::Harmonic(h) => Ok(h
            .terms()
            .iter()
            .map(|t| (t.frequency, t.matrix.clone()))
            .collect()),
        other => Err(format!(
            "argument {} must be an operator, got {}",
            position + 1,
            other.kind()
        )),
    }
}

/// Matrix result when every input was a plain matrix, harmonic otherwise.
fn from_terms(dim: usize, terms: Terms, any_harmonic: bool) -> Result<Value, String> {
    let h = HarmonicOperator::from_terms(dim, terms, DEFAULT_FREQ_TOL).map_err(core)?;
    if any_harmonic {
        Ok(Value::Harmonic(h))
    } else {
        Ok(Value::Matrix(h.constant_part()))
    }
}

/// Fold operator arguments with a product-like matrix operation; frequencies
/// of multiplied terms add.
fn product(
    name: &str,
    values: &[Value],
    dim_of: impl Fn(usize, usize) -> usize,
    op: impl Fn(&ComplexMatrix, &ComplexMatrix) -> Result<ComplexMatrix, String>,
) -> Result<Value, String> {
    if values.is_empty() {
        return Err(format!("{name} needs at least one argument"));
    }
    let any_harmonic = values.iter().any(|v| matches!(v, Value::Harmonic(_)));
    let mut acc = terms_of(&values[0], 0)?;
    let mut dim = values[0].dim().unwrap_or(0);
    for (k, v) in values.iter().enumerate().skip(1) {
        let rhs = terms_of(v, k)?;
        let mut next = Vec::with_capacity(acc.len() * rhs.len());
        for (fa, a) in &acc {
            for (fb, b) in &rhs {
                next.push((fa.add(fb), op(a, b)?));
            }
        }
        dim = dim_of(dim, v.dim().unwrap_or(0));
        acc = next;
    }
    from_terms(dim, acc, any_harmonic)
}

fn call(name: &str, values: Vec<Value>) -> Result<Value, String> {
    match name {
        "pauli" => {
            arity(name, &values, 1)?;
            match &values[0] {
                Value::Str(w) => pauli_string(w).map(Value::Matrix).map_err(core),
                other => Err(format!("pauli expects a string, got {}", other.kind())),
            }
        }
        "boson_a" => {
            arity(name, &values, 1)?;
            boson_annihilate(index(&values[0], "truncation")?)
                .map(Value::Matrix)
                .map_err(core)
        }
        "ident" => {
            arity(name, &values, 1)?;
            let d = index(&values[0], "dimension")?;
            if d == 0 {
                return Err("dimension must be positive".into());
            }
            Ok(Value::Matrix(ComplexMatrix::identity(d)))
        }
        "ketbra" => {
            arity(name, &values, 3)?;
            let (i, j, d) = (
                index(&values[0], "row")?,
                index(&values[1], "column")?,
                index(&values[2], "dimension")?,
            );
            ket_bra(i, j, d).map(Value::Matrix).map_err(core)
        }
        "ket" => {
            arity(name, &values, 2)?;
            let (i, d) = (index(&values[0], "level")?, index(&values[1], "dimension")?);
            if i >= d {
                return Err(format!("level {i} out of range for dimension {d}"));
            }
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[i] = C64::new(1.0, 0.0);
            Ok(Value::Vector(v))
        }
        "dag" => {
            arity(name, &values, 1)?;
            match values.into_iter().next().expect("one argument") {
                Value::Matrix(m) => Ok(Value::Matrix(m.adjoint())),
                Value::Harmonic(h) => Ok(Value::Harmonic(h.adjoint())),
                Value::Scalar(s) => Ok(Value::Scalar(Scalar {
                    re: s.re,
                    im: -s.im,
                })),
                other => Err(format!("dag expects an operator, got {}", other.kind())),
            }
        }
        "scale" => {
            arity(name, &values, 2)?;
            let c = match &values[0] {
                Value::Scalar(s) => s.to_c64(),
                other => Err(format!(
                    "scale expects a scalar first, got {}",
                    other.kind()
                ))?,
            };
            match values.into_iter().nth(1).expect("two arguments") {
                Value::Matrix(m) => Ok(Value::Matrix(m.scale(c))),
                Value::Harmonic(h) => Ok(Value::Harmonic(h.scale(c))),
                Value::Vector(v) => Ok(Value::Vector(v.into_iter().map(|x| x * c).collect())),
                other => Err(format!("cannot scale a {}", other.kind())),
            }
        }
        "sum" => {
            if values.is_empty() {
                return Err("sum needs at least one argument".into());
            }
            if values.iter().all(|v| matches!(v, Value::Vector(_))) {
                let n = values[0].dim().unwrap_or(0);
                let mut acc = vec![C64::new(0.0, 0.0); n];
                for v in &values {
                    let Value::Vector(x) = v else { unreachable!() };
                    if x.len() != n {
                        return Err(format!("sum of vectors of length {n} and {}", x.len()));
                    }
                    for (a, b) in acc.iter_mut().zip(x) {
                        *a += b;
                    }
                }
                return Ok(Value::Vector(acc));
            }
            let dim = values[0].dim().unwrap_or(0);
            let mut all = Vec::new();
            for (k, v) in values.iter().enumerate() {
                if v.dim() != Some(dim) {
                    return Err(format!(
                        "sum argument {} has dimension {}, expected {dim}",
                        k + 1,
                        v.dim().map_or("none".into(), |d| d.to_string())
                    ));
                }
                all.extend(terms_of(v, k)?);
            }
            let any_harmonic = values.iter().any(|v| matches!(v, Value::Harmonic(_)));
            from_terms(dim, all, any_harmonic)
        }
        "tensor" => {
            if values.iter().all(|v| matches!(v, Value::Vector(_))) && !values.is_empty() {
                let mut acc = vec![C64::new(1.0, 0.0)];
                for v in &values {
                    let Value::Vector(x) = v else { unreachable!() };
                    acc = acc
                        .iter()
                        .flat_map(|a| x.iter().map(move |b| a * b))
                        .collect();
                }
                return Ok(Value::Vector(acc));
            }
            product(name, &values, |a, b| a * b, |a, b| Ok(a.kron(b)))
        }
        "mul" => {
            let dim = values.first().and_then(Value::dim).unwrap_or(0);
            if let Some(k) = values.iter().position(|v| v.dim() != Some(dim)) {
                return Err(format!("mul argument {} has a different dimension", k + 1));
            }
            product(name, &values, |a, _| a, |a, b| a.try_mul(b).map_err(core))
        }
        "harmonic" => {
            arity(name, &values, 2)?;
            let mu = match &values[0] {
                Value::Scalar(s) if s.is_real() => Frequency::exact(s.re),
                other => Err(format!(
                    "frequency must be a real number, got {}",
                    other.kind()
                ))?,
            };
            match values.into_iter().nth(1).expect("two arguments") {
                Value::Matrix(m) => Ok(Value::Harmonic(HarmonicOperator::single(mu, m))),
                other => Err(format!("harmonic expects a matrix, got {}", other.kind())),
            }
        }
        other => Err(format!("unknown function `{other}`")),
    }
}

/// Real number from a scalar value, for reporting.
pub fn real_part(s: &Scalar) -> f64 {
    s.re.to_f64().unwrap_or(f64::NAN)
}
