//! Sequential specifications: a data type's state transition and query,
//! annotated with an operation ordering, a precondition and mode flags.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, build::*, Env, EvalError, Sort, Term, TermRef, TypeError};
use crate::lattice::{ScalarSort, Value};

mod benchmarks;

pub use benchmarks::{builtin_benchmark, builtin_benchmarks};

/// Name of the implicit timestamp field.
pub const TIMESTAMP_FIELD: &str = "t";
/// Variable bound to the state in `st` and `query`.
pub const STATE_VAR: &str = "state";

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub sort: ScalarSort,
}

impl Field {
    pub fn new(name: &str, sort: ScalarSort) -> Self {
        Field {
            name: name.to_string(),
            sort,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    #[serde(default)]
    pub timestamps: bool,
    #[serde(default)]
    pub non_idempotent: bool,
}

/// Concrete operation arguments, aligned with [`SequentialSpec::op_signature`].
pub type OpValue = Vec<Value>;
/// Concrete query arguments, aligned with `query_fields`.
pub type QueryValue = Vec<Value>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequentialSpec {
    pub name: String,
    #[serde(default)]
    pub title: String,
    pub op_fields: Vec<Field>,
    #[serde(default)]
    pub query_fields: Vec<Field>,
    pub state_sort: Sort,
    pub initial_state: TermRef,
    pub st: TermRef,
    pub query: TermRef,
    pub op_order: TermRef,
    pub op_precondition: TermRef,
    #[serde(default)]
    pub flags: Flags,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{what}: {source}")]
    Type {
        what: &'static str,
        source: TypeError,
    },
    #[error("{what} has sort {got}, expected {expected}")]
    WrongSort {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("duplicate field name `{0}`")]
    DuplicateField(String),
    #[error("field name `{0}` is reserved")]
    ReservedField(String),
    #[error("initial state must be a closed term")]
    OpenInitialState,
    #[error("operation ordering is not transitive: {a:?} -> {b:?} -> {c:?}")]
    NotTransitive { a: OpValue, b: OpValue, c: OpValue },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("unsupported format_version {0}")]
    Version(u64),
    #[error("malformed spec document: {0}")]
    Format(String),
}

fn prefixed(prefix: &str, name: &str) -> Arc<str> {
    format!("{prefix}.{name}").into()
}

impl SequentialSpec {
    /// Operation fields including the implicit timestamp.
    pub fn op_signature(&self) -> Vec<Field> {
        let mut fields = self.op_fields.clone();
        if self.flags.timestamps {
            fields.push(Field::new(TIMESTAMP_FIELD, ScalarSort::Clock));
        }
        fields
    }

    fn op_sorts(&self, prefix: Option<&str>) -> Vec<(Arc<str>, Sort)> {
        self.op_signature()
            .into_iter()
            .map(|f| {
                let name = match prefix {
                    Some(p) => prefixed(p, &f.name),
                    None => f.name.as_str().into(),
                };
                (name, Sort::Scalar(f.sort))
            })
            .collect()
    }

    /// Typing environment of `st`.
    pub fn st_env(&self) -> Vec<(Arc<str>, Sort)> {
        let mut env = vec![(Arc::from(STATE_VAR), self.state_sort.clone())];
        env.extend(self.op_sorts(None));
        env
    }

    /// Typing environment of `query`.
    pub fn query_env(&self) -> Vec<(Arc<str>, Sort)> {
        let mut env = vec![(Arc::from(STATE_VAR), self.state_sort.clone())];
        env.extend(
            self.query_fields
                .iter()
                .map(|f| (f.name.as_str().into(), Sort::Scalar(f.sort))),
        );
        env
    }

    pub fn order_env(&self) -> Vec<(Arc<str>, Sort)> {
        let mut env = self.op_sorts(Some("o1"));
        env.extend(self.op_sorts(Some("o2")));
        env
    }

    pub fn precondition_env(&self) -> Vec<(Arc<str>, Sort)> {
        self.op_sorts(Some("o"))
    }

    pub fn query_sort(&self) -> Result<Sort, SpecError> {
        expr::typecheck(&self.query, &self.query_env()).map_err(|source| SpecError::Type {
            what: "query",
            source,
        })
    }

    /// `(o1.t < o2.t) ∨ (o1.t = o2.t ∧ op_order)` with timestamps, else `op_order`.
    pub fn effective_op_order(&self) -> TermRef {
        if !self.flags.timestamps {
            return self.op_order.clone();
        }
        let t1 = var(&format!("o1.{TIMESTAMP_FIELD}"));
        let t2 = var(&format!("o2.{TIMESTAMP_FIELD}"));
        or(
            gt(t2.clone(), t1.clone()),
            and(eq(t1, t2), self.op_order.clone()),
        )
    }

    /// The user precondition, conjoined with `o.t > 0` when timestamps are on.
    pub fn effective_precondition(&self) -> TermRef {
        if !self.flags.timestamps {
            return self.op_precondition.clone();
        }
        let positive = gt(var(&format!("o.{TIMESTAMP_FIELD}")), int(0));
        match &*self.op_precondition {
            Term::Bool(true) => positive,
            _ => and(self.op_precondition.clone(), positive),
        }
    }

    /// Integer literals occurring in any of the spec's terms, in first-seen order.
    pub fn constants(&self) -> Vec<i64> {
        let mut out = Vec::new();
        for t in [
            &self.initial_state,
            &self.st,
            &self.query,
            &self.op_order,
            &self.op_precondition,
        ] {
            t.int_literals(&mut out);
        }
        out
    }

    /// Scalar sorts mentioned by the spec, including implicit ones from the flags.
    pub fn scalar_sorts(&self) -> Vec<ScalarSort> {
        let mut out: Vec<ScalarSort> = Vec::new();
        let mut push = |s: ScalarSort| {
            if !out.contains(&s) {
                out.push(s);
            }
        };
        for f in self.op_signature().iter().chain(&self.query_fields) {
            push(f.sort);
        }
        if let Ok(Sort::Scalar(s)) = self.query_sort() {
            push(s);
        }
        if self.flags.non_idempotent {
            push(ScalarSort::NodeID);
        }
        out.sort();
        out
    }

    /// Static checks: field names, closedness, and sorts of every term.
    pub fn validate(&self) -> Result<(), SpecError> {
        let mut seen: Vec<&str> = Vec::new();
        for f in &self.op_fields {
            if f.name == STATE_VAR
                || (self.flags.timestamps && f.name == TIMESTAMP_FIELD)
                || f.name.contains('.')
            {
                return Err(SpecError::ReservedField(f.name.clone()));
            }
            if seen.contains(&f.name.as_str()) {
                return Err(SpecError::DuplicateField(f.name.clone()));
            }
            seen.push(&f.name);
        }
        let mut seen: Vec<&str> = Vec::new();
        for f in &self.query_fields {
            if f.name == STATE_VAR || f.name.contains('.') {
                return Err(SpecError::ReservedField(f.name.clone()));
            }
            if seen.contains(&f.name.as_str()) {
                return Err(SpecError::DuplicateField(f.name.clone()));
            }
            seen.push(&f.name);
        }
        if !self.initial_state.is_closed() {
            return Err(SpecError::OpenInitialState);
        }
        let expect = |what: &'static str, t: &Term, env: &[(Arc<str>, Sort)], want: &Sort| {
            expr::check(t, want, env).map_err(|source| SpecError::Type { what, source })
        };
        expect("initial_state", &self.initial_state, &[], &self.state_sort)?;
        expect("st", &self.st, &self.st_env(), &self.state_sort)?;
        expect(
            "op_order",
            &self.effective_op_order(),
            &self.order_env(),
            &Sort::BOOL,
        )?;
        expect(
            "op_precondition",
            &self.effective_precondition(),
            &self.precondition_env(),
            &Sort::BOOL,
        )?;
        match self.query_sort()? {
            Sort::Scalar(_) => Ok(()),
            other => Err(SpecError::WrongSort {
                what: "query",
                expected: "a scalar sort".into(),
                got: other.to_string(),
            }),
        }
    }

    pub fn initial_value(&self) -> Result<Value, SpecError> {
        Ok(expr::eval(&self.initial_state, &Env::new())?)
    }

    /// Binds an operation's fields under `prefix.` (or bare names when `prefix` is empty).
    pub fn bind_op(&self, env: &mut Env, prefix: &str, op: &[Value]) {
        for (f, v) in self.op_signature().iter().zip(op) {
            let name: Arc<str> = if prefix.is_empty() {
                f.name.as_str().into()
            } else {
                prefixed(prefix, &f.name)
            };
            env.bind(name, v.clone());
        }
    }

    pub fn satisfies_precondition(&self, op: &[Value]) -> Result<bool, SpecError> {
        let mut env = Env::new();
        self.bind_op(&mut env, "o", op);
        Ok(expr::eval(&self.effective_precondition(), &env)?
            .as_bool()
            .unwrap_or(false))
    }

    /// Whether `b` may directly follow `a` in a log.
    pub fn ordered(&self, a: &[Value], b: &[Value]) -> Result<bool, SpecError> {
        let mut env = Env::new();
        self.bind_op(&mut env, "o1", a);
        self.bind_op(&mut env, "o2", b);
        Ok(expr::eval(&self.effective_op_order(), &env)?
            .as_bool()
            .unwrap_or(false))
    }

    pub fn apply(&self, state: &Value, op: &[Value]) -> Result<Value, SpecError> {
        let mut env = Env::new().with(STATE_VAR, state.clone());
        self.bind_op(&mut env, "", op);
        Ok(expr::eval(&self.st, &env)?)
    }

    /// Left fold of `st` over the log from the initial state.
    pub fn run_sequential(&self, log: &[OpValue]) -> Result<Value, SpecError> {
        let mut state = self.initial_value()?;
        for op in log {
            state = self.apply(&state, op)?;
        }
        Ok(state)
    }

    pub fn answer_query(&self, state: &Value, q: &[Value]) -> Result<Value, SpecError> {
        let mut env = Env::new().with(STATE_VAR, state.clone());
        for (f, v) in self.query_fields.iter().zip(q) {
            env.bind(f.name.as_str(), v.clone());
        }
        Ok(expr::eval(&self.query, &env)?)
    }

    /// Exhaustively checks transitivity of the effective ordering over the
    /// precondition-satisfying operations in `ops`.
    pub fn check_transitivity(&self, ops: &[OpValue]) -> Result<(), SpecError> {
        let valid: Vec<&OpValue> = ops
            .iter()
            .filter(|o| self.satisfies_precondition(o).unwrap_or(false))
            .collect();
        let n = valid.len();
        let mut rel = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                rel[i * n + j] = self.ordered(valid[i], valid[j])?;
            }
        }
        for a in 0..n {
            for b in 0..n {
                if !rel[a * n + b] {
                    continue;
                }
                for c in 0..n {
                    if rel[b * n + c] && !rel[a * n + c] {
                        return Err(SpecError::NotTransitive {
                            a: valid[a].clone(),
                            b: valid[b].clone(),
                            c: valid[c].clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.insert("format_version".into(), FORMAT_VERSION.into());
        }
        v
    }

    pub fn from_json(v: serde_json::Value) -> Result<Self, SpecError> {
        let mut v = v;
        let version = v
            .get("format_version")
            .and_then(|x| x.as_u64())
            .unwrap_or(FORMAT_VERSION);
        if version != FORMAT_VERSION {
            return Err(SpecError::Version(version));
        }
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("format_version");
        }
        let spec: SequentialSpec =
            serde_json::from_value(v).map_err(|e| SpecError::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<Self, SpecError> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| SpecError::Format(e.to_string()))?;
        Self::from_json(v)
    }
}
