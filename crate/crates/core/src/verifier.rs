//! Bounded verification of CRDT designs against sequential specifications
//! by exhaustive enumeration of in-order operation logs over finite universes.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Env, EvalError, Sort, TermRef, TypeError};
use crate::grammar::{component_var, NODE_VAR};
use crate::lattice::{self, LatticeError, LatticeType, ScalarSort, Value};
use crate::seqspec::{
    Flags, OpValue, QueryValue, SequentialSpec, SpecError, FORMAT_VERSION, STATE_VAR,
};

mod designs;

pub use designs::{builtin_design, builtin_designs};

/// Default cap on prefix-query checks per candidate.
pub const DEFAULT_BUDGET: u64 = 5_000_000;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("design {what}: {source}")]
    Type {
        what: &'static str,
        source: TypeError,
    },
    #[error("design {what} has sort {got}, expected {expected}")]
    WrongSort {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("initial state {0} is not a value of the state type")]
    BadInit(String),
    #[error("evaluation failed at log index {index}: {source}")]
    Eval { index: usize, source: EvalError },
    #[error("transition at log index {index} produced {value}, outside the state type")]
    InvalidState { index: usize, value: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("log and node assignment differ in length ({0} vs {1})")]
    NodeAssignment(usize, usize),
    #[error("unsupported format_version {0}")]
    Version(u64),
    #[error("malformed design document: {0}")]
    Format(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub grammar_depth: Option<usize>,
    #[serde(default)]
    pub verified_log_bound: Option<usize>,
    #[serde(default)]
    pub verified_universe: Option<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
}

/// A candidate CRDT: the merge is always the join of `state_type`, and the
/// transition is `s ⊔ f_star(op, s, node)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrdtDesign {
    pub spec_name: String,
    pub state_type: LatticeType,
    pub init: Value,
    pub f_star: TermRef,
    pub query_star: TermRef,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default)]
    pub provenance: Provenance,
}

/// Variables naming the state: `s0, s1, …` for free tuples, else `state`.
pub fn state_vars(t: &LatticeType) -> Vec<(Arc<str>, Sort)> {
    match t {
        LatticeType::FreeTuple { elements } => elements
            .iter()
            .enumerate()
            .map(|(i, e)| (Arc::from(component_var(i)), Sort::carrier(e)))
            .collect(),
        t => vec![(Arc::from(STATE_VAR), Sort::carrier(t))],
    }
}

fn bind_state(env: &mut Env, t: &LatticeType, v: &Value) {
    match (t, v) {
        (LatticeType::FreeTuple { .. }, Value::Tuple(xs)) => {
            for (i, x) in xs.iter().enumerate() {
                env.bind(component_var(i), x.clone());
            }
        }
        _ => env.bind(STATE_VAR, v.clone()),
    }
}

/// The environment a query term is evaluated in.
pub fn query_bindings(
    spec: &SequentialSpec,
    state_type: &LatticeType,
    state: &Value,
    q: &[Value],
) -> Env {
    let mut env = Env::new();
    bind_state(&mut env, state_type, state);
    for (f, v) in spec.query_fields.iter().zip(q) {
        env.bind(f.name.as_str(), v.clone());
    }
    env
}

impl CrdtDesign {
    /// Typing environment of `f_star`. The state and the node id are only
    /// visible to non-idempotent transitions.
    pub fn transition_env(&self, spec: &SequentialSpec) -> Vec<(Arc<str>, Sort)> {
        let mut env: Vec<(Arc<str>, Sort)> = spec
            .op_signature()
            .iter()
            .map(|f| (Arc::from(f.name.as_str()), Sort::Scalar(f.sort)))
            .collect();
        if self.flags.non_idempotent {
            env.push((Arc::from(NODE_VAR), Sort::Scalar(ScalarSort::NodeID)));
            env.extend(state_vars(&self.state_type));
        }
        env
    }

    pub fn query_env(&self, spec: &SequentialSpec) -> Vec<(Arc<str>, Sort)> {
        let mut env = state_vars(&self.state_type);
        env.extend(
            spec.query_fields
                .iter()
                .map(|f| (Arc::from(f.name.as_str()), Sort::Scalar(f.sort))),
        );
        env
    }

    pub fn validate(&self, spec: &SequentialSpec) -> Result<(), VerifyError> {
        self.state_type.well_formed()?;
        if !lattice::validate(&self.state_type, &self.init) {
            return Err(VerifyError::BadInit(self.init.to_string()));
        }
        let carrier = Sort::carrier(&self.state_type);
        expr::check(&self.f_star, &carrier, &self.transition_env(spec)).map_err(|source| {
            VerifyError::Type {
                what: "f_star",
                source,
            }
        })?;
        let want = spec.query_sort()?;
        expr::check(&self.query_star, &want, &self.query_env(spec)).map_err(|source| {
            VerifyError::Type {
                what: "query_star",
                source,
            }
        })?;
        Ok(())
    }

    /// The `f_star` output for one operation, checked against the state type.
    pub fn delta(
        &self,
        spec: &SequentialSpec,
        state: &Value,
        op: &[Value],
        node: i64,
        index: usize,
    ) -> Result<Value, VerifyError> {
        let mut env = Env::new();
        spec.bind_op(&mut env, "", op);
        if self.flags.non_idempotent {
            env.bind(NODE_VAR, Value::Int(node));
            bind_state(&mut env, &self.state_type, state);
        }
        let d =
            expr::eval(&self.f_star, &env).map_err(|source| VerifyError::Eval { index, source })?;
        if !lattice::validate(&self.state_type, &d) {
            return Err(VerifyError::InvalidState {
                index,
                value: d.to_string(),
            });
        }
        Ok(d)
    }

    pub fn query(
        &self,
        spec: &SequentialSpec,
        state: &Value,
        q: &[Value],
    ) -> Result<Value, EvalError> {
        expr::eval(
            &self.query_star,
            &query_bindings(spec, &self.state_type, state, q),
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("design serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.insert("format_version".into(), FORMAT_VERSION.into());
        }
        v
    }

    pub fn from_json(mut v: serde_json::Value) -> Result<Self, VerifyError> {
        let version = v
            .get("format_version")
            .and_then(|x| x.as_u64())
            .unwrap_or(FORMAT_VERSION);
        if version != FORMAT_VERSION {
            return Err(VerifyError::Version(version));
        }
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("format_version");
        }
        serde_json::from_value(v).map_err(|e| VerifyError::Format(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, VerifyError> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| VerifyError::Format(e.to_string()))?;
        Self::from_json(v)
    }

    /// Pseudocode rendering of the design.
    pub fn render(&self, spec: &SequentialSpec) -> String {
        let state_names: Vec<String> = state_vars(&self.state_type)
            .iter()
            .map(|(n, _)| n.to_string())
            .collect();
        let state_pat = match &self.state_type {
            LatticeType::FreeTuple { .. } => format!("({})", state_names.join(", ")),
            _ => STATE_VAR.to_string(),
        };
        let mut op_args = vec![state_pat.clone()];
        op_args.extend(spec.op_signature().iter().map(|f| f.name.clone()));
        if self.flags.non_idempotent {
            op_args.push(NODE_VAR.to_string());
        }
        let mut q_args = vec![state_pat];
        q_args.extend(spec.query_fields.iter().map(|f| f.name.clone()));
        format!(
            "crdt {name} {{\n  state: {ty}\n  initial: {init}\n  merge(a, b) = a ⊔ b\n  operation({ops}) = {s} ⊔ {f}\n  query({qs}) = {q}\n}}",
            name = self.spec_name,
            ty = self.state_type,
            init = self.init,
            ops = op_args.join(", "),
            s = match &self.state_type {
                LatticeType::FreeTuple { .. } => format!("({})", state_names.join(", ")),
                _ => STATE_VAR.to_string(),
            },
            f = self.f_star,
            qs = q_args.join(", "),
            q = self.query_star,
        )
    }
}

impl fmt::Display for CrdtDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} over {} from {}: f* = {}, query* = {}",
            self.spec_name, self.state_type, self.init, self.f_star, self.query_star
        )
    }
}

/// Finite value domains standing in for unbounded quantification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Universe {
    /// Opaque values and clocks range over `1..=size`, plain integers over `0..size`.
    pub size: usize,
    /// Node ids range over `0..nodes`.
    pub nodes: usize,
    /// Enum values besides 0 and 1.
    #[serde(default)]
    pub enum_extra: Vec<i64>,
}

impl Universe {
    pub fn default_for(spec: &SequentialSpec, size: usize, nodes: usize) -> Self {
        let enum_extra = spec.constants().into_iter().filter(|c| *c > 1).collect();
        Universe {
            size: size.max(1),
            nodes: nodes.max(1),
            enum_extra,
        }
    }

    pub fn enlarge(&self, delta: usize) -> Self {
        Universe {
            size: self.size + delta,
            nodes: self.nodes + delta,
            enum_extra: self.enum_extra.clone(),
        }
    }

    pub fn values_for(&self, sort: ScalarSort) -> Vec<Value> {
        let n = self.size as i64;
        match sort {
            ScalarSort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            ScalarSort::Int => (0..n).map(Value::Int).collect(),
            ScalarSort::Opaque | ScalarSort::Clock => (1..=n).map(Value::Int).collect(),
            ScalarSort::Enum => {
                let mut xs = vec![0, 1];
                for c in &self.enum_extra {
                    if !xs.contains(c) {
                        xs.push(*c);
                    }
                }
                xs.sort();
                xs.into_iter().map(Value::Int).collect()
            }
            ScalarSort::NodeID => (0..self.nodes as i64).map(Value::Int).collect(),
        }
    }

    pub fn node_ids(&self) -> Vec<i64> {
        (0..self.nodes as i64).collect()
    }

    fn product(&self, sorts: &[ScalarSort]) -> Vec<Vec<Value>> {
        let mut out: Vec<Vec<Value>> = vec![vec![]];
        for s in sorts {
            let vals = self.values_for(*s);
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Every precondition-satisfying operation.
    pub fn op_space(&self, spec: &SequentialSpec) -> Result<Vec<OpValue>, SpecError> {
        let sorts: Vec<ScalarSort> = spec.op_signature().iter().map(|f| f.sort).collect();
        let mut out = Vec::new();
        for op in self.product(&sorts) {
            if spec.satisfies_precondition(&op)? {
                out.push(op);
            }
        }
        Ok(out)
    }

    /// Every query argument tuple, including values never written.
    pub fn query_space(&self, spec: &SequentialSpec) -> Vec<QueryValue> {
        let sorts: Vec<ScalarSort> = spec.query_fields.iter().map(|f| f.sort).collect();
        self.product(&sorts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub universe: usize,
    pub nodes: usize,
    pub log_bound: usize,
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bounded-verified (U={}, N={}, L={})",
            self.universe, self.nodes, self.log_bound
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub log: Vec<OpValue>,
    pub nodes: Vec<i64>,
    /// Length of the log prefix at which the answers differ.
    pub prefix_index: usize,
    pub query: QueryValue,
    pub expected: Value,
    pub actual: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass(Bounds),
    Fail(Counterexample),
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass(_))
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Verdict::Fail(c) => Some(c),
            _ => None,
        }
    }
}

pub fn log_in_order(spec: &SequentialSpec, log: &[OpValue]) -> Result<bool, SpecError> {
    for op in log {
        if !spec.satisfies_precondition(op)? {
            return Ok(false);
        }
    }
    for w in log.windows(2) {
        if !spec.ordered(&w[0], &w[1])? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Left fold of the CRDT transition over `log` from the design's initial state.
pub fn fold_crdt(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    log: &[OpValue],
    nodes: &[i64],
) -> Result<Value, VerifyError> {
    if nodes.len() != log.len() {
        return Err(VerifyError::NodeAssignment(log.len(), nodes.len()));
    }
    let mut s = design.init.clone();
    for (i, (op, node)) in log.iter().zip(nodes).enumerate() {
        let d = design.delta(spec, &s, op, *node, i)?;
        s = lattice::join(&design.state_type, &s, &d)?;
    }
    Ok(s)
}

/// Replays a log and compares the final answers for `query`. Returns the
/// counterexample when they differ.
pub fn replay(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    log: &[OpValue],
    nodes: &[i64],
    query: &[Value],
) -> Result<Option<Counterexample>, VerifyError> {
    let crdt = fold_crdt(spec, design, log, nodes)?;
    let seq = spec.run_sequential(log)?;
    let expected = spec.answer_query(&seq, query)?;
    let actual = design
        .query(spec, &crdt, query)
        .map_err(|source| VerifyError::Eval {
            index: log.len(),
            source,
        })?;
    Ok((expected != actual).then(|| Counterexample {
        log: log.to_vec(),
        nodes: nodes.to_vec(),
        prefix_index: log.len(),
        query: query.to_vec(),
        expected,
        actual,
    }))
}

/// Every in-order, valid log of length at most `bound`, shortest prefixes first
/// in depth-first order.
pub fn enumerate_logs(
    spec: &SequentialSpec,
    universe: &Universe,
    bound: usize,
) -> Result<Vec<Vec<OpValue>>, SpecError> {
    let ops = universe.op_space(spec)?;
    let follows = order_matrix(spec, &ops)?;
    let mut out = vec![vec![]];
    let mut stack: Vec<usize> = Vec::new();
    fn go(
        ops: &[OpValue],
        follows: &[Vec<usize>],
        bound: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<OpValue>>,
    ) {
        if stack.len() == bound {
            return;
        }
        let next: Vec<usize> = match stack.last() {
            Some(&last) => follows[last].clone(),
            None => (0..ops.len()).collect(),
        };
        for j in next {
            stack.push(j);
            out.push(stack.iter().map(|&i| ops[i].clone()).collect());
            go(ops, follows, bound, stack, out);
            stack.pop();
        }
    }
    go(&ops, &follows, bound, &mut stack, &mut out);
    Ok(out)
}

fn order_matrix(spec: &SequentialSpec, ops: &[OpValue]) -> Result<Vec<Vec<usize>>, SpecError> {
    let mut follows = vec![Vec::new(); ops.len()];
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            if spec.ordered(a, b)? {
                follows[i].push(j);
            }
        }
    }
    Ok(follows)
}

#[derive(Clone, Copy, Debug)]
struct Step {
    depth: u16,
    op: u32,
    node: u32,
    expect: u32,
}

/// The candidate-independent half of bounded checking: every in-order log
/// prefix with its node assignment and the sequential answers to every query.
/// Built once per spec, universe and bound, then shared across candidates.
#[derive(Debug)]
pub struct Obligations {
    pub spec: SequentialSpec,
    pub universe: Universe,
    pub log_bound: usize,
    ops: Vec<OpValue>,
    queries: Vec<QueryValue>,
    node_ids: Vec<i64>,
    root_expect: u32,
    steps: Vec<Step>,
    answers: Vec<Vec<Value>>,
}

impl Obligations {
    /// Fails with `Ok(Err(reason))` when the number of prefix-query checks
    /// would exceed `budget`.
    pub fn build(
        spec: &SequentialSpec,
        universe: &Universe,
        log_bound: usize,
        budget: u64,
    ) -> Result<Result<Obligations, String>, SpecError> {
        let ops = universe.op_space(spec)?;
        let follows = order_matrix(spec, &ops)?;
        let queries = universe.query_space(spec);
        let node_ids = if spec.flags.non_idempotent {
            universe.node_ids()
        } else {
            vec![0]
        };
        let mut b = Builder {
            spec,
            ops: &ops,
            follows: &follows,
            queries: &queries,
            fanout_nodes: node_ids.len() as u32,
            bound: log_bound,
            budget,
            checks: 0,
            steps: Vec::new(),
            answers: Vec::new(),
            by_answers: HashMap::new(),
            by_state: HashMap::new(),
        };
        let init = spec.initial_value()?;
        let root_expect = match b.expect(&init)? {
            Some(e) => e,
            None => return Ok(Err(b.exhausted())),
        };
        let mut path = Vec::new();
        if !b.walk(&init, &mut path)? {
            return Ok(Err(b.exhausted()));
        }
        let Builder { steps, answers, .. } = b;
        Ok(Ok(Obligations {
            spec: spec.clone(),
            universe: universe.clone(),
            log_bound,
            ops,
            queries,
            node_ids,
            root_expect,
            steps,
            answers,
        }))
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            universe: self.universe.size,
            nodes: self.universe.nodes,
            log_bound: self.log_bound,
        }
    }

    /// Number of non-empty log prefixes.
    pub fn prefix_count(&self) -> usize {
        self.steps.len()
    }

    pub fn check_count(&self) -> u64 {
        (self.steps.len() as u64 + 1) * self.queries.len() as u64
    }

    pub fn ops(&self) -> &[OpValue] {
        &self.ops
    }

    pub fn queries(&self) -> &[QueryValue] {
        &self.queries
    }

    /// Folds the design along every obligation in depth-first order, calling
    /// `visit(path, state, expect)` for each prefix until it returns `false`.
    fn walk_states(
        &self,
        design: &CrdtDesign,
        mut visit: impl FnMut(&[(u32, u32)], &Value, u32) -> Result<bool, VerifyError>,
    ) -> Result<bool, VerifyError> {
        let spec = &self.spec;
        let mut deltas: Vec<Option<Value>> = vec![None; self.ops.len()];
        let mut states: Vec<Value> = vec![design.init.clone()];
        let mut path: Vec<(u32, u32)> = Vec::new();
        if !visit(&path, &states[0], self.root_expect)? {
            return Ok(false);
        }
        for st in &self.steps {
            let depth = st.depth as usize;
            states.truncate(depth);
            path.truncate(depth - 1);
            path.push((st.op, st.node));
            let prev = &states[depth - 1];
            let op = &self.ops[st.op as usize];
            let delta = if design.flags.non_idempotent {
                design.delta(spec, prev, op, self.node_ids[st.node as usize], depth - 1)?
            } else {
                match &deltas[st.op as usize] {
                    Some(d) => d.clone(),
                    None => {
                        let d = design.delta(spec, prev, op, 0, depth - 1)?;
                        deltas[st.op as usize] = Some(d.clone());
                        d
                    }
                }
            };
            let next = lattice::join(&design.state_type, prev, &delta)?;
            if !visit(&path, &next, st.expect)? {
                return Ok(false);
            }
            states.push(next);
        }
        Ok(true)
    }

    fn answers_at(
        &self,
        design: &CrdtDesign,
        s: &Value,
        index: usize,
    ) -> Result<Vec<Value>, VerifyError> {
        self.queries
            .iter()
            .map(|q| {
                design
                    .query(&self.spec, s, q)
                    .map_err(|source| VerifyError::Eval { index, source })
            })
            .collect()
    }

    /// Checks a design against every obligation and returns the first
    /// mismatch in depth-first prefix order.
    pub fn check(&self, design: &CrdtDesign) -> Result<Verdict, VerifyError> {
        let mut memo: HashMap<Value, Arc<Vec<Value>>> = HashMap::new();
        let mut failure = None;
        self.walk_states(design, |path, s, expect| {
            let got = match memo.get(s) {
                Some(a) => a.clone(),
                None => {
                    let a = Arc::new(self.answers_at(design, s, path.len())?);
                    memo.insert(s.clone(), a.clone());
                    a
                }
            };
            failure = self.mismatch(&got, expect, path);
            Ok(failure.is_none())
        })?;
        Ok(match failure {
            Some(c) => Verdict::Fail(c),
            None => Verdict::Pass(self.bounds()),
        })
    }

    /// Distinct CRDT states reached by the design's transition and initial
    /// state, each with the sequential answers it must produce. Fails with a
    /// [`StateConflict`] when one state must answer two ways, which no query
    /// can satisfy.
    pub fn observe(
        &self,
        design: &CrdtDesign,
    ) -> Result<Result<ObservationTable, StateConflict>, VerifyError> {
        let mut index: HashMap<Value, usize> = HashMap::new();
        let mut entries: Vec<Observation> = Vec::new();
        let mut conflict = None;
        self.walk_states(design, |path, s, expect| match index.get(s) {
            Some(&i) if entries[i].expect != expect => {
                conflict = Some((i, path.to_vec(), expect));
                Ok(false)
            }
            Some(_) => Ok(true),
            None => {
                index.insert(s.clone(), entries.len());
                entries.push(Observation {
                    state: s.clone(),
                    expect,
                    path: path.to_vec(),
                });
                Ok(true)
            }
        })?;
        let Some((i, path, expect)) = conflict else {
            return Ok(Ok(ObservationTable { entries }));
        };
        let first = &entries[i];
        let (a, b) = (
            &self.answers[first.expect as usize],
            &self.answers[expect as usize],
        );
        let qi = (0..a.len())
            .find(|&q| a[q] != b[q])
            .expect("distinct answer vectors differ somewhere");
        let unzip = |p: &[(u32, u32)]| -> (Vec<OpValue>, Vec<i64>) {
            p.iter()
                .map(|&(o, n)| (self.ops[o as usize].clone(), self.node_ids[n as usize]))
                .unzip()
        };
        let (log_a, nodes_a) = unzip(&first.path);
        let (log_b, nodes_b) = unzip(&path);
        Ok(Err(StateConflict {
            query: self.queries[qi].clone(),
            first: (log_a, nodes_a, a[qi].clone()),
            second: (log_b, nodes_b, b[qi].clone()),
        }))
    }

    /// First table entry on which `design.query_star` disagrees with the spec.
    pub fn check_table(
        &self,
        table: &ObservationTable,
        design: &CrdtDesign,
    ) -> Result<Option<Counterexample>, VerifyError> {
        for e in &table.entries {
            let got = self.answers_at(design, &e.state, e.path.len())?;
            if let Some(c) = self.mismatch(&got, e.expect, &e.path) {
                return Ok(Some(c));
            }
        }
        Ok(None)
    }

    /// One example per table entry and query value, in table order.
    pub fn query_examples(
        &self,
        table: &ObservationTable,
        state_type: &LatticeType,
    ) -> Vec<QueryExample> {
        let mut out = Vec::with_capacity(table.entries.len() * self.queries.len());
        for (entry, e) in table.entries.iter().enumerate() {
            for (query, q) in self.queries.iter().enumerate() {
                out.push(QueryExample {
                    env: query_bindings(&self.spec, state_type, &e.state, q),
                    expected: self.answers[e.expect as usize][query].clone(),
                    entry,
                    query,
                });
            }
        }
        out
    }

    /// The counterexample witnessed by a query answering `actual` on `ex`.
    pub fn example_counterexample(
        &self,
        table: &ObservationTable,
        ex: &QueryExample,
        actual: Value,
    ) -> Counterexample {
        let path = &table.entries[ex.entry].path;
        Counterexample {
            log: path
                .iter()
                .map(|&(o, _)| self.ops[o as usize].clone())
                .collect(),
            nodes: path
                .iter()
                .map(|&(_, n)| self.node_ids[n as usize])
                .collect(),
            prefix_index: path.len(),
            query: self.queries[ex.query].clone(),
            expected: ex.expected.clone(),
            actual,
        }
    }

    /// Whether a log, node assignment and query lie within these bounds.
    pub fn covers(&self, log: &[OpValue], nodes: &[i64], query: &[Value]) -> bool {
        log.len() <= self.log_bound
            && log.iter().all(|o| self.ops.iter().any(|x| x == o))
            && nodes
                .iter()
                .all(|n| self.node_ids.contains(n) || !self.spec.flags.non_idempotent)
            && self.queries.iter().any(|q| q == query)
    }

    fn mismatch(&self, got: &[Value], expect: u32, path: &[(u32, u32)]) -> Option<Counterexample> {
        let want = &self.answers[expect as usize];
        let qi = (0..want.len()).find(|&i| want[i] != got[i])?;
        Some(Counterexample {
            log: path
                .iter()
                .map(|&(o, _)| self.ops[o as usize].clone())
                .collect(),
            nodes: path
                .iter()
                .map(|&(_, n)| self.node_ids[n as usize])
                .collect(),
            prefix_index: path.len(),
            query: self.queries[qi].clone(),
            expected: want[qi].clone(),
            actual: got[qi].clone(),
        })
    }
}

#[derive(Clone, Debug)]
struct Observation {
    state: Value,
    expect: u32,
    path: Vec<(u32, u32)>,
}

/// Two logs that lead a design to the same state while the spec answers
/// `query` differently after each. Entries are `(log, nodes, expected)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateConflict {
    pub query: QueryValue,
    pub first: (Vec<OpValue>, Vec<i64>, Value),
    pub second: (Vec<OpValue>, Vec<i64>, Value),
}

/// A query input reached by a design, with the answer the spec requires.
#[derive(Clone, Debug)]
pub struct QueryExample {
    pub env: Env,
    pub expected: Value,
    entry: usize,
    query: usize,
}

/// The output of [`Obligations::observe`].
#[derive(Clone, Debug)]
pub struct ObservationTable {
    entries: Vec<Observation>,
}

impl ObservationTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

struct Builder<'a> {
    spec: &'a SequentialSpec,
    ops: &'a [OpValue],
    follows: &'a [Vec<usize>],
    queries: &'a [QueryValue],
    fanout_nodes: u32,
    bound: usize,
    budget: u64,
    checks: u64,
    steps: Vec<Step>,
    answers: Vec<Vec<Value>>,
    by_answers: HashMap<Vec<Value>, u32>,
    by_state: HashMap<Value, u32>,
}

impl Builder<'_> {
    fn exhausted(&self) -> String {
        format!(
            "more than {} prefix-query checks at log bound {}",
            self.budget, self.bound
        )
    }

    /// Index of the answer vector for `state`, or `None` once over budget.
    fn expect(&mut self, state: &Value) -> Result<Option<u32>, SpecError> {
        self.checks += self.queries.len().max(1) as u64;
        if self.checks > self.budget {
            return Ok(None);
        }
        if let Some(&i) = self.by_state.get(state) {
            return Ok(Some(i));
        }
        let mut answers = Vec::with_capacity(self.queries.len());
        for q in self.queries {
            answers.push(self.spec.answer_query(state, q)?);
        }
        let next = self.answers.len() as u32;
        let i = *self.by_answers.entry(answers.clone()).or_insert(next);
        if i == next {
            self.answers.push(answers);
        }
        self.by_state.insert(state.clone(), i);
        Ok(Some(i))
    }

    fn walk(&mut self, state: &Value, path: &mut Vec<usize>) -> Result<bool, SpecError> {
        if path.len() == self.bound {
            return Ok(true);
        }
        let next: Vec<usize> = match path.last() {
            Some(&last) => self.follows[last].clone(),
            None => (0..self.ops.len()).collect(),
        };
        for j in next {
            let s = self.spec.apply(state, &self.ops[j])?;
            path.push(j);
            for node in 0..self.fanout_nodes {
                let expect = match self.expect(&s)? {
                    Some(e) => e,
                    None => return Ok(false),
                };
                self.steps.push(Step {
                    depth: path.len() as u16,
                    op: j as u32,
                    node,
                    expect,
                });
                if !self.walk(&s, path)? {
                    return Ok(false);
                }
            }
            path.pop();
        }
        Ok(true)
    }
}

/// Bounded verification with the default budget.
pub fn check_bounded(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    universe: &Universe,
    log_bound: usize,
) -> Result<Verdict, VerifyError> {
    check_bounded_with_budget(spec, design, universe, log_bound, DEFAULT_BUDGET)
}

pub fn check_bounded_with_budget(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    universe: &Universe,
    log_bound: usize,
    budget: u64,
) -> Result<Verdict, VerifyError> {
    match Obligations::build(spec, universe, log_bound, budget)? {
        Ok(obl) => obl.check(design),
        Err(reason) => Ok(Verdict::Inconclusive { reason }),
    }
}

fn for_each_permutation(
    items: &mut Vec<OpValue>,
    k: usize,
    f: &mut dyn FnMut(&[OpValue]) -> bool,
) -> bool {
    if k == items.len() {
        return f(items);
    }
    for i in k..items.len() {
        items.swap(k, i);
        let ok = for_each_permutation(items, k + 1, f);
        items.swap(k, i);
        if !ok {
            return false;
        }
    }
    true
}

/// Whether folding every permutation of every log gives equal states.
/// Meaningful for idempotent designs, whose transition ignores the state.
pub fn check_permutation_invariance(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    logs: &[Vec<OpValue>],
) -> Result<bool, VerifyError> {
    for log in logs {
        let nodes = vec![0; log.len()];
        let reference = fold_crdt(spec, design, log, &nodes)?;
        let mut err = None;
        let mut items = log.clone();
        let ok = for_each_permutation(&mut items, 0, &mut |perm| match fold_crdt(
            spec, design, perm, &nodes,
        ) {
            Ok(s) => lattice::semantic_eq(&design.state_type, &s, &reference).unwrap_or(false),
            Err(e) => {
                err = Some(e);
                false
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Shrinks a counterexample by deleting operations while the log stays
/// in order and some query still distinguishes the design from the spec.
pub fn minimize_counterexample(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    cex: &Counterexample,
    universe: &Universe,
) -> Result<Counterexample, VerifyError> {
    let queries = universe.query_space(spec);
    let failing = |log: &[OpValue],
                   nodes: &[i64],
                   prefer: &QueryValue|
     -> Result<Option<Counterexample>, VerifyError> {
        if !log_in_order(spec, log)? {
            return Ok(None);
        }
        if let Some(c) = replay(spec, design, log, nodes, prefer)? {
            return Ok(Some(c));
        }
        for q in &queries {
            if let Some(c) = replay(spec, design, log, nodes, q)? {
                return Ok(Some(c));
            }
        }
        Ok(None)
    };
    let mut best = cex.clone();
    best.log.truncate(cex.prefix_index);
    best.nodes.truncate(cex.prefix_index);
    best = failing(&best.log, &best.nodes, &best.query)?.unwrap_or(best);
    'shrink: loop {
        for i in 0..best.log.len() {
            let mut log = best.log.clone();
            let mut nodes = best.nodes.clone();
            log.remove(i);
            nodes.remove(i);
            if let Some(c) = failing(&log, &nodes, &best.query)? {
                best = c;
                continue 'shrink;
            }
        }
        return Ok(best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspec::builtin_benchmark;

    fn op(add: i64, v: i64) -> OpValue {
        vec![Value::Int(add), Value::Int(v)]
    }

    #[test]
    fn universe_domains() {
        let spec = builtin_benchmark("add-wins-set").unwrap();
        let u = Universe::default_for(&spec, 3, 2);
        assert_eq!(
            u.values_for(ScalarSort::Clock),
            vec![Value::Int(1), Value::Int(2), Value::Int(3)]
        );
        assert_eq!(
            u.values_for(ScalarSort::NodeID),
            vec![Value::Int(0), Value::Int(1)]
        );
        assert_eq!(u.op_space(&spec).unwrap().len(), 2 * 3 * 3);
        assert_eq!(u.query_space(&spec).len(), 3);
        assert_eq!(u.enlarge(1).size, 4);
    }

    #[test]
    fn log_order() {
        let spec = builtin_benchmark("two-phase-set").unwrap();
        assert!(log_in_order(&spec, &[op(1, 1), op(0, 1)]).unwrap());
        assert!(!log_in_order(&spec, &[op(0, 1), op(1, 1)]).unwrap());
        assert!(log_in_order(&spec, &[]).unwrap());
    }

    #[test]
    fn obligations_match_log_enumeration() {
        let spec = builtin_benchmark("two-phase-set").unwrap();
        let u = Universe::default_for(&spec, 2, 2);
        let obl = Obligations::build(&spec, &u, 3, DEFAULT_BUDGET)
            .unwrap()
            .unwrap();
        let logs = enumerate_logs(&spec, &u, 3).unwrap();
        assert_eq!(obl.prefix_count() + 1, logs.len());
    }

    #[test]
    fn budget_yields_inconclusive() {
        let spec = builtin_benchmark("two-phase-set").unwrap();
        let design = builtin_design("two-phase-set-map").unwrap();
        let u = Universe::default_for(&spec, 3, 2);
        let v = check_bounded_with_budget(&spec, &design, &u, 4, 100).unwrap();
        assert!(matches!(v, Verdict::Inconclusive { .. }));
    }
}
