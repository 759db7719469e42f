//! Candidate enumeration: state types, typed terms and initial states.
//!
//! Terms are built bottom-up by exact depth and memoized per goal sort.
//! Streams handed to the synthesizer are ordered by size, which keeps the
//! first verified design small and makes the search order reproducible.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::Serialize;

use crate::expr::{self, build::*, Env, Reducer, Sort, Term, TermRef};
use crate::lattice::{self, LatticeType, ScalarSort, Value};
use crate::seqspec::{Flags, SequentialSpec};

/// Variable holding the replica's node id in non-idempotent transitions.
pub const NODE_VAR: &str = "node";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    StateTransition,
    Query,
    InitialState,
}

#[derive(Clone, Debug)]
pub struct GrammarConfig {
    pub depth: usize,
    pub constants: Vec<i64>,
    pub flags: Flags,
    pub role: Role,
    /// Largest `FreeTuple` arity produced by state enumeration.
    pub max_arity: usize,
}

impl GrammarConfig {
    pub fn new(depth: usize, role: Role) -> Self {
        GrammarConfig {
            depth,
            constants: vec![],
            flags: Flags::default(),
            role,
            max_arity: 2,
        }
    }

    pub fn for_spec(spec: &SequentialSpec, depth: usize, role: Role) -> Self {
        GrammarConfig {
            depth,
            constants: spec.constants(),
            flags: spec.flags,
            role,
            max_arity: 2,
        }
    }
}

// ---------------------------------------------------------------------------
// State types

/// Scalar sorts admitted in each position of a state type.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateSorts {
    pub max_bases: Vec<ScalarSort>,
    pub set_elems: Vec<ScalarSort>,
    pub map_keys: Vec<ScalarSort>,
}

impl StateSorts {
    /// Derives positions from the sorts a spec mentions. Booleans and enums
    /// are not used as set elements or map keys: a collection indexed by a
    /// finite enum is a tuple in disguise.
    pub fn from_sorts(sorts: &[ScalarSort]) -> Self {
        let mut s = StateSorts::default();
        for &sort in sorts {
            if matches!(
                sort,
                ScalarSort::Int | ScalarSort::Opaque | ScalarSort::Clock
            ) {
                s.max_bases.push(sort);
            }
            if !matches!(sort, ScalarSort::Bool | ScalarSort::Enum) {
                s.set_elems.push(sort);
                s.map_keys.push(sort);
            }
        }
        for v in [&mut s.max_bases, &mut s.set_elems, &mut s.map_keys] {
            v.sort();
            v.dedup();
        }
        s
    }

    pub fn for_spec(spec: &SequentialSpec) -> Self {
        Self::from_sorts(&spec.scalar_sorts())
    }
}

fn scalar_rank(s: ScalarSort) -> usize {
    ScalarSort::ALL.iter().position(|x| *x == s).unwrap()
}

/// Total order on state types: depth, then size, then constructor, then
/// components.
pub fn state_type_key(t: &LatticeType) -> Vec<usize> {
    let mut key = vec![t.depth(), t.size()];
    fn rest(t: &LatticeType, key: &mut Vec<usize>) {
        match t {
            LatticeType::OrBool => key.push(0),
            LatticeType::NegBool => key.push(1),
            LatticeType::MaxInt { base } => key.extend([2, scalar_rank(*base)]),
            LatticeType::LSet { elem } => key.extend([3, scalar_rank(*elem)]),
            LatticeType::FreeTuple { elements } => {
                key.extend([4, elements.len()]);
                for e in elements {
                    key.extend(state_type_key(e));
                }
            }
            LatticeType::LexProduct { first, second } => {
                key.push(5);
                key.extend(state_type_key(first));
                key.extend(state_type_key(second));
            }
            LatticeType::LMap { key: k, value } => {
                key.extend([6, scalar_rank(*k)]);
                key.extend(state_type_key(value));
            }
        }
    }
    rest(t, &mut key);
    key
}

/// Non-top lattices of depth at most `depth`.
fn element_types(depth: usize, sorts: &StateSorts) -> Vec<LatticeType> {
    let mut out = vec![LatticeType::OrBool, LatticeType::NegBool];
    if depth >= 2 {
        out.extend(sorts.max_bases.iter().map(|b| LatticeType::max_int(*b)));
        out.extend(sorts.set_elems.iter().map(|e| LatticeType::set(*e)));
        let inner = element_types(depth - 1, sorts);
        for k in &sorts.map_keys {
            out.extend(inner.iter().map(|v| LatticeType::map(*k, v.clone())));
        }
        for a in &inner {
            for b in &inner {
                out.push(LatticeType::lex(a.clone(), b.clone()));
            }
        }
    }
    out.sort_by_cached_key(state_type_key);
    out.dedup();
    out
}

/// Every state type of depth at most `depth`, in search order. `FreeTuple`
/// components are taken as multisets since reordering components yields an
/// isomorphic design.
pub fn enumerate_state_types(
    depth: usize,
    sorts: &StateSorts,
    max_arity: usize,
) -> Vec<LatticeType> {
    let mut out = element_types(depth, sorts);
    if depth >= 2 {
        let inner = element_types(depth - 1, sorts);
        let mut stack: Vec<(Vec<usize>, usize)> = vec![(vec![], 0)];
        while let Some((chosen, from)) = stack.pop() {
            if chosen.len() >= 2 {
                out.push(LatticeType::free(
                    chosen.iter().map(|&i| inner[i].clone()).collect(),
                ));
            }
            if chosen.len() < max_arity {
                for i in from..inner.len() {
                    let mut next = chosen.clone();
                    next.push(i);
                    stack.push((next, i));
                }
            }
        }
    }
    out.sort_by_cached_key(state_type_key);
    out
}

// ---------------------------------------------------------------------------
// Initial states

fn leaf_options(t: &LatticeType, constants: &[i64]) -> Vec<Value> {
    match t {
        LatticeType::OrBool => vec![Value::Bool(false), Value::Bool(true)],
        LatticeType::NegBool => vec![Value::Bool(true), Value::Bool(false)],
        LatticeType::MaxInt { .. } => {
            let mut xs = vec![0, 1];
            xs.extend(constants.iter().copied().filter(|c| *c >= 0));
            xs.dedup();
            let mut seen = HashSet::new();
            xs.into_iter()
                .filter(|x| seen.insert(*x))
                .map(Value::Int)
                .collect()
        }
        LatticeType::LSet { .. } | LatticeType::LMap { .. } => vec![lattice::bottom(t)],
        LatticeType::LexProduct { first, second } => product_values(&[
            leaf_options(first, constants),
            leaf_options(second, constants),
        ]),
        LatticeType::FreeTuple { elements } => product_values(
            &elements
                .iter()
                .map(|e| leaf_options(e, constants))
                .collect::<Vec<_>>(),
        ),
    }
}

fn product_values(options: &[Vec<Value>]) -> Vec<Value> {
    let mut out: Vec<Vec<Value>> = vec![vec![]];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut p = prefix.clone();
                    p.push(o.clone());
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Value::Tuple).collect()
}

/// Bottom first, then shallow variants with small literals at the leaves.
/// Sets and maps only start empty.
pub fn enumerate_initial_states(cfg: &GrammarConfig, t: &LatticeType) -> Vec<Value> {
    let mut out = leaf_options(t, &cfg.constants);
    let bottom = lattice::bottom(t);
    out.retain(|v| *v != bottom);
    out.insert(0, bottom);
    out
}

// ---------------------------------------------------------------------------
// Terms

/// A goal sort, optionally refined by the lattice the value will be joined
/// in. The lattice enables map-join productions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Goal {
    pub sort: Sort,
    pub lattice: Option<LatticeType>,
}

impl Goal {
    pub fn sort(sort: Sort) -> Self {
        Goal {
            sort: sort.normalize(),
            lattice: None,
        }
    }

    pub fn lattice(t: &LatticeType) -> Self {
        Goal {
            sort: Sort::carrier(t),
            lattice: Some(t.clone()),
        }
    }

    fn child(sort: &Sort, lattice: Option<&LatticeType>) -> Self {
        Goal {
            sort: sort.clone(),
            lattice: lattice.cloned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cand {
    pub term: TermRef,
    pub size: usize,
    pub depth: usize,
}

impl Cand {
    fn new(term: TermRef) -> Self {
        Cand {
            size: term.size(),
            depth: term.depth(),
            term,
        }
    }
}

type Bank = Arc<Vec<Cand>>;

/// Bottom-up term enumerator for one typing environment.
#[derive(Debug)]
pub struct TermGrammar {
    vars: Vec<(TermRef, Sort)>,
    /// Non-idempotent transitions read state only as `path[node, default=c]`.
    reads: Vec<(TermRef, Sort)>,
    reductions: Vec<(TermRef, Reducer, Sort)>,
    constants: Vec<i64>,
    eq_sorts: Vec<ScalarSort>,
    set_sources: Vec<ScalarSort>,
    map_sources: Vec<(ScalarSort, Sort)>,
    tuple_sources: Vec<Vec<Sort>>,
    allow_map_join: bool,
    exact: HashMap<(Goal, usize), Bank>,
    upto: HashMap<(Goal, usize), Bank>,
    closed_seen: HashMap<Sort, HashSet<Value>>,
    examples: Option<Arc<[Env]>>,
    behaviors: HashMap<Goal, HashSet<Fingerprint>>,
}

fn add_source_sort(
    s: &Sort,
    eq: &mut Vec<ScalarSort>,
    sets: &mut Vec<ScalarSort>,
    maps: &mut Vec<(ScalarSort, Sort)>,
    tuples: &mut Vec<Vec<Sort>>,
) {
    fn push<T: PartialEq>(v: &mut Vec<T>, x: T) {
        if !v.contains(&x) {
            v.push(x);
        }
    }
    match s {
        Sort::Scalar(x) => push(eq, *x),
        Sort::SetOf(e) => {
            push(eq, *e);
            push(sets, *e);
        }
        Sort::MapOf(k, v) => {
            push(eq, *k);
            push(maps, (*k, (**v).clone()));
            add_source_sort(v, eq, sets, maps, tuples);
        }
        Sort::TupleOf(xs) => {
            push(tuples, xs.clone());
            for x in xs {
                add_source_sort(x, eq, sets, maps, tuples);
            }
        }
        Sort::Lattice(t) => add_source_sort(&Sort::carrier(t), eq, sets, maps, tuples),
    }
}

impl TermGrammar {
    /// A grammar over plain variables.
    pub fn new(vars: &[(Arc<str>, Sort)], constants: &[i64]) -> Self {
        let mut g = TermGrammar {
            vars: vars
                .iter()
                .map(|(n, s)| (Arc::new(Term::Var(n.clone())), s.normalize()))
                .collect(),
            reads: vec![],
            reductions: vec![],
            constants: constants.to_vec(),
            eq_sorts: vec![],
            set_sources: vec![],
            map_sources: vec![],
            tuple_sources: vec![],
            allow_map_join: true,
            exact: HashMap::new(),
            upto: HashMap::new(),
            closed_seen: HashMap::new(),
            examples: None,
            behaviors: HashMap::new(),
        };
        g.refresh_sources();
        g
    }

    fn refresh_sources(&mut self) {
        let (mut eq, mut sets, mut maps, mut tuples) = (vec![], vec![], vec![], vec![]);
        for (_, s) in &self.vars {
            add_source_sort(s, &mut eq, &mut sets, &mut maps, &mut tuples);
        }
        let extra = self
            .reads
            .iter()
            .map(|(_, s)| s)
            .chain(self.reductions.iter().map(|(_, _, s)| s));
        for s in extra {
            add_source_sort(s, &mut eq, &mut sets, &mut maps, &mut tuples);
        }
        eq.sort();
        self.eq_sorts = eq;
        self.set_sources = sets;
        self.map_sources = maps;
        self.tuple_sources = tuples;
    }

    /// Grammar for a CRDT state transition over `state_type`.
    pub fn for_transition(spec: &SequentialSpec, state_type: &LatticeType) -> Self {
        let vars: Vec<(Arc<str>, Sort)> = spec
            .op_signature()
            .iter()
            .map(|f| (Arc::from(f.name.as_str()), Sort::Scalar(f.sort)))
            .collect();
        let mut g = TermGrammar::new(&vars, &spec.constants());
        if spec.flags.non_idempotent {
            g.vars
                .push((var(NODE_VAR), Sort::Scalar(ScalarSort::NodeID)));
            for (path, t) in state_paths(state_type) {
                if let LatticeType::LMap {
                    key: ScalarSort::NodeID,
                    value,
                } = &t
                {
                    g.reads.push((path, Sort::carrier(value)));
                }
            }
            g.refresh_sources();
        }
        g
    }

    /// Grammar for a CRDT query over `state_type`.
    pub fn for_query(spec: &SequentialSpec, state_type: &LatticeType) -> Self {
        let mut vars: Vec<(Arc<str>, Sort)> = Vec::new();
        match state_type {
            LatticeType::FreeTuple { elements } => {
                for (i, e) in elements.iter().enumerate() {
                    vars.push((component_var(i).into(), Sort::carrier(e)));
                }
            }
            t => vars.push((crate::seqspec::STATE_VAR.into(), Sort::carrier(t))),
        }
        vars.extend(
            spec.query_fields
                .iter()
                .map(|f| (Arc::from(f.name.as_str()), Sort::Scalar(f.sort))),
        );
        let mut g = TermGrammar::new(&vars, &spec.constants());
        g.allow_map_join = false;
        for (path, t) in state_paths(state_type) {
            if let LatticeType::LMap { value, .. } = &t {
                let vs = Sort::carrier(value);
                if spec.flags.non_idempotent {
                    if vs == Sort::INT {
                        g.reductions.push((path.clone(), Reducer::Sum, Sort::INT));
                    }
                    if vs == Sort::BOOL {
                        g.reductions
                            .push((path.clone(), Reducer::OrAll, Sort::BOOL));
                        g.reductions
                            .push((path.clone(), Reducer::AndAll, Sort::BOOL));
                    }
                }
                if let LatticeType::MaxInt { base } = &**value {
                    g.reductions.push((
                        path.clone(),
                        Reducer::JoinAll((**value).clone()),
                        Sort::Scalar(*base),
                    ));
                }
            }
        }
        g.refresh_sources();
        g
    }

    /// Keeps only the smallest term of each behavior on `envs`, and drops
    /// terms that fail to evaluate on one. Every term built from kept terms
    /// agrees on `envs` with one built from the originals, so a search over
    /// the pruned banks finds a term matching given answers on `envs`
    /// whenever the full grammar has one, at the same depth.
    pub fn with_examples(mut self, envs: Vec<Env>) -> Self {
        self.examples = Some(envs.into());
        self
    }

    fn literals(&self, s: &Sort) -> Vec<TermRef> {
        match s {
            Sort::Scalar(ScalarSort::Bool) => vec![ff(), tt()],
            Sort::Scalar(ScalarSort::Int) | Sort::Scalar(ScalarSort::Enum) => {
                let mut xs = vec![0, 1];
                for c in &self.constants {
                    if !xs.contains(c) && (*s == Sort::INT || *c >= 0) {
                        xs.push(*c);
                    }
                }
                xs.into_iter().map(int).collect()
            }
            Sort::Scalar(ScalarSort::Clock) => vec![int(0)],
            _ => vec![],
        }
    }

    /// Defaults for map lookups: literals, the zero of opaque-like sorts,
    /// and empty collections.
    fn defaults(&self, s: &Sort) -> Vec<TermRef> {
        match s {
            Sort::Scalar(ScalarSort::Opaque) | Sort::Scalar(ScalarSort::NodeID) => vec![int(0)],
            Sort::Scalar(_) => self.literals(s),
            Sort::SetOf(e) => vec![empty_set(*e)],
            Sort::MapOf(k, v) => vec![empty_map(*k, (**v).clone())],
            _ => vec![],
        }
    }

    /// All terms for `goal` of depth at most `depth`, ordered by size.
    pub fn terms(&mut self, goal: &Goal, depth: usize) -> Bank {
        if depth == 0 {
            return Arc::new(vec![]);
        }
        let key = (goal.clone(), depth);
        if let Some(b) = self.upto.get(&key) {
            return b.clone();
        }
        let mut all: Vec<Cand> = (1..=depth)
            .flat_map(|d| self.exact_terms(goal, d).to_vec())
            .collect();
        all.sort_by_key(|c| c.size);
        let bank = Arc::new(all);
        self.upto.insert(key, bank.clone());
        bank
    }

    /// Terms for `goal` of depth exactly `depth`, ordered by size.
    pub fn terms_at(&mut self, goal: &Goal, depth: usize) -> Bank {
        if depth == 0 {
            return Arc::new(vec![]);
        }
        self.exact_terms(goal, depth)
    }

    fn exact_terms(&mut self, goal: &Goal, depth: usize) -> Bank {
        let key = (goal.clone(), depth);
        if let Some(b) = self.exact.get(&key) {
            return b.clone();
        }
        let mut raw = self.build(goal, depth);
        if let Some(envs) = self.examples.clone() {
            raw.sort_by_key(|t| t.size());
            let seen = self.behaviors.entry(goal.clone()).or_default();
            let bank: Vec<Cand> = raw
                .into_iter()
                .filter(|t| fingerprint(t, &envs).is_some_and(|f| seen.insert(f)))
                .map(Cand::new)
                .collect();
            let bank = Arc::new(bank);
            self.exact.insert(key, bank.clone());
            return bank;
        }
        let seen = self.closed_seen.entry(goal.sort.clone()).or_default();
        let mut out = Vec::with_capacity(raw.len());
        for t in raw {
            if t.is_closed() {
                if let Ok(v) = expr::eval(&t, &Env::new()) {
                    if !seen.insert(v) && depth > 1 {
                        continue;
                    }
                }
            }
            out.push(Cand::new(t));
        }
        let bank = Arc::new(out);
        self.exact.insert(key, bank.clone());
        bank
    }

    fn build(&mut self, goal: &Goal, d: usize) -> Vec<TermRef> {
        let s = goal.sort.clone();
        let mut out: Vec<TermRef> = Vec::new();
        if d == 1 {
            out.extend(self.literals(&s));
            match &s {
                Sort::SetOf(e) => out.push(empty_set(*e)),
                Sort::MapOf(k, v) => out.push(empty_map(*k, (**v).clone())),
                _ => {}
            }
            out.extend(
                self.vars
                    .iter()
                    .filter(|(_, vs)| *vs == s)
                    .map(|(t, _)| t.clone()),
            );
            return out;
        }
        let below = d - 1;

        match &s {
            Sort::Scalar(ScalarSort::Bool) => {
                let bools = self.terms(&Goal::sort(Sort::BOOL), below);
                for a in bools.iter().filter(|a| a.depth == below) {
                    if !matches!(&*a.term, Term::Not(_)) && !a.term.is_closed() {
                        out.push(not(a.term.clone()));
                    }
                }
                for (i, a) in bools.iter().enumerate() {
                    for b in &bools[i + 1..] {
                        if a.depth.max(b.depth) != below
                            || a.term.is_closed()
                            || b.term.is_closed()
                            || a.term == b.term
                        {
                            continue;
                        }
                        out.push(and(a.term.clone(), b.term.clone()));
                        out.push(or(a.term.clone(), b.term.clone()));
                    }
                }
                for sort in self.eq_sorts.clone() {
                    let xs = self.terms(&Goal::sort(Sort::Scalar(sort)), below);
                    for (i, a) in xs.iter().enumerate() {
                        for (j, b) in xs.iter().enumerate() {
                            if i == j || a.depth.max(b.depth) != below || a.term == b.term {
                                continue;
                            }
                            if a.term.is_closed() && b.term.is_closed() {
                                continue;
                            }
                            if i > j {
                                out.push(eq(a.term.clone(), b.term.clone()));
                            }
                            if sort.supports_ordering() {
                                out.push(gt(a.term.clone(), b.term.clone()));
                                out.push(geq(a.term.clone(), b.term.clone()));
                            }
                        }
                    }
                }
                for e in self.set_sources.clone() {
                    let elems = self.terms(&Goal::sort(Sort::Scalar(e)), below);
                    let sets = self.terms(&Goal::sort(Sort::SetOf(e)), below);
                    for x in elems.iter() {
                        for st in sets.iter() {
                            if x.depth.max(st.depth) != below
                                || matches!(&*st.term, Term::EmptySet(_))
                            {
                                continue;
                            }
                            out.push(member(x.term.clone(), st.term.clone()));
                        }
                    }
                    for a in sets.iter() {
                        for b in sets.iter() {
                            if a.term == b.term
                                || a.depth.max(b.depth) != below
                                || matches!(&*a.term, Term::EmptySet(_))
                                || matches!(&*b.term, Term::EmptySet(_))
                            {
                                continue;
                            }
                            out.push(subset(a.term.clone(), b.term.clone()));
                        }
                    }
                }
            }
            Sort::Scalar(sort) => {
                let xs = self.terms(&Goal::sort(s.clone()), below);
                if sort.supports_arithmetic() {
                    let zero = |t: &Term| matches!(t, Term::Int(0));
                    for (i, a) in xs.iter().enumerate() {
                        for (j, b) in xs.iter().enumerate() {
                            if a.depth.max(b.depth) != below || zero(&a.term) || zero(&b.term) {
                                continue;
                            }
                            if i >= j {
                                out.push(add(a.term.clone(), b.term.clone()));
                            }
                            if i != j {
                                out.push(sub(a.term.clone(), b.term.clone()));
                            }
                        }
                    }
                }
                let conds = self.terms(&Goal::sort(Sort::BOOL), below);
                for c in conds.iter().filter(|c| !c.term.is_closed()) {
                    for a in xs.iter() {
                        for b in xs.iter() {
                            if a.term == b.term || c.depth.max(a.depth).max(b.depth) != below {
                                continue;
                            }
                            out.push(ite(c.term.clone(), a.term.clone(), b.term.clone()));
                        }
                    }
                }
            }
            Sort::SetOf(e) => {
                let elems = self.terms(&Goal::sort(Sort::Scalar(*e)), below);
                out.extend(
                    elems
                        .iter()
                        .filter(|x| x.depth == below)
                        .map(|x| singleton(x.term.clone())),
                );
                let sets = self.terms(goal, below);
                let empty = |t: &Term| matches!(t, Term::EmptySet(_));
                for (i, a) in sets.iter().enumerate() {
                    for (j, b) in sets.iter().enumerate() {
                        if i == j
                            || a.depth.max(b.depth) != below
                            || empty(&a.term)
                            || empty(&b.term)
                        {
                            continue;
                        }
                        if i < j {
                            out.push(union(a.term.clone(), b.term.clone()));
                        }
                        out.push(diff(a.term.clone(), b.term.clone()));
                    }
                }
            }
            Sort::MapOf(k, v) => {
                let value_lattice = match &goal.lattice {
                    Some(LatticeType::LMap { value, .. }) => Some((**value).clone()),
                    _ => None,
                };
                let keys = self.terms(&Goal::sort(Sort::Scalar(*k)), below);
                let vals = self.terms(&Goal::child(v, value_lattice.as_ref()), below);
                for key in keys.iter() {
                    for val in vals.iter() {
                        if key.depth.max(val.depth) == below {
                            out.push(singleton_map(key.term.clone(), val.term.clone()));
                        }
                    }
                }
                if let (true, Some(vt)) = (self.allow_map_join, value_lattice) {
                    let maps = self.terms(goal, below);
                    let empty = |t: &Term| matches!(t, Term::EmptyMap(..));
                    for (i, a) in maps.iter().enumerate() {
                        for b in &maps[i + 1..] {
                            if a.depth.max(b.depth) != below || empty(&a.term) || empty(&b.term) {
                                continue;
                            }
                            out.push(map_join(vt.clone(), a.term.clone(), b.term.clone()));
                        }
                    }
                }
            }
            Sort::TupleOf(xs) => {
                let lattices: Vec<Option<LatticeType>> = match &goal.lattice {
                    Some(LatticeType::LexProduct { first, second }) => {
                        vec![Some((**first).clone()), Some((**second).clone())]
                    }
                    Some(LatticeType::FreeTuple { elements }) => {
                        elements.iter().cloned().map(Some).collect()
                    }
                    _ => vec![None; xs.len()],
                };
                let banks: Vec<Bank> = xs
                    .iter()
                    .zip(&lattices)
                    .map(|(x, l)| self.terms(&Goal::child(x, l.as_ref()), below))
                    .collect();
                let mut combos: Vec<(Vec<TermRef>, usize)> = vec![(vec![], 0)];
                for bank in &banks {
                    combos = combos
                        .into_iter()
                        .flat_map(|(prefix, dmax)| {
                            bank.iter().map(move |c| {
                                let mut p = prefix.clone();
                                p.push(c.term.clone());
                                (p, dmax.max(c.depth))
                            })
                        })
                        .collect();
                }
                out.extend(
                    combos
                        .into_iter()
                        .filter(|(_, dm)| *dm == below)
                        .map(|(p, _)| tuple(p)),
                );
            }
            Sort::Lattice(_) => unreachable!("goals are normalized"),
        }

        // Elimination forms shared by every goal sort.
        for (k, v) in self.map_sources.clone() {
            if v != s {
                continue;
            }
            let maps = self.terms(&Goal::sort(Sort::map_of(k, v.clone())), below);
            let keys = self.terms(&Goal::sort(Sort::Scalar(k)), below);
            let defaults = self.defaults(&v);
            for m in maps.iter() {
                if matches!(&*m.term, Term::EmptyMap(..) | Term::SingletonMap(..)) {
                    continue;
                }
                for key in keys.iter() {
                    if m.depth.max(key.depth) != below {
                        continue;
                    }
                    for dflt in &defaults {
                        out.push(get(m.term.clone(), key.term.clone(), dflt.clone()));
                    }
                }
            }
        }
        for xs in self.tuple_sources.clone() {
            let tuples = self.terms(&Goal::sort(Sort::TupleOf(xs.clone())), below);
            for (i, x) in xs.iter().enumerate() {
                if *x != s {
                    continue;
                }
                for t in tuples
                    .iter()
                    .filter(|t| t.depth == below && !matches!(&*t.term, Term::TupleMake(_)))
                {
                    out.push(nth(t.term.clone(), i));
                }
            }
        }
        for (path, v) in self.reads.clone() {
            if v == s && path.depth() + 1 == d {
                for dflt in self.defaults(&v) {
                    out.push(get(path.clone(), var(NODE_VAR), dflt));
                }
            }
        }
        for (path, r, result) in self.reductions.clone() {
            if result == s && path.depth() + 1 == d {
                out.push(reduce(path.clone(), r.clone()));
            }
        }
        out
    }

    /// Candidate counts per exact depth, for diagnostics.
    pub fn stats(&mut self, goal: &Goal, depth: usize) -> Vec<usize> {
        (1..=depth)
            .map(|d| self.exact_terms(goal, d).len())
            .collect()
    }
}

/// Variable naming the `i`-th component of a `FreeTuple` state.
pub fn component_var(i: usize) -> String {
    format!("s{i}")
}

/// Access paths into a state value, with the lattice found there. Tuple
/// states expose their components; maps are not entered.
pub fn state_paths(state_type: &LatticeType) -> Vec<(TermRef, LatticeType)> {
    fn walk(path: TermRef, t: &LatticeType, out: &mut Vec<(TermRef, LatticeType)>) {
        out.push((path.clone(), t.clone()));
        if let LatticeType::LexProduct { first, second } = t {
            walk(nth(path.clone(), 0), first, out);
            walk(nth(path, 1), second, out);
        }
    }
    let mut out = Vec::new();
    match state_type {
        LatticeType::FreeTuple { elements } => {
            for (i, e) in elements.iter().enumerate() {
                walk(var(&component_var(i)), e, &mut out);
            }
        }
        t => walk(var(crate::seqspec::STATE_VAR), t, &mut out),
    }
    out
}

/// Enumerates well-sorted terms of `result_sort` up to `cfg.depth`, by size.
pub fn enumerate_terms(
    cfg: &GrammarConfig,
    env_sorts: &[(Arc<str>, Sort)],
    result_sort: &Sort,
) -> Vec<TermRef> {
    let mut g = TermGrammar::new(env_sorts, &cfg.constants);
    g.terms(&Goal::sort(result_sort.clone()), cfg.depth)
        .iter()
        .map(|c| c.term.clone())
        .collect()
}

// ---------------------------------------------------------------------------
// Size-ordered products

/// Enumerates index tuples over several size-sorted lists in nondecreasing
/// order of total size. Work is proportional to the prefix consumed.
pub struct SizedProduct {
    buckets: Vec<Vec<(usize, std::ops::Range<usize>)>>,
    total: usize,
    max_total: usize,
    plans: Vec<Vec<usize>>,
    plan: usize,
    odometer: Vec<usize>,
    fresh_plan: bool,
    started: bool,
}

impl SizedProduct {
    /// `sizes[i]` holds the sizes of list `i` in nondecreasing order.
    pub fn new(sizes: &[Vec<usize>]) -> Self {
        let buckets: Vec<Vec<(usize, std::ops::Range<usize>)>> = sizes
            .iter()
            .map(|list| {
                let mut out: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
                for (i, &s) in list.iter().enumerate() {
                    match out.last_mut() {
                        Some((size, r)) if *size == s => r.end = i + 1,
                        _ => out.push((s, i..i + 1)),
                    }
                }
                out
            })
            .collect();
        let empty = buckets.iter().any(|b| b.is_empty());
        let min_total = buckets.iter().map(|b| b.first().map_or(0, |x| x.0)).sum();
        let max_total = if empty {
            0
        } else {
            buckets.iter().map(|b| b.last().unwrap().0).sum()
        };
        SizedProduct {
            total: if empty { 1 } else { min_total },
            max_total,
            buckets,
            plans: vec![],
            plan: 0,
            odometer: vec![],
            fresh_plan: true,
            started: false,
        }
    }

    fn plans_for(&self, total: usize) -> Vec<Vec<usize>> {
        fn rec(
            buckets: &[Vec<(usize, std::ops::Range<usize>)>],
            i: usize,
            left: usize,
            cur: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if i == buckets.len() {
                if left == 0 {
                    out.push(cur.clone());
                }
                return;
            }
            let rest_min: usize = buckets[i + 1..].iter().map(|b| b[0].0).sum();
            for (bi, (size, _)) in buckets[i].iter().enumerate() {
                if size + rest_min > left {
                    break;
                }
                cur.push(bi);
                rec(buckets, i + 1, left - size, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(&self.buckets, 0, total, &mut Vec::new(), &mut out);
        out
    }
}

impl SizedProduct {
    fn next_plan_item(&mut self) -> Option<(usize, Vec<usize>)> {
        while self.plan < self.plans.len() {
            let ranges: Vec<std::ops::Range<usize>> = self.plans[self.plan]
                .iter()
                .enumerate()
                .map(|(i, &b)| self.buckets[i][b].1.clone())
                .collect();
            if self.fresh_plan {
                self.odometer = ranges.iter().map(|r| r.start).collect();
                self.fresh_plan = false;
                return Some((self.total, self.odometer.clone()));
            }
            // advance the odometer, last position fastest
            let mut i = ranges.len();
            loop {
                if i == 0 {
                    self.plan += 1;
                    self.fresh_plan = true;
                    break;
                }
                i -= 1;
                self.odometer[i] += 1;
                if self.odometer[i] < ranges[i].end {
                    return Some((self.total, self.odometer.clone()));
                }
                self.odometer[i] = ranges[i].start;
            }
        }
        None
    }
}

impl Iterator for SizedProduct {
    /// (total size, index into each list)
    type Item = (usize, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.next_plan_item() {
                return Some(item);
            }
            if self.started {
                self.total += 1;
            }
            self.started = true;
            if self.total > self.max_total {
                return None;
            }
            self.plans = self.plans_for(self.total);
            self.plan = 0;
            self.fresh_plan = true;
        }
    }
}

// ---------------------------------------------------------------------------
// Transition streams

/// A transition candidate with its search cost. Tuple wrappers and the
/// top-level conditional of a `FreeTuple` transition are free, so each
/// component is bounded by the depth on its own.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub term: TermRef,
    pub cost: usize,
}

/// Conditions allowed at the top of a collection-valued transition: Boolean
/// inputs and equalities between an integer input and a literal.
pub fn seed_conditions(spec: &SequentialSpec) -> Vec<Cand> {
    let mut out = Vec::new();
    for f in &spec.op_fields {
        match f.sort {
            ScalarSort::Bool => out.push(Cand::new(var(&f.name))),
            ScalarSort::Enum | ScalarSort::Int => {
                let mut lits = vec![0, 1];
                for c in spec.constants() {
                    if !lits.contains(&c) && (f.sort == ScalarSort::Int || c >= 0) {
                        lits.push(c);
                    }
                }
                // with two enum values one equality is the negation of the other
                if f.sort == ScalarSort::Enum && lits.len() == 2 {
                    lits.remove(0);
                }
                out.extend(
                    lits.into_iter()
                        .map(|l| Cand::new(eq(var(&f.name), int(l)))),
                );
            }
            _ => {}
        }
    }
    out
}

trait Costed {
    fn cost(&self) -> usize;
}

impl Costed for Candidate {
    fn cost(&self) -> usize {
        self.cost
    }
}

impl<T> Costed for (Candidate, T) {
    fn cost(&self) -> usize {
        self.0.cost
    }
}

/// Merges two cost-ordered streams, preferring `a` on ties.
struct MergeByCost<A: Iterator, B: Iterator<Item = A::Item>> {
    a: std::iter::Peekable<A>,
    b: std::iter::Peekable<B>,
}

impl<A, B> Iterator for MergeByCost<A, B>
where
    A: Iterator,
    A::Item: Costed,
    B: Iterator<Item = A::Item>,
{
    type Item = A::Item;

    fn next(&mut self) -> Option<A::Item> {
        match (self.a.peek(), self.b.peek()) {
            (Some(x), Some(y)) if y.cost() < x.cost() => self.b.next(),
            (Some(_), _) => self.a.next(),
            (None, _) => self.b.next(),
        }
    }
}

fn merge_by_cost(
    a: impl Iterator<Item = Candidate> + Send + 'static,
    b: impl Iterator<Item = Candidate> + Send + 'static,
) -> Box<dyn Iterator<Item = Candidate> + Send> {
    Box::new(MergeByCost {
        a: a.peekable(),
        b: b.peekable(),
    })
}

fn sizes(bank: &[Cand]) -> Vec<usize> {
    bank.iter().map(|c| c.size).collect()
}

/// Candidate transitions for `state_type` at `depth`, in nondecreasing cost.
pub fn transition_candidates(
    g: &mut TermGrammar,
    spec: &SequentialSpec,
    state_type: &LatticeType,
    depth: usize,
) -> Box<dyn Iterator<Item = Candidate> + Send> {
    let seeds_upto = |d: usize| -> Arc<Vec<Cand>> {
        Arc::new(
            seed_conditions(spec)
                .into_iter()
                .filter(|c| c.depth <= d)
                .collect(),
        )
    };
    if let LatticeType::FreeTuple { elements } = state_type {
        let seeds = seeds_upto(depth);
        let comps: Vec<Bank> = elements
            .iter()
            .map(|e| g.terms(&Goal::lattice(e), depth))
            .collect();
        let k = comps.len();
        let plain = {
            let comps = comps.clone();
            SizedProduct::new(&comps.iter().map(|b| sizes(b)).collect::<Vec<_>>()).map(
                move |(cost, idx)| Candidate {
                    term: tuple(
                        idx.iter()
                            .zip(&comps)
                            .map(|(&i, b)| b[i].term.clone())
                            .collect(),
                    ),
                    cost,
                },
            )
        };
        let mut lists = vec![sizes(&seeds)];
        for _ in 0..2 {
            lists.extend(comps.iter().map(|b| sizes(b)));
        }
        let branching = SizedProduct::new(&lists).filter_map(move |(cost, idx)| {
            if idx[1..=k] == idx[k + 1..] {
                return None;
            }
            let pick = |off: usize| {
                tuple(
                    (0..k)
                        .map(|j| comps[j][idx[off + j]].term.clone())
                        .collect(),
                )
            };
            Some(Candidate {
                term: ite(seeds[idx[0]].term.clone(), pick(1), pick(1 + k)),
                cost,
            })
        });
        return merge_by_cost(plain, branching);
    }
    let goal = Goal::lattice(state_type);
    let base = g.terms(&goal, depth);
    let plain = {
        let base = base.clone();
        (0..base.len()).map(move |i| Candidate {
            term: base[i].term.clone(),
            cost: base[i].size,
        })
    };
    if !goal.sort.is_collection() || depth < 3 {
        return Box::new(plain);
    }
    let seeds = seeds_upto(depth - 1);
    let branches = g.terms(&goal, depth - 1);
    let branching = SizedProduct::new(&[sizes(&seeds), sizes(&branches), sizes(&branches)])
        .filter_map(move |(cost, idx)| {
            if idx[1] == idx[2] {
                return None;
            }
            Some(Candidate {
                term: ite(
                    seeds[idx[0]].term.clone(),
                    branches[idx[1]].term.clone(),
                    branches[idx[2]].term.clone(),
                ),
                cost: cost + 1,
            })
        });
    merge_by_cost(plain, branching)
}

/// Values of a term on each operation, or `None` if evaluation fails on one.
type Fingerprint = Arc<[Value]>;

fn fingerprint(t: &Term, envs: &[Env]) -> Option<Fingerprint> {
    envs.iter()
        .map(|e| expr::eval(t, e).ok())
        .collect::<Option<Vec<Value>>>()
        .map(Into::into)
}

/// Keeps the first (smallest) term of each behavior.
fn distinct_bank(bank: &[Cand], envs: &[Env]) -> Vec<(Cand, Fingerprint)> {
    let mut seen = HashSet::new();
    bank.iter()
        .filter_map(|c| fingerprint(&c.term, envs).map(|f| (c.clone(), f)))
        .filter(|(_, f)| seen.insert(f.clone()))
        .collect()
}

fn choose(cond: &[Value], a: &[Value], b: &[Value]) -> Fingerprint {
    cond.iter()
        .zip(a.iter().zip(b))
        .map(|(c, (x, y))| {
            if *c == Value::Bool(true) {
                x.clone()
            } else {
                y.clone()
            }
        })
        .collect()
}

/// One component of a branching tuple transition: the cheapest pair of
/// branches for each distinct behavior under a fixed condition.
#[derive(Clone)]
struct Branches {
    then: TermRef,
    other: TermRef,
    cost: usize,
    fp: Fingerprint,
}

fn branch_pairs(cond: &[Value], bank: &[(Cand, Fingerprint)]) -> Vec<Branches> {
    let mut best: HashMap<Fingerprint, Branches> = HashMap::new();
    for (a, fa) in bank {
        for (b, fb) in bank {
            let fp = choose(cond, fa, fb);
            let cost = a.size + b.size;
            let keep = best.get(&fp).is_none_or(|x| cost < x.cost);
            if keep {
                best.insert(
                    fp.clone(),
                    Branches {
                        then: a.term.clone(),
                        other: b.term.clone(),
                        cost,
                        fp,
                    },
                );
            }
        }
    }
    let mut out: Vec<Branches> = best.into_values().collect();
    out.sort_by(|x, y| {
        x.cost
            .cmp(&y.cost)
            .then_with(|| expr::to_sexpr(&x.then).cmp(&expr::to_sexpr(&y.then)))
            .then_with(|| expr::to_sexpr(&x.other).cmp(&expr::to_sexpr(&y.other)))
    });
    out
}

fn zip_tuples(parts: &[&Fingerprint]) -> Fingerprint {
    let n = parts.first().map_or(0, |p| p.len());
    (0..n)
        .map(|i| Value::Tuple(parts.iter().map(|p| p[i].clone()).collect()))
        .collect()
}

/// Transitions for an idempotent spec with one representative per behavior
/// on `ops`: two transitions that agree on every operation there produce
/// the same deltas in every log over those operations. Representatives are
/// the cheapest of their class, in the order of [`transition_candidates`].
pub fn distinct_transitions(
    g: &mut TermGrammar,
    spec: &SequentialSpec,
    state_type: &LatticeType,
    depth: usize,
    ops: &[Vec<Value>],
) -> Box<dyn Iterator<Item = Candidate> + Send> {
    let envs: Vec<Env> = ops
        .iter()
        .map(|op| {
            let mut e = Env::new();
            spec.bind_op(&mut e, "", op);
            e
        })
        .collect();
    let seeds_upto = |d: usize| -> Vec<(Cand, Fingerprint)> {
        let seeds: Vec<Cand> = seed_conditions(spec)
            .into_iter()
            .filter(|c| c.depth <= d)
            .collect();
        distinct_bank(&seeds, &envs)
    };
    type Stream = Box<dyn Iterator<Item = (Candidate, Fingerprint)> + Send>;
    let mut streams: Vec<Stream> = Vec::new();
    if let LatticeType::FreeTuple { elements } = state_type {
        let comps: Vec<Vec<(Cand, Fingerprint)>> = elements
            .iter()
            .map(|e| distinct_bank(&g.terms(&Goal::lattice(e), depth), &envs))
            .collect();
        {
            let comps = comps.clone();
            let lists: Vec<Vec<usize>> = comps
                .iter()
                .map(|b| b.iter().map(|c| c.0.size).collect())
                .collect();
            streams.push(Box::new(SizedProduct::new(&lists).map(
                move |(cost, idx)| {
                    let term = tuple(
                        idx.iter()
                            .zip(&comps)
                            .map(|(&i, b)| b[i].0.term.clone())
                            .collect(),
                    );
                    let fps: Vec<&Fingerprint> =
                        idx.iter().zip(&comps).map(|(&i, b)| &b[i].1).collect();
                    (Candidate { term, cost }, zip_tuples(&fps))
                },
            )));
        }
        for (seed, cond) in seeds_upto(depth) {
            let parts: Vec<Vec<Branches>> = comps.iter().map(|b| branch_pairs(&cond, b)).collect();
            let lists: Vec<Vec<usize>> = parts
                .iter()
                .map(|p| p.iter().map(|x| x.cost).collect())
                .collect();
            streams.push(Box::new(SizedProduct::new(&lists).map(
                move |(cost, idx)| {
                    let picked: Vec<&Branches> =
                        idx.iter().zip(&parts).map(|(&i, p)| &p[i]).collect();
                    let term = ite(
                        seed.term.clone(),
                        tuple(picked.iter().map(|b| b.then.clone()).collect()),
                        tuple(picked.iter().map(|b| b.other.clone()).collect()),
                    );
                    let fps: Vec<&Fingerprint> = picked.iter().map(|b| &b.fp).collect();
                    (
                        Candidate {
                            term,
                            cost: cost + seed.size,
                        },
                        zip_tuples(&fps),
                    )
                },
            )));
        }
    } else {
        let goal = Goal::lattice(state_type);
        let plain = distinct_bank(&g.terms(&goal, depth), &envs);
        streams.push(Box::new(plain.into_iter().map(|(c, f)| {
            (
                Candidate {
                    cost: c.size,
                    term: c.term,
                },
                f,
            )
        })));
        if goal.sort.is_collection() && depth >= 3 {
            let branches = distinct_bank(&g.terms(&goal, depth - 1), &envs);
            for (seed, cond) in seeds_upto(depth - 1) {
                let pairs = branch_pairs(&cond, &branches);
                streams.push(Box::new(pairs.into_iter().map(move |b| {
                    let term = ite(seed.term.clone(), b.then, b.other);
                    (
                        Candidate {
                            term,
                            cost: b.cost + seed.size + 1,
                        },
                        b.fp,
                    )
                })));
            }
        }
    }
    let merged = streams
        .into_iter()
        .reduce(|a, b| {
            Box::new(MergeByCost {
                a: a.peekable(),
                b: b.peekable(),
            })
        })
        .unwrap_or_else(|| Box::new(std::iter::empty()));
    let mut seen: HashSet<Fingerprint> = HashSet::new();
    Box::new(merged.filter_map(move |(c, f)| seen.insert(f).then_some(c)))
}

/// Candidate queries for `state_type` at `depth`, by size.
pub fn query_candidates(g: &mut TermGrammar, spec: &SequentialSpec, depth: usize) -> Bank {
    match spec.query_sort() {
        Ok(s) => g.terms(&Goal::sort(s), depth),
        Err(_) => Arc::new(vec![]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspec::builtin_benchmark;

    fn all_sorts() -> StateSorts {
        StateSorts::from_sorts(&ScalarSort::ALL)
    }

    /// Naive generator: every lattice tree up to a size bound, filtered by
    /// depth and well-formedness, with FreeTuple components sorted.
    fn brute_force_types(depth: usize, sorts: &StateSorts) -> HashSet<LatticeType> {
        fn trees(size: usize, sorts: &StateSorts) -> Vec<LatticeType> {
            let mut out = vec![LatticeType::OrBool, LatticeType::NegBool];
            out.extend(sorts.max_bases.iter().map(|b| LatticeType::max_int(*b)));
            out.extend(sorts.set_elems.iter().map(|e| LatticeType::set(*e)));
            if size > 1 {
                let smaller = trees(size - 1, sorts);
                for v in &smaller {
                    for k in &sorts.map_keys {
                        out.push(LatticeType::map(*k, v.clone()));
                    }
                    for w in &smaller {
                        out.push(LatticeType::lex(v.clone(), w.clone()));
                    }
                }
            }
            out
        }
        let elems: Vec<LatticeType> = trees(depth, sorts)
            .into_iter()
            .filter(|t| t.depth() <= depth)
            .collect();
        let mut out: HashSet<LatticeType> = elems.iter().cloned().collect();
        for a in &elems {
            for b in &elems {
                let mut pair = vec![a.clone(), b.clone()];
                pair.sort_by_key(state_type_key);
                let t = LatticeType::free(pair);
                if t.depth() <= depth && t.well_formed().is_ok() {
                    out.insert(t);
                }
            }
        }
        out
    }

    #[test]
    fn depth_two_state_types_match_brute_force() {
        let types = enumerate_state_types(2, &all_sorts(), 2);
        let as_set: HashSet<LatticeType> = types.iter().cloned().collect();
        assert_eq!(as_set.len(), types.len(), "no duplicates");
        assert_eq!(as_set, brute_force_types(2, &all_sorts()));
        assert_eq!(types.len(), 24);
        for t in &types {
            t.well_formed().unwrap();
        }
    }

    #[test]
    fn depth_three_state_types_match_brute_force() {
        let sorts = StateSorts::from_sorts(&[ScalarSort::Opaque, ScalarSort::Clock]);
        let types = enumerate_state_types(3, &sorts, 2);
        let as_set: HashSet<LatticeType> = types.iter().cloned().collect();
        assert_eq!(as_set.len(), types.len());
        assert_eq!(as_set, brute_force_types(3, &sorts));
    }

    #[test]
    fn state_type_examples() {
        let o = ScalarSort::Opaque;
        let two = enumerate_state_types(2, &StateSorts::from_sorts(&[o]), 2);
        assert!(two.contains(&LatticeType::set(o)));
        assert!(two.contains(&LatticeType::map(o, LatticeType::OrBool)));
        let three = enumerate_state_types(3, &StateSorts::from_sorts(&[ScalarSort::Clock]), 2);
        assert!(three.contains(&LatticeType::lex(
            LatticeType::max_int(ScalarSort::Clock),
            LatticeType::OrBool
        )));
        // ordered by depth, then size
        let keys: Vec<Vec<usize>> = three.iter().map(state_type_key).collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn benchmark_state_sorts() {
        let s = StateSorts::for_spec(&builtin_benchmark("two-phase-set").unwrap());
        assert_eq!(s.max_bases, vec![ScalarSort::Opaque]);
        assert_eq!(s.set_elems, vec![ScalarSort::Opaque]);
        let c = StateSorts::for_spec(&builtin_benchmark("grow-only-counter").unwrap());
        assert_eq!(c.map_keys, vec![ScalarSort::Int, ScalarSort::NodeID]);
    }

    #[test]
    fn initial_states() {
        let cfg = GrammarConfig::new(3, Role::InitialState);
        assert_eq!(
            enumerate_initial_states(&cfg, &LatticeType::OrBool),
            vec![Value::Bool(false), Value::Bool(true)]
        );
        let lex = LatticeType::lex(LatticeType::max_int(ScalarSort::Clock), LatticeType::OrBool);
        let inits = enumerate_initial_states(&cfg, &lex);
        assert_eq!(inits[0], lattice::bottom(&lex));
        assert!(inits.contains(&Value::Tuple(vec![Value::Int(0), Value::Bool(true)])));
        let map = LatticeType::map(ScalarSort::Opaque, LatticeType::OrBool);
        assert_eq!(
            enumerate_initial_states(&cfg, &map),
            vec![Value::empty_map()]
        );
    }

    fn transition_terms(
        spec: &str,
        state: &LatticeType,
        depth: usize,
        limit: usize,
    ) -> Vec<TermRef> {
        let spec = builtin_benchmark(spec).unwrap();
        let mut g = TermGrammar::for_transition(&spec, state);
        transition_candidates(&mut g, &spec, state, depth)
            .take(limit)
            .map(|c| c.term)
            .collect()
    }

    #[test]
    fn grow_only_set_singleton_at_depth_two() {
        let set = LatticeType::set(ScalarSort::Opaque);
        let terms = transition_terms("grow-only-set", &set, 2, usize::MAX);
        assert!(terms.contains(&singleton(var("value"))));
    }

    #[test]
    fn known_bodies_are_reachable() {
        let o = ScalarSort::Opaque;
        let add1 = eq(var("add"), int(1));

        let two_sets = LatticeType::free(vec![LatticeType::set(o), LatticeType::set(o)]);
        let f = ite(
            add1.clone(),
            tuple(vec![singleton(var("value")), empty_set(o)]),
            tuple(vec![empty_set(o), singleton(var("value"))]),
        );
        assert!(transition_terms("two-phase-set", &two_sets, 2, 100_000).contains(&f));

        let map = LatticeType::map(o, LatticeType::OrBool);
        let f = ite(
            add1.clone(),
            singleton_map(var("value"), ff()),
            singleton_map(var("value"), tt()),
        );
        assert!(transition_terms("two-phase-set", &map, 3, 100_000).contains(&f));
        let spec = builtin_benchmark("two-phase-set").unwrap();
        let mut g = TermGrammar::for_query(&spec, &map);
        let q = not(get(var("state"), var("v"), tt()));
        assert!(query_candidates(&mut g, &spec, 3)
            .iter()
            .any(|c| c.term == q));

        let clocks = LatticeType::map(o, LatticeType::max_int(ScalarSort::Clock));
        let aw = LatticeType::free(vec![clocks.clone(), clocks]);
        let f = ite(
            add1,
            tuple(vec![
                singleton_map(var("value"), var("t")),
                empty_map(o, Sort::Scalar(ScalarSort::Clock)),
            ]),
            tuple(vec![
                empty_map(o, Sort::Scalar(ScalarSort::Clock)),
                singleton_map(var("value"), var("t")),
            ]),
        );
        assert!(transition_terms("add-wins-set", &aw, 2, 100_000).contains(&f));
        let spec = builtin_benchmark("add-wins-set").unwrap();
        let mut g = TermGrammar::for_query(&spec, &aw);
        let t1 = get(var("s0"), var("v"), int(0));
        let t2 = get(var("s1"), var("v"), int(0));
        let q = and(geq(t1.clone(), t2), gt(t1, int(0)));
        let qs = query_candidates(&mut g, &spec, 4);
        assert!(qs.iter().any(|c| c.term == q
            || *c.term == Term::And(q.children()[1].clone(), q.children()[0].clone())));
    }

    #[test]
    fn counter_bodies_are_reachable() {
        let n = ScalarSort::NodeID;
        let slots = LatticeType::map(n, LatticeType::max_int(ScalarSort::Int));
        let bump = |s: &str| {
            singleton_map(
                var(NODE_VAR),
                add(get(var(s), var(NODE_VAR), int(0)), int(1)),
            )
        };

        let grow = builtin_benchmark("grow-only-counter").unwrap();
        let mut g = TermGrammar::for_transition(&grow, &slots);
        let f = singleton_map(
            var(NODE_VAR),
            add(get(var("state"), var(NODE_VAR), int(0)), int(1)),
        );
        assert!(transition_candidates(&mut g, &grow, &slots, 4).any(|c| c.term == f));

        let general = builtin_benchmark("general-counter").unwrap();
        let pair = LatticeType::free(vec![slots.clone(), slots]);
        let mut g = TermGrammar::for_query(&general, &pair);
        let q = sub(
            reduce(var("s0"), Reducer::Sum),
            reduce(var("s1"), Reducer::Sum),
        );
        assert!(query_candidates(&mut g, &general, 3)
            .iter()
            .any(|c| c.term == q));
        let mut g = TermGrammar::for_transition(&general, &pair);
        let empty = empty_map(n, Sort::INT);
        let f = ite(
            eq(var("inc"), int(1)),
            tuple(vec![bump("s0"), empty.clone()]),
            tuple(vec![empty, bump("s1")]),
        );
        assert!(transition_candidates(&mut g, &general, &pair, 4)
            .take(2_000_000)
            .any(|c| c.term == f));
    }

    #[test]
    fn emitted_terms_typecheck() {
        for name in [
            "two-phase-set",
            "add-wins-set",
            "general-counter",
            "lww-register",
        ] {
            let spec = builtin_benchmark(name).unwrap();
            let types = enumerate_state_types(3, &StateSorts::for_spec(&spec), 2);
            for st in types.iter().take(40) {
                let mut env: Vec<(Arc<str>, Sort)> = spec
                    .op_signature()
                    .iter()
                    .map(|f| (Arc::from(f.name.as_str()), Sort::Scalar(f.sort)))
                    .collect();
                env.push((NODE_VAR.into(), Sort::Scalar(ScalarSort::NodeID)));
                env.push(("state".into(), Sort::carrier(st)));
                let mut qenv: Vec<(Arc<str>, Sort)> = spec
                    .query_fields
                    .iter()
                    .map(|f| (Arc::from(f.name.as_str()), Sort::Scalar(f.sort)))
                    .collect();
                qenv.push(("state".into(), Sort::carrier(st)));
                if let LatticeType::FreeTuple { elements } = st {
                    for (i, e) in elements.iter().enumerate() {
                        env.push((component_var(i).into(), Sort::carrier(e)));
                        qenv.push((component_var(i).into(), Sort::carrier(e)));
                    }
                }
                let want = Sort::carrier(st);
                let mut g = TermGrammar::for_transition(&spec, st);
                for c in transition_candidates(&mut g, &spec, st, 3).take(3000) {
                    expr::check(&c.term, &want, &env)
                        .unwrap_or_else(|e| panic!("{name} {st}: {} {e}", c.term));
                }
                let mut g = TermGrammar::for_query(&spec, st);
                let qs = spec.query_sort().unwrap();
                for c in query_candidates(&mut g, &spec, 3).iter().take(3000) {
                    expr::check(&c.term, &qs, &qenv)
                        .unwrap_or_else(|e| panic!("{name} {st}: {} {e}", c.term));
                }
            }
        }
    }

    #[test]
    fn enumeration_is_deterministic() {
        let spec = builtin_benchmark("add-wins-set").unwrap();
        let st = LatticeType::lex(
            LatticeType::max_int(ScalarSort::Clock),
            LatticeType::set(ScalarSort::Opaque),
        );
        let run = || {
            let mut g = TermGrammar::for_transition(&spec, &st);
            let f: Vec<TermRef> = transition_candidates(&mut g, &spec, &st, 3)
                .take(5000)
                .map(|c| c.term)
                .collect();
            let mut g = TermGrammar::for_query(&spec, &st);
            let q: Vec<TermRef> = query_candidates(&mut g, &spec, 3)
                .iter()
                .map(|c| c.term.clone())
                .collect();
            (f, q)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn transition_stream_is_cost_ordered() {
        let spec = builtin_benchmark("two-phase-set").unwrap();
        let st = LatticeType::free(vec![
            LatticeType::set(ScalarSort::Opaque),
            LatticeType::OrBool,
        ]);
        let mut g = TermGrammar::for_transition(&spec, &st);
        let costs: Vec<usize> = transition_candidates(&mut g, &spec, &st, 3)
            .take(10_000)
            .map(|c| c.cost)
            .collect();
        assert!(costs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn generic_enumeration() {
        let cfg = GrammarConfig::new(2, Role::Query);
        let env: Vec<(Arc<str>, Sort)> = vec![("x".into(), Sort::INT), ("b".into(), Sort::BOOL)];
        let terms = enumerate_terms(&cfg, &env, &Sort::INT);
        assert!(terms.contains(&add(var("x"), int(1))));
        assert!(terms.contains(&ite(var("b"), var("x"), int(1))));
        assert!(!terms.contains(&add(var("x"), int(0))));
        for t in &terms {
            assert_eq!(expr::typecheck(t, &env).unwrap(), Sort::INT);
            assert!(t.depth() <= 2);
        }
    }

    #[test]
    fn sized_product_matches_sorted_brute_force() {
        let lists = vec![vec![1, 1, 2, 4], vec![0, 3], vec![2, 2, 2, 5]];
        let got: Vec<(usize, Vec<usize>)> = SizedProduct::new(&lists).collect();
        let mut want = Vec::new();
        for i in 0..4 {
            for j in 0..2 {
                for k in 0..4 {
                    want.push((lists[0][i] + lists[1][j] + lists[2][k], vec![i, j, k]));
                }
            }
        }
        assert_eq!(got.len(), want.len());
        assert!(got.windows(2).all(|w| w[0].0 <= w[1].0));
        let mut a = got.clone();
        a.sort();
        want.sort();
        assert_eq!(a, want);
        assert_eq!(SizedProduct::new(&[vec![1], vec![]]).count(), 0);
        assert_eq!(
            SizedProduct::new(&[]).collect::<Vec<_>>(),
            vec![(0, vec![])]
        );
    }
}
