//! A small typed expression language.
//!
//! The same [`Term`] type describes sequential specifications (state
//! transition, query, ordering, precondition) and every synthesized CRDT
//! function. Terms are immutable and share subterms through [`Arc`], which
//! keeps bottom-up enumeration cheap.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{self, LatticeError, LatticeType, ScalarSort, Value};

/// Sorts of the term language.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sort {
    Scalar(ScalarSort),
    SetOf(ScalarSort),
    MapOf(ScalarSort, Box<Sort>),
    TupleOf(Vec<Sort>),
    /// A lattice-typed value; terms see it through its carrier sort.
    Lattice(LatticeType),
}

impl Sort {
    pub const BOOL: Sort = Sort::Scalar(ScalarSort::Bool);
    pub const INT: Sort = Sort::Scalar(ScalarSort::Int);

    pub fn map_of(key: ScalarSort, value: Sort) -> Sort {
        Sort::MapOf(key, Box::new(value))
    }

    /// The structural sort the term language uses for a lattice type.
    pub fn carrier(t: &LatticeType) -> Sort {
        match t {
            LatticeType::OrBool | LatticeType::NegBool => Sort::BOOL,
            LatticeType::MaxInt { base } => Sort::Scalar(*base),
            LatticeType::LSet { elem } => Sort::SetOf(*elem),
            LatticeType::LMap { key, value } => Sort::map_of(*key, Sort::carrier(value)),
            LatticeType::LexProduct { first, second } => {
                Sort::TupleOf(vec![Sort::carrier(first), Sort::carrier(second)])
            }
            LatticeType::FreeTuple { elements } => {
                Sort::TupleOf(elements.iter().map(Sort::carrier).collect())
            }
        }
    }

    /// Replaces every `Lattice` node by its carrier.
    pub fn normalize(&self) -> Sort {
        match self {
            Sort::Lattice(t) => Sort::carrier(t),
            Sort::MapOf(k, v) => Sort::map_of(*k, v.normalize()),
            Sort::TupleOf(xs) => Sort::TupleOf(xs.iter().map(Sort::normalize).collect()),
            s => s.clone(),
        }
    }

    pub fn as_scalar(&self) -> Option<ScalarSort> {
        match self {
            Sort::Scalar(s) => Some(*s),
            _ => None,
        }
    }

    /// Sets, maps and tuples; conditionals producing them are restricted.
    pub fn is_collection(&self) -> bool {
        matches!(
            self.normalize(),
            Sort::SetOf(_) | Sort::MapOf(..) | Sort::TupleOf(_)
        )
    }

    /// Checks that a value inhabits this sort.
    pub fn admits(&self, v: &Value) -> bool {
        match (self, v) {
            (Sort::Scalar(s), v) => s.admits(v),
            (Sort::SetOf(e), Value::Set(xs)) => xs.iter().all(|x| e.admits(x)),
            (Sort::MapOf(k, s), Value::Map(m)) => {
                m.iter().all(|(key, val)| k.admits(key) && s.admits(val))
            }
            (Sort::TupleOf(ss), Value::Tuple(xs)) => {
                ss.len() == xs.len() && ss.iter().zip(xs).all(|(s, x)| s.admits(x))
            }
            (Sort::Lattice(t), v) => lattice::validate(t, v),
            _ => false,
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Scalar(s) => write!(f, "{s}"),
            Sort::SetOf(s) => write!(f, "Set<{s}>"),
            Sort::MapOf(k, v) => write!(f, "Map<{k}, {v}>"),
            Sort::TupleOf(xs) => {
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            Sort::Lattice(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Reducer {
    Sum,
    OrAll,
    AndAll,
    JoinAll(LatticeType),
}

impl Reducer {
    /// The neutral element used as the fold seed.
    pub fn neutral(&self) -> Value {
        match self {
            Reducer::Sum => Value::Int(0),
            Reducer::OrAll => Value::Bool(false),
            Reducer::AndAll => Value::Bool(true),
            Reducer::JoinAll(t) => lattice::bottom(t),
        }
    }
}

pub type TermRef = Arc<Term>;

/// Expression AST.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Bool(bool),
    /// Integer literal; its sort is taken from context (defaults to `Int`).
    Int(i64),
    Var(Arc<str>),
    And(TermRef, TermRef),
    Or(TermRef, TermRef),
    Not(TermRef),
    Eq(TermRef, TermRef),
    Gt(TermRef, TermRef),
    Geq(TermRef, TermRef),
    Add(TermRef, TermRef),
    Sub(TermRef, TermRef),
    Ite(TermRef, TermRef, TermRef),
    EmptySet(ScalarSort),
    Singleton(TermRef),
    Union(TermRef, TermRef),
    Diff(TermRef, TermRef),
    Member(TermRef, TermRef),
    Subset(TermRef, TermRef),
    EmptyMap(ScalarSort, Sort),
    SingletonMap(TermRef, TermRef),
    /// Map union; values under shared keys are joined in the given lattice.
    MapJoinUnion(LatticeType, TermRef, TermRef),
    /// `map[key, default=default]`
    MapGetDefault(TermRef, TermRef, TermRef),
    TupleGet(TermRef, usize),
    TupleMake(Vec<TermRef>),
    LatticeJoin(LatticeType, TermRef, TermRef),
    LatticeBottom(LatticeType),
    /// Fold over the values of a map.
    Reduce(TermRef, Reducer, TermRef),
}

impl Term {
    pub fn children(&self) -> Vec<&TermRef> {
        use Term::*;
        match self {
            Bool(_) | Int(_) | Var(_) | EmptySet(_) | EmptyMap(..) | LatticeBottom(_) => vec![],
            Not(a) | Singleton(a) | TupleGet(a, _) => vec![a],
            And(a, b)
            | Or(a, b)
            | Eq(a, b)
            | Gt(a, b)
            | Geq(a, b)
            | Add(a, b)
            | Sub(a, b)
            | Union(a, b)
            | Diff(a, b)
            | Member(a, b)
            | Subset(a, b)
            | SingletonMap(a, b)
            | MapJoinUnion(_, a, b)
            | LatticeJoin(_, a, b)
            | Reduce(a, _, b) => vec![a, b],
            Ite(a, b, c) | MapGetDefault(a, b, c) => vec![a, b, c],
            TupleMake(xs) => xs.iter().collect(),
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(|c| c.size()).sum::<usize>()
    }

    /// Height of the AST; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(|c| c.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Term::Var(_) => false,
            t => t.children().into_iter().all(|c| c.is_closed()),
        }
    }

    pub fn free_vars(&self, out: &mut Vec<Arc<str>>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            t => t.children().into_iter().for_each(|c| c.free_vars(out)),
        }
    }

    /// Integer literals occurring anywhere in the term.
    pub fn int_literals(&self, out: &mut Vec<i64>) {
        if let Term::Int(i) = self {
            if !out.contains(i) {
                out.push(*i);
            }
        }
        self.children()
            .into_iter()
            .for_each(|c| c.int_literals(out));
    }

    /// Substitutes variables by terms.
    pub fn rename(&self, f: &impl Fn(&str) -> Option<TermRef>) -> TermRef {
        use Term::*;
        let r = |t: &TermRef| t.rename(f);
        Arc::new(match self {
            Var(v) => return f(v).unwrap_or_else(|| Arc::new(Var(v.clone()))),
            Bool(_) | Int(_) | EmptySet(_) | EmptyMap(..) | LatticeBottom(_) => self.clone(),
            And(a, b) => And(r(a), r(b)),
            Or(a, b) => Or(r(a), r(b)),
            Not(a) => Not(r(a)),
            Eq(a, b) => Eq(r(a), r(b)),
            Gt(a, b) => Gt(r(a), r(b)),
            Geq(a, b) => Geq(r(a), r(b)),
            Add(a, b) => Add(r(a), r(b)),
            Sub(a, b) => Sub(r(a), r(b)),
            Ite(a, b, c) => Ite(r(a), r(b), r(c)),
            Singleton(a) => Singleton(r(a)),
            Union(a, b) => Union(r(a), r(b)),
            Diff(a, b) => Diff(r(a), r(b)),
            Member(a, b) => Member(r(a), r(b)),
            Subset(a, b) => Subset(r(a), r(b)),
            SingletonMap(a, b) => SingletonMap(r(a), r(b)),
            MapJoinUnion(t, a, b) => MapJoinUnion(t.clone(), r(a), r(b)),
            MapGetDefault(a, b, c) => MapGetDefault(r(a), r(b), r(c)),
            TupleGet(a, i) => TupleGet(r(a), *i),
            TupleMake(xs) => TupleMake(xs.iter().map(r).collect()),
            LatticeJoin(t, a, b) => LatticeJoin(t.clone(), r(a), r(b)),
            Reduce(a, red, b) => Reduce(r(a), red.clone(), r(b)),
        })
    }
}

pub fn term_size(t: &Term) -> usize {
    t.size()
}

pub fn term_depth(t: &Term) -> usize {
    t.depth()
}

/// Constructors for writing terms by hand.
pub mod build {
    use super::*;

    pub fn var(name: &str) -> TermRef {
        Arc::new(Term::Var(name.into()))
    }
    pub fn int(i: i64) -> TermRef {
        Arc::new(Term::Int(i))
    }
    pub fn tt() -> TermRef {
        Arc::new(Term::Bool(true))
    }
    pub fn ff() -> TermRef {
        Arc::new(Term::Bool(false))
    }
    pub fn boolean(b: bool) -> TermRef {
        Arc::new(Term::Bool(b))
    }
    pub fn and(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::And(a, b))
    }
    pub fn or(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Or(a, b))
    }
    pub fn not(a: TermRef) -> TermRef {
        Arc::new(Term::Not(a))
    }
    pub fn eq(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Eq(a, b))
    }
    pub fn gt(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Gt(a, b))
    }
    pub fn geq(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Geq(a, b))
    }
    pub fn add(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Add(a, b))
    }
    pub fn sub(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Sub(a, b))
    }
    pub fn ite(c: TermRef, a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Ite(c, a, b))
    }
    pub fn empty_set(elem: ScalarSort) -> TermRef {
        Arc::new(Term::EmptySet(elem))
    }
    pub fn singleton(a: TermRef) -> TermRef {
        Arc::new(Term::Singleton(a))
    }
    pub fn union(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Union(a, b))
    }
    pub fn diff(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Diff(a, b))
    }
    pub fn member(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Member(a, b))
    }
    pub fn subset(a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::Subset(a, b))
    }
    pub fn empty_map(key: ScalarSort, value: Sort) -> TermRef {
        Arc::new(Term::EmptyMap(key, value))
    }
    pub fn singleton_map(k: TermRef, v: TermRef) -> TermRef {
        Arc::new(Term::SingletonMap(k, v))
    }
    pub fn map_join(value: LatticeType, a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::MapJoinUnion(value, a, b))
    }
    pub fn get(m: TermRef, k: TermRef, default: TermRef) -> TermRef {
        Arc::new(Term::MapGetDefault(m, k, default))
    }
    pub fn nth(t: TermRef, i: usize) -> TermRef {
        Arc::new(Term::TupleGet(t, i))
    }
    pub fn tuple(xs: Vec<TermRef>) -> TermRef {
        Arc::new(Term::TupleMake(xs))
    }
    pub fn ljoin(t: LatticeType, a: TermRef, b: TermRef) -> TermRef {
        Arc::new(Term::LatticeJoin(t, a, b))
    }
    pub fn bottom(t: LatticeType) -> TermRef {
        Arc::new(Term::LatticeBottom(t))
    }
    pub fn reduce(m: TermRef, r: Reducer) -> TermRef {
        let init = match &r {
            Reducer::Sum => int(0),
            Reducer::OrAll => ff(),
            Reducer::AndAll => tt(),
            Reducer::JoinAll(t) => bottom(t.clone()),
        };
        Arc::new(Term::Reduce(m, r, init))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("ill-sorted term `{node}`: {reason}")]
    IllSorted { node: String, reason: String },
}

fn ill(t: &Term, reason: impl Into<String>) -> TypeError {
    TypeError::IllSorted {
        node: t.to_string(),
        reason: reason.into(),
    }
}

/// Typing environment: variable names to sorts.
pub trait SortEnv {
    fn sort_of(&self, name: &str) -> Option<Sort>;
}

impl SortEnv for [(Arc<str>, Sort)] {
    fn sort_of(&self, name: &str) -> Option<Sort> {
        self.iter()
            .find(|(n, _)| &**n == name)
            .map(|(_, s)| s.clone())
    }
}

impl SortEnv for Vec<(Arc<str>, Sort)> {
    fn sort_of(&self, name: &str) -> Option<Sort> {
        self.as_slice().sort_of(name)
    }
}

/// Infers the (carrier) sort of a term.
pub fn typecheck(term: &Term, env: &(impl SortEnv + ?Sized)) -> Result<Sort, TypeError> {
    infer(term, env)
}

/// Checks a term against an expected sort.
pub fn check(term: &Term, expected: &Sort, env: &(impl SortEnv + ?Sized)) -> Result<(), TypeError> {
    let expected = expected.normalize();
    match (term, &expected) {
        (Term::Int(i), Sort::Scalar(s)) => {
            if !s.is_integer() {
                Err(ill(term, format!("integer literal where {s} expected")))
            } else if s.is_non_negative() && *i < 0 {
                Err(ill(term, format!("negative literal for {s}")))
            } else {
                Ok(())
            }
        }
        (Term::Singleton(e), Sort::SetOf(s)) => check(e, &Sort::Scalar(*s), env),
        (Term::SingletonMap(k, v), Sort::MapOf(ks, vs)) => {
            check(k, &Sort::Scalar(*ks), env)?;
            check(v, vs, env)
        }
        (Term::TupleMake(xs), Sort::TupleOf(ss)) => {
            if xs.len() != ss.len() {
                return Err(ill(term, "tuple arity mismatch"));
            }
            xs.iter().zip(ss).try_for_each(|(x, s)| check(x, s, env))
        }
        (Term::Ite(c, a, b), _) => {
            check(c, &Sort::BOOL, env)?;
            check(a, &expected, env)?;
            check(b, &expected, env)
        }
        (Term::Union(a, b) | Term::Diff(a, b), Sort::SetOf(_)) => {
            check(a, &expected, env)?;
            check(b, &expected, env)
        }
        (Term::MapJoinUnion(vt, a, b), Sort::MapOf(_, vs)) => {
            if Sort::carrier(vt) != **vs {
                return Err(ill(
                    term,
                    format!("join lattice {vt} does not match value sort {vs}"),
                ));
            }
            check(a, &expected, env)?;
            check(b, &expected, env)
        }
        (Term::MapGetDefault(m, k, d), _) => {
            let ms = infer(m, env)?;
            match ms {
                Sort::MapOf(ks, vs) => {
                    if *vs != expected {
                        return Err(ill(
                            term,
                            format!("map values are {vs}, expected {expected}"),
                        ));
                    }
                    check(k, &Sort::Scalar(ks), env)?;
                    check(d, &vs, env)
                }
                other => Err(ill(term, format!("lookup on non-map {other}"))),
            }
        }
        _ => {
            let got = infer(term, env)?;
            if got == expected {
                Ok(())
            } else {
                Err(ill(term, format!("has sort {got}, expected {expected}")))
            }
        }
    }
}

/// Infers a common sort for two operands, letting a bare literal adopt the
/// sort of the other side.
fn infer_pair(a: &Term, b: &Term, env: &(impl SortEnv + ?Sized)) -> Result<Sort, TypeError> {
    let left_first = || -> Result<Sort, TypeError> {
        let s = infer(a, env)?;
        check(b, &s, env)?;
        Ok(s)
    };
    let right_first = || -> Result<Sort, TypeError> {
        let s = infer(b, env)?;
        check(a, &s, env)?;
        Ok(s)
    };
    if matches!(a, Term::Int(_)) && !matches!(b, Term::Int(_)) {
        right_first()
    } else {
        // a literal nested inside `a` (say `{0}`) may only get its sort from `b`
        left_first().or_else(|e| right_first().map_err(|_| e))
    }
}

fn infer(term: &Term, env: &(impl SortEnv + ?Sized)) -> Result<Sort, TypeError> {
    use Term::*;
    match term {
        Bool(_) => Ok(Sort::BOOL),
        Int(_) => Ok(Sort::INT),
        Var(v) => env
            .sort_of(v)
            .map(|s| s.normalize())
            .ok_or_else(|| TypeError::Unbound(v.to_string())),
        And(a, b) | Or(a, b) => {
            check(a, &Sort::BOOL, env)?;
            check(b, &Sort::BOOL, env)?;
            Ok(Sort::BOOL)
        }
        Not(a) => {
            check(a, &Sort::BOOL, env)?;
            Ok(Sort::BOOL)
        }
        Eq(a, b) => match infer_pair(a, b, env)? {
            Sort::Scalar(_) => Ok(Sort::BOOL),
            s => Err(ill(term, format!("equality on non-scalar {s}"))),
        },
        Gt(a, b) | Geq(a, b) => match infer_pair(a, b, env)? {
            Sort::Scalar(s) if s.supports_ordering() => Ok(Sort::BOOL),
            s => Err(ill(term, format!("comparison on {s}"))),
        },
        Add(a, b) | Sub(a, b) => match infer_pair(a, b, env)? {
            Sort::Scalar(s) if s.supports_arithmetic() => Ok(Sort::INT),
            s => Err(ill(term, format!("arithmetic on {s}"))),
        },
        Ite(c, a, b) => {
            check(c, &Sort::BOOL, env)?;
            infer_pair(a, b, env)
        }
        EmptySet(e) => Ok(Sort::SetOf(*e)),
        Singleton(e) => match infer(e, env)? {
            Sort::Scalar(s) => Ok(Sort::SetOf(s)),
            s => Err(ill(term, format!("set of non-scalar {s}"))),
        },
        Union(a, b) | Diff(a, b) => match infer_pair(a, b, env)? {
            s @ Sort::SetOf(_) => Ok(s),
            s => Err(ill(term, format!("set operation on {s}"))),
        },
        Member(e, s) => match infer(s, env)? {
            Sort::SetOf(es) => {
                check(e, &Sort::Scalar(es), env)?;
                Ok(Sort::BOOL)
            }
            s => Err(ill(term, format!("membership in {s}"))),
        },
        Subset(a, b) => match infer_pair(a, b, env)? {
            Sort::SetOf(_) => Ok(Sort::BOOL),
            s => Err(ill(term, format!("subset on {s}"))),
        },
        EmptyMap(k, v) => Ok(Sort::map_of(*k, v.normalize())),
        SingletonMap(k, v) => match infer(k, env)? {
            Sort::Scalar(ks) => Ok(Sort::map_of(ks, infer(v, env)?)),
            s => Err(ill(term, format!("map key of sort {s}"))),
        },
        MapJoinUnion(vt, a, b) => match infer_pair(a, b, env)? {
            Sort::MapOf(k, vs) if *vs == Sort::carrier(vt) => Ok(Sort::MapOf(k, vs)),
            s => Err(ill(term, format!("map join over {vt} on {s}"))),
        },
        MapGetDefault(m, k, d) => match infer(m, env)? {
            Sort::MapOf(ks, vs) => {
                check(k, &Sort::Scalar(ks), env)?;
                check(d, &vs, env)?;
                Ok(*vs)
            }
            s => Err(ill(term, format!("lookup on {s}"))),
        },
        TupleGet(t, i) => match infer(t, env)? {
            Sort::TupleOf(xs) => xs
                .get(*i)
                .cloned()
                .ok_or_else(|| ill(term, "tuple index out of range")),
            s => Err(ill(term, format!("projection on {s}"))),
        },
        TupleMake(xs) => Ok(Sort::TupleOf(
            xs.iter().map(|x| infer(x, env)).collect::<Result<_, _>>()?,
        )),
        LatticeJoin(t, a, b) => {
            let s = Sort::carrier(t);
            check(a, &s, env)?;
            check(b, &s, env)?;
            Ok(s)
        }
        LatticeBottom(t) => Ok(Sort::carrier(t)),
        Reduce(m, r, init) => {
            let vs = match infer(m, env)? {
                Sort::MapOf(_, vs) => *vs,
                s => return Err(ill(term, format!("reduce over {s}"))),
            };
            let out = match r {
                Reducer::Sum if vs == Sort::INT => Sort::INT,
                Reducer::OrAll | Reducer::AndAll if vs == Sort::BOOL => Sort::BOOL,
                Reducer::JoinAll(t) if vs == Sort::carrier(t) => vs,
                _ => return Err(ill(term, format!("reducer {r:?} over values of sort {vs}"))),
            };
            check(init, &out, env)?;
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("runtime sort error in `{node}`: {reason}")]
    Sort { node: String, reason: String },
    #[error("integer overflow in `{0}`")]
    Overflow(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

fn bad(t: &Term, reason: &str) -> EvalError {
    EvalError::Sort {
        node: t.to_string(),
        reason: reason.to_string(),
    }
}

/// Variable bindings for evaluation. Lookups are linear; environments hold
/// a handful of variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env {
    bindings: Vec<(Arc<str>, Value)>,
}

impl Env {
    pub fn new() -> Self {
        Env::default()
    }

    pub fn with(mut self, name: impl Into<Arc<str>>, v: Value) -> Self {
        self.bind(name, v);
        self
    }

    pub fn bind(&mut self, name: impl Into<Arc<str>>, v: Value) {
        let name = name.into();
        if let Some(slot) = self.bindings.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = v;
        } else {
            self.bindings.push((name, v));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings
            .iter()
            .find(|(n, _)| &**n == name)
            .map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.bindings.truncate(len);
    }
}

fn as_bool(t: &Term, v: Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| bad(t, "expected bool"))
}

fn as_int(t: &Term, v: &Value) -> Result<i64, EvalError> {
    v.as_int().ok_or_else(|| bad(t, "expected int"))
}

pub fn eval(term: &Term, env: &Env) -> Result<Value, EvalError> {
    use Term::*;
    let ev = |t: &TermRef| eval(t, env);
    Ok(match term {
        Bool(b) => Value::Bool(*b),
        Int(i) => Value::Int(*i),
        Var(v) => env
            .get(v)
            .cloned()
            .ok_or_else(|| EvalError::Unbound(v.to_string()))?,
        And(a, b) => Value::Bool(as_bool(term, ev(a)?)? && as_bool(term, ev(b)?)?),
        Or(a, b) => Value::Bool(as_bool(term, ev(a)?)? || as_bool(term, ev(b)?)?),
        Not(a) => Value::Bool(!as_bool(term, ev(a)?)?),
        Eq(a, b) => Value::Bool(ev(a)? == ev(b)?),
        Gt(a, b) => Value::Bool(as_int(term, &ev(a)?)? > as_int(term, &ev(b)?)?),
        Geq(a, b) => Value::Bool(as_int(term, &ev(a)?)? >= as_int(term, &ev(b)?)?),
        Add(a, b) => Value::Int(
            as_int(term, &ev(a)?)?
                .checked_add(as_int(term, &ev(b)?)?)
                .ok_or_else(|| EvalError::Overflow(term.to_string()))?,
        ),
        Sub(a, b) => Value::Int(
            as_int(term, &ev(a)?)?
                .checked_sub(as_int(term, &ev(b)?)?)
                .ok_or_else(|| EvalError::Overflow(term.to_string()))?,
        ),
        Ite(c, a, b) => {
            if as_bool(term, ev(c)?)? {
                ev(a)?
            } else {
                ev(b)?
            }
        }
        EmptySet(_) => Value::empty_set(),
        Singleton(a) => Value::Set([ev(a)?].into_iter().collect()),
        Union(a, b) => match (ev(a)?, ev(b)?) {
            (Value::Set(mut x), Value::Set(y)) => {
                x.extend(y);
                Value::Set(x)
            }
            _ => return Err(bad(term, "expected sets")),
        },
        Diff(a, b) => match (ev(a)?, ev(b)?) {
            (Value::Set(x), Value::Set(y)) => Value::Set(x.difference(&y).cloned().collect()),
            _ => return Err(bad(term, "expected sets")),
        },
        Member(e, s) => match ev(s)? {
            Value::Set(x) => Value::Bool(x.contains(&ev(e)?)),
            _ => return Err(bad(term, "expected set")),
        },
        Subset(a, b) => match (ev(a)?, ev(b)?) {
            (Value::Set(x), Value::Set(y)) => Value::Bool(x.is_subset(&y)),
            _ => return Err(bad(term, "expected sets")),
        },
        EmptyMap(..) => Value::empty_map(),
        SingletonMap(k, v) => Value::Map([(ev(k)?, ev(v)?)].into_iter().collect()),
        MapJoinUnion(vt, a, b) => match (ev(a)?, ev(b)?) {
            (Value::Map(x), Value::Map(y)) => Value::Map(join_maps(vt, x, y)?),
            _ => return Err(bad(term, "expected maps")),
        },
        MapGetDefault(m, k, d) => match ev(m)? {
            Value::Map(x) => match x.get(&ev(k)?) {
                Some(v) => v.clone(),
                None => ev(d)?,
            },
            _ => return Err(bad(term, "expected map")),
        },
        TupleGet(t, i) => match ev(t)? {
            Value::Tuple(mut xs) if *i < xs.len() => xs.swap_remove(*i),
            _ => return Err(bad(term, "expected tuple")),
        },
        TupleMake(xs) => Value::Tuple(xs.iter().map(ev).collect::<Result<_, _>>()?),
        LatticeJoin(t, a, b) => lattice::join(t, &ev(a)?, &ev(b)?)?,
        LatticeBottom(t) => lattice::bottom(t),
        Reduce(m, r, init) => {
            let values = match ev(m)? {
                Value::Map(x) => x,
                _ => return Err(bad(term, "expected map")),
            };
            let mut acc = ev(init)?;
            for v in values.into_values() {
                acc = apply_reducer(term, r, acc, v)?;
            }
            acc
        }
    })
}

/// Joins two maps keywise, joining values under shared keys.
fn join_maps(
    value: &LatticeType,
    mut x: std::collections::BTreeMap<Value, Value>,
    y: std::collections::BTreeMap<Value, Value>,
) -> Result<std::collections::BTreeMap<Value, Value>, EvalError> {
    for (k, v) in y {
        let merged = match x.get(&k) {
            Some(existing) => lattice::join(value, existing, &v)?,
            None => v,
        };
        x.insert(k, merged);
    }
    Ok(x)
}

pub(crate) fn apply_reducer(
    term: &Term,
    r: &Reducer,
    acc: Value,
    v: Value,
) -> Result<Value, EvalError> {
    Ok(match r {
        Reducer::Sum => Value::Int(
            as_int(term, &acc)?
                .checked_add(as_int(term, &v)?)
                .ok_or_else(|| EvalError::Overflow(term.to_string()))?,
        ),
        Reducer::OrAll => Value::Bool(as_bool(term, acc)? || as_bool(term, v)?),
        Reducer::AndAll => Value::Bool(as_bool(term, acc)? && as_bool(term, v)?),
        Reducer::JoinAll(t) => lattice::join(t, &acc, &v)?,
    })
}

// Rendering in the mathematical style used for CRDT listings:
// `if add = 1 then ({v}, {}) else ({}, {v})`, `¬m[v, default=true]`.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Term::*;
        fn atom(t: &Term) -> bool {
            matches!(
                t,
                Bool(_)
                    | Int(_)
                    | Var(_)
                    | EmptySet(_)
                    | EmptyMap(..)
                    | Singleton(_)
                    | SingletonMap(..)
                    | MapGetDefault(..)
                    | TupleGet(..)
                    | TupleMake(_)
                    | LatticeBottom(_)
                    | Reduce(..)
                    | Not(_)
            )
        }
        struct P<'a>(&'a Term);
        impl fmt::Display for P<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                if atom(self.0) {
                    write!(f, "{}", self.0)
                } else {
                    write!(f, "({})", self.0)
                }
            }
        }
        match self {
            Bool(b) => write!(f, "{b}"),
            Int(i) => write!(f, "{i}"),
            Var(v) => write!(f, "{v}"),
            And(a, b) => write!(f, "{} ∧ {}", P(a), P(b)),
            Or(a, b) => write!(f, "{} ∨ {}", P(a), P(b)),
            Not(a) => write!(f, "¬{}", P(a)),
            Eq(a, b) => write!(f, "{} = {}", P(a), P(b)),
            Gt(a, b) => write!(f, "{} > {}", P(a), P(b)),
            Geq(a, b) => write!(f, "{} ≥ {}", P(a), P(b)),
            Add(a, b) => write!(f, "{} + {}", P(a), P(b)),
            Sub(a, b) => write!(f, "{} − {}", P(a), P(b)),
            Ite(c, a, b) => write!(f, "if {c} then {a} else {b}"),
            EmptySet(_) | EmptyMap(..) => write!(f, "{{}}"),
            Singleton(a) => write!(f, "{{{a}}}"),
            Union(a, b) => write!(f, "{} ∪ {}", P(a), P(b)),
            Diff(a, b) => write!(f, "{} \\ {}", P(a), P(b)),
            Member(a, b) => write!(f, "{} ∈ {}", P(a), P(b)),
            Subset(a, b) => write!(f, "{} ⊆ {}", P(a), P(b)),
            SingletonMap(k, v) => write!(f, "{{{k}: {v}}}"),
            MapJoinUnion(_, a, b) | LatticeJoin(_, a, b) => write!(f, "{} ⊔ {}", P(a), P(b)),
            MapGetDefault(m, k, d) => write!(f, "{}[{k}, default={d}]", P(m)),
            TupleGet(t, i) => write!(f, "{}[{i}]", P(t)),
            TupleMake(xs) => {
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            LatticeBottom(_) => write!(f, "⊥"),
            Reduce(m, r, init) => {
                let op = match r {
                    Reducer::Sum => "λa.λb.a + b",
                    Reducer::OrAll => "λa.λb.a ∨ b",
                    Reducer::AndAll => "λa.λb.a ∧ b",
                    Reducer::JoinAll(_) => "λa.λb.a ⊔ b",
                };
                write!(f, "reduce(values({m}), {op}, {init})")
            }
        }
    }
}

/// Compact s-expression rendering, one line per term.
pub fn to_sexpr(t: &Term) -> String {
    use Term::*;
    let kids = |name: &str, xs: &[&TermRef]| {
        let mut s = format!("({name}");
        for x in xs {
            s.push(' ');
            s.push_str(&to_sexpr(x));
        }
        s.push(')');
        s
    };
    match t {
        Bool(b) => b.to_string(),
        Int(i) => i.to_string(),
        Var(v) => v.to_string(),
        EmptySet(_) => "{}".into(),
        EmptyMap(..) => "{:}".into(),
        LatticeBottom(_) => "bot".into(),
        And(a, b) => kids("and", &[a, b]),
        Or(a, b) => kids("or", &[a, b]),
        Not(a) => kids("not", &[a]),
        Eq(a, b) => kids("=", &[a, b]),
        Gt(a, b) => kids(">", &[a, b]),
        Geq(a, b) => kids(">=", &[a, b]),
        Add(a, b) => kids("+", &[a, b]),
        Sub(a, b) => kids("-", &[a, b]),
        Ite(c, a, b) => kids("ite", &[c, a, b]),
        Singleton(a) => kids("set", &[a]),
        Union(a, b) => kids("union", &[a, b]),
        Diff(a, b) => kids("diff", &[a, b]),
        Member(a, b) => kids("member", &[a, b]),
        Subset(a, b) => kids("subset", &[a, b]),
        SingletonMap(k, v) => kids("map", &[k, v]),
        MapJoinUnion(_, a, b) => kids("map-join", &[a, b]),
        MapGetDefault(m, k, d) => kids("get", &[m, k, d]),
        TupleGet(x, i) => format!("(nth {} {i})", to_sexpr(x)),
        TupleMake(xs) => kids("tuple", &xs.iter().collect::<Vec<_>>()),
        LatticeJoin(_, a, b) => kids("join", &[a, b]),
        Reduce(m, r, init) => {
            let name = match r {
                Reducer::Sum => "sum",
                Reducer::OrAll => "or-all",
                Reducer::AndAll => "and-all",
                Reducer::JoinAll(_) => "join-all",
            };
            format!("(reduce-{name} {} {})", to_sexpr(m), to_sexpr(init))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    fn env_sorts(xs: &[(&str, Sort)]) -> Vec<(Arc<str>, Sort)> {
        xs.iter().map(|(n, s)| (Arc::from(*n), s.clone())).collect()
    }

    #[test]
    fn opaque_arithmetic_rejected() {
        let env = env_sorts(&[("v", Sort::Scalar(ScalarSort::Opaque))]);
        let err = typecheck(&add(var("v"), int(1)), &env).unwrap_err();
        assert!(matches!(err, TypeError::IllSorted { .. }), "{err}");
    }

    #[test]
    fn enum_equality_allowed_but_not_ordering() {
        let env = env_sorts(&[("a", Sort::Scalar(ScalarSort::Enum))]);
        assert_eq!(typecheck(&eq(var("a"), int(1)), &env).unwrap(), Sort::BOOL);
        assert!(typecheck(&gt(var("a"), int(1)), &env).is_err());
    }

    #[test]
    fn membership_in_empty_set() {
        let env = env_sorts(&[("x", Sort::INT)]);
        assert_eq!(
            typecheck(&member(var("x"), empty_set(ScalarSort::Int)), &env).unwrap(),
            Sort::BOOL
        );
    }

    #[test]
    fn clock_literals_must_be_non_negative() {
        let env = env_sorts(&[("t", Sort::Scalar(ScalarSort::Clock))]);
        assert!(typecheck(&gt(var("t"), int(0)), &env).is_ok());
        assert!(typecheck(&gt(var("t"), int(-1)), &env).is_err());
        assert!(typecheck(&add(var("t"), int(1)), &env).is_err());
    }

    #[test]
    fn unbound_variables() {
        let env = env_sorts(&[]);
        assert_eq!(
            typecheck(&var("q"), &env).unwrap_err(),
            TypeError::Unbound("q".into())
        );
        assert_eq!(
            eval(&var("q"), &Env::new()).unwrap_err(),
            EvalError::Unbound("q".into())
        );
    }

    #[test]
    fn lattice_sorts_are_seen_through_carriers() {
        let st = LatticeType::map(ScalarSort::Opaque, LatticeType::OrBool);
        let env = env_sorts(&[
            ("m", Sort::Lattice(st)),
            ("v", Sort::Scalar(ScalarSort::Opaque)),
        ]);
        let q = not(get(var("m"), var("v"), tt()));
        assert_eq!(typecheck(&q, &env).unwrap(), Sort::BOOL);
    }

    #[test]
    fn map_lookup_with_default() {
        let m = Value::Map([(Value::Int(1), Value::Bool(true))].into_iter().collect());
        let env = Env::new().with("m", m);
        let t = get(var("m"), int(2), tt());
        assert_eq!(eval(&t, &env).unwrap(), Value::Bool(true));
        let t = get(var("m"), int(1), ff());
        assert_eq!(eval(&t, &env).unwrap(), Value::Bool(true));
    }

    #[test]
    fn reduce_sum() {
        let m = Value::Map(
            [
                (Value::Int(0), Value::Int(3)),
                (Value::Int(1), Value::Int(4)),
            ]
            .into_iter()
            .collect(),
        );
        let env = Env::new().with("m", m);
        assert_eq!(
            eval(&reduce(var("m"), Reducer::Sum), &env).unwrap(),
            Value::Int(7)
        );
    }

    #[test]
    fn conditional() {
        assert_eq!(
            eval(&ite(tt(), int(1), int(2)), &Env::new()).unwrap(),
            Value::Int(1)
        );
    }

    #[test]
    fn metrics() {
        assert_eq!(int(0).depth(), 1);
        assert_eq!(ite(var("b"), var("x"), var("y")).depth(), 2);
        assert_eq!(ite(var("b"), var("x"), var("y")).size(), 4);
    }

    #[test]
    fn map_join_union_joins_shared_keys() {
        let a = singleton_map(int(1), ff());
        let b = singleton_map(int(1), tt());
        let t = map_join(LatticeType::OrBool, a, b);
        let out = eval(&t, &Env::new()).unwrap();
        assert_eq!(
            out,
            Value::Map([(Value::Int(1), Value::Bool(true))].into_iter().collect())
        );
    }

    #[test]
    fn rendering() {
        let q = not(get(var("m"), var("v"), tt()));
        assert_eq!(q.to_string(), "¬m[v, default=true]");
        assert_eq!(to_sexpr(&q), "(not (get m v true))");
        let f = ite(
            eq(var("add"), int(1)),
            tuple(vec![singleton(var("value")), empty_set(ScalarSort::Opaque)]),
            tuple(vec![empty_set(ScalarSort::Opaque), singleton(var("value"))]),
        );
        assert_eq!(
            f.to_string(),
            "if add = 1 then ({value}, {}) else ({}, {value})"
        );
    }

    #[test]
    fn json_round_trip() {
        let q = reduce(
            var("s0"),
            Reducer::JoinAll(LatticeType::max_int(ScalarSort::Clock)),
        );
        let s = serde_json::to_string(&q).unwrap();
        let back: TermRef = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }
}
