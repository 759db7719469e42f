//! Semilattice compositions used as CRDT state.
//!
//! A [`LatticeType`] is a tree built from a handful of primitive lattices
//! (`OrBool`, `NegBool`, `MaxInt`, sets, maps) and two product
//! constructions. Every state value is a plain [`Value`]; the type tells us
//! how two values of that shape are joined. Because the merge of every
//! synthesized CRDT is the join of its state type, convergence follows from
//! the join being associative, commutative and idempotent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scalar sorts. The specialized integer sorts restrict which operations
/// the term grammar may apply to a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScalarSort {
    Bool,
    Int,
    #[serde(rename = "OpaqueInt")]
    Opaque,
    #[serde(rename = "ClockInt")]
    Clock,
    #[serde(rename = "EnumInt")]
    Enum,
    NodeID,
}

impl ScalarSort {
    pub const ALL: [ScalarSort; 6] = [
        ScalarSort::Bool,
        ScalarSort::Int,
        ScalarSort::Opaque,
        ScalarSort::Clock,
        ScalarSort::Enum,
        ScalarSort::NodeID,
    ];

    pub fn is_integer(self) -> bool {
        !matches!(self, ScalarSort::Bool)
    }

    /// `+` and `-` are only defined on plain integers.
    pub fn supports_arithmetic(self) -> bool {
        matches!(self, ScalarSort::Int)
    }

    /// `>` and `>=`. Enums and node ids only support equality.
    pub fn supports_ordering(self) -> bool {
        matches!(
            self,
            ScalarSort::Int | ScalarSort::Opaque | ScalarSort::Clock
        )
    }

    pub fn is_non_negative(self) -> bool {
        matches!(self, ScalarSort::Clock | ScalarSort::NodeID)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarSort::Bool => "Bool",
            ScalarSort::Int => "Int",
            ScalarSort::Opaque => "OpaqueInt",
            ScalarSort::Clock => "ClockInt",
            ScalarSort::Enum => "EnumInt",
            ScalarSort::NodeID => "NodeID",
        }
    }

    pub fn parse(s: &str) -> Option<ScalarSort> {
        Some(match s {
            "Bool" => ScalarSort::Bool,
            "Int" => ScalarSort::Int,
            "OpaqueInt" | "Opaque" => ScalarSort::Opaque,
            "ClockInt" | "Clock" => ScalarSort::Clock,
            "EnumInt" | "Enum" => ScalarSort::Enum,
            "NodeID" => ScalarSort::NodeID,
            _ => return None,
        })
    }

    /// Checks that a runtime value inhabits this sort.
    pub fn admits(self, v: &Value) -> bool {
        match (self, v) {
            (ScalarSort::Bool, Value::Bool(_)) => true,
            (ScalarSort::Bool, _) => false,
            (s, Value::Int(i)) => !s.is_non_negative() || *i >= 0,
            _ => false,
        }
    }
}

impl fmt::Display for ScalarSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A composition of semilattices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LatticeType {
    /// Booleans joined with `||`, bottom `false`.
    OrBool,
    /// Booleans joined with `&&`, bottom `true`.
    NegBool,
    /// Non-negative integers joined with `max`, bottom `0`.
    MaxInt {
        base: ScalarSort,
    },
    LSet {
        elem: ScalarSort,
    },
    LMap {
        key: ScalarSort,
        value: Box<LatticeType>,
    },
    /// Lexicographic pair: the first component dominates.
    LexProduct {
        first: Box<LatticeType>,
        second: Box<LatticeType>,
    },
    /// Componentwise product. Only valid at the top of a state type.
    FreeTuple {
        elements: Vec<LatticeType>,
    },
}

impl LatticeType {
    pub fn max_int(base: ScalarSort) -> Self {
        LatticeType::MaxInt { base }
    }

    pub fn set(elem: ScalarSort) -> Self {
        LatticeType::LSet { elem }
    }

    pub fn map(key: ScalarSort, value: LatticeType) -> Self {
        LatticeType::LMap {
            key,
            value: Box::new(value),
        }
    }

    pub fn lex(first: LatticeType, second: LatticeType) -> Self {
        LatticeType::LexProduct {
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    pub fn free(elements: Vec<LatticeType>) -> Self {
        LatticeType::FreeTuple { elements }
    }

    /// Nesting depth. Primitive lattices and scalar sorts count as one level.
    pub fn depth(&self) -> usize {
        match self {
            LatticeType::OrBool | LatticeType::NegBool => 1,
            LatticeType::MaxInt { .. } | LatticeType::LSet { .. } => 2,
            LatticeType::LMap { value, .. } => 1 + value.depth().max(1),
            LatticeType::LexProduct { first, second } => 1 + first.depth().max(second.depth()),
            LatticeType::FreeTuple { elements } => {
                1 + elements.iter().map(LatticeType::depth).max().unwrap_or(0)
            }
        }
    }

    /// Node count, scalar sorts included.
    pub fn size(&self) -> usize {
        match self {
            LatticeType::OrBool | LatticeType::NegBool => 1,
            LatticeType::MaxInt { .. } | LatticeType::LSet { .. } => 2,
            LatticeType::LMap { value, .. } => 2 + value.size(),
            LatticeType::LexProduct { first, second } => 1 + first.size() + second.size(),
            LatticeType::FreeTuple { elements } => {
                1 + elements.iter().map(LatticeType::size).sum::<usize>()
            }
        }
    }

    /// Checks structural rules that serde cannot: `FreeTuple` only at the
    /// root with arity at least two, `MaxInt` over integer sorts.
    pub fn well_formed(&self) -> Result<(), LatticeError> {
        fn inner(t: &LatticeType, top: bool) -> Result<(), LatticeError> {
            match t {
                LatticeType::OrBool | LatticeType::NegBool | LatticeType::LSet { .. } => Ok(()),
                LatticeType::MaxInt { base } => {
                    if base.is_integer() {
                        Ok(())
                    } else {
                        Err(LatticeError::IllFormed(format!("MaxInt over {base}")))
                    }
                }
                LatticeType::LMap { value, .. } => inner(value, false),
                LatticeType::LexProduct { first, second } => {
                    inner(first, false)?;
                    inner(second, false)
                }
                LatticeType::FreeTuple { elements } => {
                    if !top {
                        return Err(LatticeError::IllFormed("nested FreeTuple".into()));
                    }
                    if elements.len() < 2 {
                        return Err(LatticeError::IllFormed("FreeTuple arity < 2".into()));
                    }
                    elements.iter().try_for_each(|e| inner(e, false))
                }
            }
        }
        inner(self, true)
    }

    /// Replaces every `NegBool` by `OrBool`. The two are order-dual
    /// two-element chains, so types that agree after this rewrite are
    /// isomorphic as lattices.
    pub fn canonical(&self) -> LatticeType {
        match self {
            LatticeType::NegBool => LatticeType::OrBool,
            LatticeType::LMap { key, value } => LatticeType::map(*key, value.canonical()),
            LatticeType::LexProduct { first, second } => {
                LatticeType::lex(first.canonical(), second.canonical())
            }
            LatticeType::FreeTuple { elements } => {
                LatticeType::free(elements.iter().map(LatticeType::canonical).collect())
            }
            t => t.clone(),
        }
    }
}

impl fmt::Display for LatticeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeType::OrBool => write!(f, "OrBool"),
            LatticeType::NegBool => write!(f, "NegBool"),
            LatticeType::MaxInt { base } => write!(f, "MaxInt<{base}>"),
            LatticeType::LSet { elem } => write!(f, "Set<{elem}>"),
            LatticeType::LMap { key, value } => write!(f, "Map<{key}, {value}>"),
            LatticeType::LexProduct { first, second } => {
                write!(f, "LexicalProduct<{first}, {second}>")
            }
            LatticeType::FreeTuple { elements } => {
                write!(f, "FreeTuple<")?;
                for (i, e) in elements.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ">")
            }
        }
    }
}

impl std::str::FromStr for LatticeType {
    type Err = LatticeError;

    /// Parses the display syntax, e.g. `Map<OpaqueInt, OrBool>`. Parentheses
    /// may replace angle brackets, and `Lex`/`LexProduct` abbreviate
    /// `LexicalProduct`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks = tokenize(s);
        let mut pos = 0;
        let t = parse_type(&toks, &mut pos)?;
        if pos != toks.len() {
            return Err(LatticeError::IllFormed(format!("trailing input in `{s}`")));
        }
        t.well_formed()?;
        Ok(t)
    }
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        match c {
            '<' | '(' => out.push("<".into()),
            '>' | ')' => out.push(">".into()),
            ',' => out.push(",".into()),
            _ => {}
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn parse_type(toks: &[String], pos: &mut usize) -> Result<LatticeType, LatticeError> {
    let err = |m: String| LatticeError::IllFormed(m);
    let head = toks
        .get(*pos)
        .ok_or_else(|| err("unexpected end of type".into()))?
        .clone();
    *pos += 1;
    let mut args: Vec<&str> = Vec::new();
    let mut sub: Vec<LatticeType> = Vec::new();
    let open = toks.get(*pos).map(String::as_str) == Some("<");
    if open {
        *pos += 1;
        loop {
            let is_sort = toks.get(*pos).and_then(|w| ScalarSort::parse(w)).is_some()
                && matches!(
                    toks.get(*pos + 1).map(String::as_str),
                    Some(",") | Some(">")
                );
            if is_sort {
                args.push(&toks[*pos]);
                *pos += 1;
            } else {
                sub.push(parse_type(toks, pos)?);
            }
            match toks.get(*pos).map(String::as_str) {
                Some(",") => *pos += 1,
                Some(">") => {
                    *pos += 1;
                    break;
                }
                _ => return Err(err(format!("expected `,` or `>` after {head} argument"))),
            }
        }
    }
    let sort = |i: usize| -> Result<ScalarSort, LatticeError> {
        args.get(i)
            .and_then(|w| ScalarSort::parse(w))
            .ok_or_else(|| err(format!("{head} expects a scalar sort")))
    };
    let arity = |n: usize| -> Result<(), LatticeError> {
        if args.len() + sub.len() == n {
            Ok(())
        } else {
            Err(err(format!("{head} expects {n} arguments")))
        }
    };
    Ok(match head.as_str() {
        "OrBool" => {
            arity(0)?;
            LatticeType::OrBool
        }
        "NegBool" => {
            arity(0)?;
            LatticeType::NegBool
        }
        "MaxInt" => {
            arity(1)?;
            LatticeType::max_int(sort(0)?)
        }
        "Set" => {
            arity(1)?;
            LatticeType::set(sort(0)?)
        }
        "Map" => {
            arity(2)?;
            let value = sub
                .pop()
                .ok_or_else(|| err("Map expects a lattice value".into()))?;
            LatticeType::map(sort(0)?, value)
        }
        "LexicalProduct" | "LexProduct" | "Lex" => {
            arity(2)?;
            if sub.len() != 2 {
                return Err(err("LexicalProduct expects two lattices".into()));
            }
            let second = sub.pop().unwrap();
            LatticeType::lex(sub.pop().unwrap(), second)
        }
        "FreeTuple" => {
            if !args.is_empty() {
                return Err(err("FreeTuple expects lattices".into()));
            }
            LatticeType::free(sub)
        }
        other => return Err(err(format!("unknown lattice `{other}`"))),
    })
}

/// Runtime values, shared by sequential states, operation arguments and
/// lattice states. Sets and maps are ordered so that equality is
/// extensional and values can be used as keys.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Set(BTreeSet<Value>),
    #[serde(with = "map_entries")]
    Map(BTreeMap<Value, Value>),
    Tuple(Vec<Value>),
}

/// CRDT states are ordinary values interpreted under a [`LatticeType`].
pub type LatticeValue = Value;

mod map_entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Value;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Value, Value>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<(&Value, &Value)> = m.iter().collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<Value, Value>, D::Error> {
        let entries: Vec<(Value, Value)> = Vec::deserialize(d)?;
        Ok(entries.into_iter().collect())
    }
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn empty_set() -> Value {
        Value::Set(BTreeSet::new())
    }

    pub fn empty_map() -> Value {
        Value::Map(BTreeMap::new())
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Set(_) => "set",
            Value::Map(_) => "map",
            Value::Tuple(_) => "tuple",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Set(s) => {
                write!(f, "{{")?;
                for (i, e) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "}}")
            }
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
            Value::Tuple(xs) => {
                write!(f, "(")?;
                for (i, e) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("value {value} does not match lattice type {ty}")]
    TypeMismatch { ty: LatticeType, value: String },
    #[error("ill-formed lattice type: {0}")]
    IllFormed(String),
}

fn mismatch(t: &LatticeType, v: &Value) -> LatticeError {
    LatticeError::TypeMismatch {
        ty: t.clone(),
        value: format!("{} {v}", v.kind()),
    }
}

pub fn bottom(t: &LatticeType) -> Value {
    match t {
        LatticeType::OrBool => Value::Bool(false),
        LatticeType::NegBool => Value::Bool(true),
        LatticeType::MaxInt { .. } => Value::Int(0),
        LatticeType::LSet { .. } => Value::empty_set(),
        LatticeType::LMap { .. } => Value::empty_map(),
        LatticeType::LexProduct { first, second } => {
            Value::Tuple(vec![bottom(first), bottom(second)])
        }
        LatticeType::FreeTuple { elements } => Value::Tuple(elements.iter().map(bottom).collect()),
    }
}

pub fn join(t: &LatticeType, a: &Value, b: &Value) -> Result<Value, LatticeError> {
    match (t, a, b) {
        (LatticeType::OrBool, Value::Bool(x), Value::Bool(y)) => Ok(Value::Bool(*x || *y)),
        (LatticeType::NegBool, Value::Bool(x), Value::Bool(y)) => Ok(Value::Bool(*x && *y)),
        (LatticeType::MaxInt { .. }, Value::Int(x), Value::Int(y)) => Ok(Value::Int(*x.max(y))),
        (LatticeType::LSet { .. }, Value::Set(x), Value::Set(y)) => {
            if x.len() < y.len() {
                let mut out = y.clone();
                out.extend(x.iter().cloned());
                Ok(Value::Set(out))
            } else {
                let mut out = x.clone();
                out.extend(y.iter().cloned());
                Ok(Value::Set(out))
            }
        }
        (LatticeType::LMap { value, .. }, Value::Map(x), Value::Map(y)) => {
            let mut out = x.clone();
            for (k, v) in y {
                let merged = match out.get(k) {
                    Some(existing) => join(value, existing, v)?,
                    None => v.clone(),
                };
                out.insert(k.clone(), merged);
            }
            Ok(Value::Map(out))
        }
        (LatticeType::LexProduct { first, second }, Value::Tuple(x), Value::Tuple(y))
            if x.len() == 2 && y.len() == 2 =>
        {
            let head = join(first, &x[0], &y[0])?;
            let a_top = head == x[0];
            let b_top = head == y[0];
            let tail = match (a_top, b_top) {
                (true, true) => join(second, &x[1], &y[1])?,
                (true, false) => x[1].clone(),
                (false, true) => y[1].clone(),
                // Incomparable heads: neither tail survives.
                (false, false) => bottom(second),
            };
            Ok(Value::Tuple(vec![head, tail]))
        }
        (LatticeType::FreeTuple { elements }, Value::Tuple(x), Value::Tuple(y))
            if x.len() == elements.len() && y.len() == elements.len() =>
        {
            let joined = elements
                .iter()
                .zip(x.iter().zip(y))
                .map(|(t, (a, b))| join(t, a, b))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Tuple(joined))
        }
        (t, a, b) => {
            if validate(t, a) {
                Err(mismatch(t, b))
            } else {
                Err(mismatch(t, a))
            }
        }
    }
}

/// The lattice order derived from join: `a <= b` iff `a ⊔ b = b`.
pub fn leq(t: &LatticeType, a: &Value, b: &Value) -> Result<bool, LatticeError> {
    semantic_eq(t, &join(t, a, b)?, b)
}

/// Equality of lattice values. Map entries bound to the value type's bottom
/// are kept and are distinguishable from absent keys, which makes this
/// structural equality once both sides are known to match `t`.
pub fn semantic_eq(t: &LatticeType, a: &Value, b: &Value) -> Result<bool, LatticeError> {
    if !validate(t, a) {
        return Err(mismatch(t, a));
    }
    if !validate(t, b) {
        return Err(mismatch(t, b));
    }
    Ok(a == b)
}

pub fn validate(t: &LatticeType, v: &Value) -> bool {
    match (t, v) {
        (LatticeType::OrBool | LatticeType::NegBool, Value::Bool(_)) => true,
        (LatticeType::MaxInt { base }, Value::Int(i)) => *i >= 0 && base.admits(v),
        (LatticeType::LSet { elem }, Value::Set(s)) => s.iter().all(|e| elem.admits(e)),
        (LatticeType::LMap { key, value }, Value::Map(m)) => {
            m.iter().all(|(k, v)| key.admits(k) && validate(value, v))
        }
        (LatticeType::LexProduct { first, second }, Value::Tuple(xs)) => {
            xs.len() == 2 && validate(first, &xs[0]) && validate(second, &xs[1])
        }
        (LatticeType::FreeTuple { elements }, Value::Tuple(xs)) => {
            xs.len() == elements.len() && elements.iter().zip(xs).all(|(t, x)| validate(t, x))
        }
        _ => false,
    }
}
