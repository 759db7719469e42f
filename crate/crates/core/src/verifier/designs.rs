use crate::expr::build::*;
use crate::expr::{Reducer, Sort, TermRef};
use crate::lattice::{LatticeType, ScalarSort, Value};
use crate::seqspec::Flags;

use super::{CrdtDesign, Provenance};

const O: ScalarSort = ScalarSort::Opaque;
const C: ScalarSort = ScalarSort::Clock;
const N: ScalarSort = ScalarSort::NodeID;

fn design(
    spec: &str,
    state_type: LatticeType,
    init: Value,
    f_star: TermRef,
    query_star: TermRef,
    flags: Flags,
) -> CrdtDesign {
    CrdtDesign {
        spec_name: spec.into(),
        state_type,
        init,
        f_star,
        query_star,
        flags,
        provenance: Provenance {
            source: "hand-encoded".into(),
            ..Provenance::default()
        },
    }
}

fn is_add() -> TermRef {
    eq(var("add"), int(1))
}

fn pair(a: Value, b: Value) -> Value {
    Value::Tuple(vec![a, b])
}

fn stamped() -> Flags {
    Flags {
        timestamps: true,
        non_idempotent: false,
    }
}

fn per_node() -> Flags {
    Flags {
        timestamps: false,
        non_idempotent: true,
    }
}

/// Two sets of inserted and removed values.
fn two_set_design() -> CrdtDesign {
    let sets = LatticeType::free(vec![LatticeType::set(O), LatticeType::set(O)]);
    let value = || singleton(var("value"));
    design(
        "two-phase-set",
        sets,
        pair(Value::empty_set(), Value::empty_set()),
        ite(
            is_add(),
            tuple(vec![value(), empty_set(O)]),
            tuple(vec![empty_set(O), value()]),
        ),
        member(var("v"), diff(var("s0"), var("s1"))),
        Flags::default(),
    )
}

/// Per-element phase flags; absent keys read as "never inserted".
fn map_design() -> CrdtDesign {
    design(
        "two-phase-set",
        LatticeType::map(O, LatticeType::OrBool),
        Value::empty_map(),
        ite(
            is_add(),
            singleton_map(var("value"), ff()),
            singleton_map(var("value"), tt()),
        ),
        not(get(var("state"), var("v"), tt())),
        Flags::default(),
    )
}

/// Union of inserted values, ignoring removes.
fn inserted_set(spec: &str) -> CrdtDesign {
    design(
        spec,
        LatticeType::set(O),
        Value::empty_set(),
        ite(is_add(), singleton(var("value")), empty_set(O)),
        member(var("v"), var("state")),
        Flags::default(),
    )
}

/// Latest insert and remove timestamps per element.
fn stamped_set(spec: &str, query: TermRef) -> CrdtDesign {
    let clocks = LatticeType::map(O, LatticeType::max_int(C));
    let stamp = || singleton_map(var("value"), var("t"));
    let none = || empty_map(O, Sort::Scalar(C));
    design(
        spec,
        LatticeType::free(vec![clocks.clone(), clocks]),
        pair(Value::empty_map(), Value::empty_map()),
        ite(
            is_add(),
            tuple(vec![stamp(), none()]),
            tuple(vec![none(), stamp()]),
        ),
        query,
        stamped(),
    )
}

fn latest(i: usize) -> TermRef {
    get(var(&format!("s{i}")), var("v"), int(0))
}

fn increments() -> LatticeType {
    LatticeType::map(N, LatticeType::max_int(ScalarSort::Int))
}

fn bump(m: &str) -> TermRef {
    singleton_map(var("node"), add(get(var(m), var("node"), int(0)), int(1)))
}

fn general_counter() -> CrdtDesign {
    let none = || empty_map(N, Sort::INT);
    design(
        "general-counter",
        LatticeType::free(vec![increments(), increments()]),
        pair(Value::empty_map(), Value::empty_map()),
        ite(
            eq(var("inc"), int(1)),
            tuple(vec![bump("s0"), none()]),
            tuple(vec![none(), bump("s1")]),
        ),
        sub(
            reduce(var("s0"), Reducer::Sum),
            reduce(var("s1"), Reducer::Sum),
        ),
        per_node(),
    )
}

fn stamped_flag(spec: &str, stored: TermRef, query: TermRef, init: bool) -> CrdtDesign {
    design(
        spec,
        LatticeType::lex(LatticeType::max_int(C), LatticeType::OrBool),
        pair(Value::Int(0), Value::Bool(init)),
        tuple(vec![var("t"), stored]),
        query,
        stamped(),
    )
}

/// Named hand-encoded designs, each paired with the benchmark it implements.
pub fn builtin_designs() -> Vec<(&'static str, CrdtDesign)> {
    let enabled = || eq(var("enable"), int(1));
    vec![
        (
            "grow-only-counter",
            design(
                "grow-only-counter",
                increments(),
                Value::empty_map(),
                bump("state"),
                reduce(var("state"), Reducer::Sum),
                per_node(),
            ),
        ),
        ("general-counter", general_counter()),
        (
            "enable-wins-flag",
            stamped_flag("enable-wins-flag", enabled(), nth(var("state"), 1), true),
        ),
        // the flag stores "disabled", so a concurrent disable wins the join
        (
            "disable-wins-flag",
            stamped_flag(
                "disable-wins-flag",
                not(enabled()),
                not(nth(var("state"), 1)),
                false,
            ),
        ),
        (
            "lww-register",
            design(
                "lww-register",
                LatticeType::lex(LatticeType::max_int(C), LatticeType::max_int(O)),
                pair(Value::Int(0), Value::Int(0)),
                tuple(vec![var("t"), var("value")]),
                nth(var("state"), 1),
                stamped(),
            ),
        ),
        ("grow-only-set", inserted_set("grow-only-set")),
        ("two-phase-set-classic", two_set_design()),
        ("two-phase-set-map", map_design()),
        (
            "add-wins-set",
            stamped_set(
                "add-wins-set",
                and(geq(latest(0), latest(1)), gt(latest(0), int(0))),
            ),
        ),
        (
            "remove-wins-set",
            stamped_set("remove-wins-set", gt(latest(0), latest(1))),
        ),
        ("naive-set", inserted_set("two-phase-set")),
    ]
}

pub fn builtin_design(name: &str) -> Option<CrdtDesign> {
    builtin_designs()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| d)
}
