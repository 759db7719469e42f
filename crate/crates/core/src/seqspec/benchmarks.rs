use crate::expr::build::*;
use crate::expr::{Sort, TermRef};
use crate::lattice::ScalarSort;

use super::{Field, Flags, SequentialSpec};

const NO_FLAGS: Flags = Flags {
    timestamps: false,
    non_idempotent: false,
};
const STAMPED: Flags = Flags {
    timestamps: true,
    non_idempotent: false,
};
const PER_NODE: Flags = Flags {
    timestamps: false,
    non_idempotent: true,
};

fn is_add(o: &str) -> TermRef {
    eq(var(&format!("{o}.add")), int(1))
}

/// Removes are ordered before adds.
fn removes_first() -> TermRef {
    or(not(is_add("o1")), is_add("o2"))
}

/// Adds are ordered before removes.
fn adds_first() -> TermRef {
    or(is_add("o1"), not(is_add("o2")))
}

/// A set of opaque values driven by `(add, value)` operations.
fn set_spec(name: &str, title: &str, order: TermRef, flags: Flags) -> SequentialSpec {
    let state = var("state");
    SequentialSpec {
        name: name.into(),
        title: title.into(),
        op_fields: vec![
            Field::new("add", ScalarSort::Enum),
            Field::new("value", ScalarSort::Opaque),
        ],
        query_fields: vec![Field::new("v", ScalarSort::Opaque)],
        state_sort: Sort::SetOf(ScalarSort::Opaque),
        initial_state: empty_set(ScalarSort::Opaque),
        st: ite(
            eq(var("add"), int(1)),
            union(state.clone(), singleton(var("value"))),
            diff(state.clone(), singleton(var("value"))),
        ),
        query: member(var("v"), state),
        op_order: order,
        op_precondition: tt(),
        flags,
    }
}

fn is_enable(o: &str) -> TermRef {
    eq(var(&format!("{o}.enable")), int(1))
}

/// A Boolean flag, initially enabled, set by `enable` operations.
fn flag_spec(name: &str, title: &str, order: TermRef) -> SequentialSpec {
    SequentialSpec {
        name: name.into(),
        title: title.into(),
        op_fields: vec![Field::new("enable", ScalarSort::Enum)],
        query_fields: vec![],
        state_sort: Sort::BOOL,
        initial_state: tt(),
        st: eq(var("enable"), int(1)),
        query: var("state"),
        op_order: order,
        op_precondition: tt(),
        flags: STAMPED,
    }
}

fn counter_spec(name: &str, title: &str, fields: Vec<Field>, st: TermRef) -> SequentialSpec {
    SequentialSpec {
        name: name.into(),
        title: title.into(),
        op_fields: fields,
        query_fields: vec![],
        state_sort: Sort::INT,
        initial_state: int(0),
        st,
        query: var("state"),
        op_order: tt(),
        op_precondition: tt(),
        flags: PER_NODE,
    }
}

/// The nine built-in benchmark specifications.
pub fn builtin_benchmarks() -> Vec<SequentialSpec> {
    let state = var("state");
    vec![
        counter_spec(
            "grow-only-counter",
            "Grow-Only Counter",
            vec![],
            add(state.clone(), int(1)),
        ),
        counter_spec(
            "general-counter",
            "General Counter",
            vec![Field::new("inc", ScalarSort::Enum)],
            ite(
                eq(var("inc"), int(1)),
                add(state.clone(), int(1)),
                sub(state.clone(), int(1)),
            ),
        ),
        // concurrent enable and disable: the enable is ordered last
        flag_spec(
            "enable-wins-flag",
            "Enable-Wins Flag",
            or(not(is_enable("o1")), is_enable("o2")),
        ),
        flag_spec(
            "disable-wins-flag",
            "Disable-Wins Flag",
            or(is_enable("o1"), not(is_enable("o2"))),
        ),
        SequentialSpec {
            name: "lww-register".into(),
            title: "Last-Writer-Wins Register".into(),
            op_fields: vec![Field::new("value", ScalarSort::Opaque)],
            query_fields: vec![],
            state_sort: Sort::Scalar(ScalarSort::Opaque),
            initial_state: int(0),
            st: var("value"),
            query: state,
            // writes with equal timestamps are ordered by value
            op_order: geq(var("o2.value"), var("o1.value")),
            op_precondition: tt(),
            flags: STAMPED,
        },
        set_spec("grow-only-set", "Grow-Only Set", removes_first(), NO_FLAGS),
        set_spec("two-phase-set", "Two-Phase Set", adds_first(), NO_FLAGS),
        set_spec("add-wins-set", "Add-Wins Set", removes_first(), STAMPED),
        set_spec("remove-wins-set", "Remove-Wins Set", adds_first(), STAMPED),
    ]
}

pub fn builtin_benchmark(name: &str) -> Option<SequentialSpec> {
    builtin_benchmarks().into_iter().find(|s| s.name == name)
}
