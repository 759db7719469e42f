use katalite::expr::build::*;
use katalite::lattice::{self, Value};
use katalite::seqspec::{builtin_benchmark, OpValue, SequentialSpec};
use katalite::verifier::*;

fn op(add: i64, v: i64) -> OpValue {
    vec![Value::Int(add), Value::Int(v)]
}

fn design(name: &str) -> CrdtDesign {
    builtin_design(name).unwrap()
}

fn spec_of(d: &CrdtDesign) -> SequentialSpec {
    builtin_benchmark(&d.spec_name).unwrap()
}

/// Independent oracle: enumerate logs by plain recursion over every op and
/// node, keep the in-order ones, and fold each prefix from scratch.
fn brute_force(
    spec: &SequentialSpec,
    d: &CrdtDesign,
    u: &Universe,
    bound: usize,
) -> Option<Counterexample> {
    let ops = u.op_space(spec).unwrap();
    let nodes = if spec.flags.non_idempotent {
        u.node_ids()
    } else {
        vec![0]
    };
    let queries = u.query_space(spec);
    #[allow(clippy::too_many_arguments)]
    fn go(
        spec: &SequentialSpec,
        d: &CrdtDesign,
        ops: &[OpValue],
        nodes: &[i64],
        queries: &[Vec<Value>],
        bound: usize,
        log: &mut Vec<OpValue>,
        assign: &mut Vec<i64>,
    ) -> Option<Counterexample> {
        if !log_in_order(spec, log).unwrap() {
            return None;
        }
        let crdt = fold_crdt(spec, d, log, assign).unwrap();
        let seq = spec.run_sequential(log).unwrap();
        for q in queries {
            let expected = spec.answer_query(&seq, q).unwrap();
            let actual = d.query(spec, &crdt, q).unwrap();
            if expected != actual {
                return Some(Counterexample {
                    log: log.clone(),
                    nodes: assign.clone(),
                    prefix_index: log.len(),
                    query: q.clone(),
                    expected,
                    actual,
                });
            }
        }
        if log.len() == bound {
            return None;
        }
        for o in ops {
            for n in nodes {
                log.push(o.clone());
                assign.push(*n);
                let r = go(spec, d, ops, nodes, queries, bound, log, assign);
                log.pop();
                assign.pop();
                if r.is_some() {
                    return r;
                }
            }
        }
        None
    }
    go(
        spec,
        d,
        &ops,
        &nodes,
        &queries,
        bound,
        &mut vec![],
        &mut vec![],
    )
}

/// Shipped designs plus deliberately broken variants.
fn corpus() -> Vec<(String, CrdtDesign)> {
    let mut out: Vec<(String, CrdtDesign)> = builtin_designs()
        .into_iter()
        .map(|(n, d)| (n.to_string(), d))
        .collect();
    let mut d = design("two-phase-set-map");
    d.query_star = not(get(var("state"), var("v"), ff()));
    out.push(("map-default-false".into(), d));
    let mut d = design("add-wins-set");
    d.query_star = gt(
        get(var("s0"), var("v"), int(0)),
        get(var("s1"), var("v"), int(0)),
    );
    out.push(("add-wins-with-remove-wins-query".into(), d));
    let mut d = design("general-counter");
    d.query_star = reduce(var("s0"), katalite::expr::Reducer::Sum);
    out.push(("counter-ignoring-decrements".into(), d));
    let mut d = design("lww-register");
    d.query_star = nth(var("state"), 0);
    out.push(("lww-returning-clock".into(), d));
    out
}

#[test]
fn obligations_agree_with_brute_force() {
    for (name, d) in corpus() {
        let spec = spec_of(&d);
        let u = Universe::default_for(&spec, 2, 2);
        for bound in 0..=3 {
            let fast = check_bounded(&spec, &d, &u, bound).unwrap();
            let slow = brute_force(&spec, &d, &u, bound);
            match (&fast, &slow) {
                (Verdict::Pass(b), None) => assert_eq!(b.log_bound, bound),
                (Verdict::Fail(a), Some(b)) => assert_eq!(a, b, "{name} at bound {bound}"),
                _ => panic!("{name} at bound {bound}: {fast:?} vs {slow:?}"),
            }
        }
    }
}

#[test]
fn broken_variants_fail() {
    for (name, d) in corpus().into_iter().skip(builtin_designs().len()) {
        let spec = spec_of(&d);
        let u = Universe::default_for(&spec, 3, 2);
        assert!(
            !check_bounded(&spec, &d, &u, 4).unwrap().is_pass(),
            "{name}"
        );
    }
}

#[test]
fn shipped_designs_pass_default_bounds() {
    for (name, d) in builtin_designs() {
        let spec = spec_of(&d);
        d.validate(&spec).unwrap_or_else(|e| panic!("{name}: {e}"));
        let u = Universe::default_for(&spec, 3, 2);
        let v = check_bounded(&spec, &d, &u, 4).unwrap();
        assert_eq!(v.is_pass(), name != "naive-set", "{name}: {v:?}");
    }
}

#[test]
fn add_wins_small_clocks() {
    let d = design("add-wins-set");
    let spec = spec_of(&d);
    let u = Universe::default_for(&spec, 2, 2);
    assert!(check_bounded(&spec, &d, &u, 3).unwrap().is_pass());
}

#[test]
fn naive_set_conflict() {
    let d = design("naive-set");
    let spec = spec_of(&d);
    let u = Universe::default_for(&spec, 2, 2);
    let v = check_bounded(&spec, &d, &u, 2).unwrap();
    let cex = v.counterexample().expect("naive set must fail");
    assert!(cex.log.len() <= 2);
    // insert then remove of the queried element
    assert_eq!(cex.log, vec![op(1, 1), op(0, 1)]);
    assert_eq!(cex.query, vec![Value::Int(1)]);
    assert_eq!(
        (cex.expected.clone(), cex.actual.clone()),
        (Value::Bool(false), Value::Bool(true))
    );
    let min = minimize_counterexample(&spec, &d, cex, &u).unwrap();
    assert_eq!(&min, cex);
    for bound in 2..=4 {
        assert!(
            !check_bounded(&spec, &d, &u, bound).unwrap().is_pass(),
            "bound {bound}"
        );
    }
    assert!(check_bounded(&spec, &d, &u, 1).unwrap().is_pass());
}

#[test]
fn minimization_shrinks() {
    let d = design("naive-set");
    let spec = spec_of(&d);
    let u = Universe::default_for(&spec, 2, 2);
    let log = vec![op(1, 2), op(1, 1), op(0, 1)];
    let cex = replay(&spec, &d, &log, &[0, 0, 0], &[Value::Int(1)])
        .unwrap()
        .unwrap();
    let min = minimize_counterexample(&spec, &d, &cex, &u).unwrap();
    assert_eq!(min.log, vec![op(1, 1), op(0, 1)]);
    assert!(replay(&spec, &d, &min.log, &min.nodes, &min.query)
        .unwrap()
        .is_some());
}

#[test]
fn counterexamples_replay() {
    for (name, d) in corpus() {
        let spec = spec_of(&d);
        let u = Universe::default_for(&spec, 3, 2);
        if let Verdict::Fail(c) = check_bounded(&spec, &d, &u, 4).unwrap() {
            assert!(log_in_order(&spec, &c.log).unwrap(), "{name}");
            let again = replay(&spec, &d, &c.log, &c.nodes, &c.query).unwrap();
            assert_eq!(again.as_ref(), Some(&c), "{name}");
        }
    }
}

#[test]
fn fold_examples() {
    let d = design("two-phase-set-classic");
    let spec = spec_of(&d);
    let s = fold_crdt(&spec, &d, &[op(1, 1)], &[0]).unwrap();
    let one: Value = Value::Set([Value::Int(1)].into_iter().collect());
    assert_eq!(s, Value::Tuple(vec![one, Value::empty_set()]));
    assert_eq!(fold_crdt(&spec, &d, &[], &[]).unwrap(), d.init);

    let d = design("general-counter");
    let spec = spec_of(&d);
    let inc = vec![Value::Int(1)];
    let s = fold_crdt(&spec, &d, &[inc.clone(), inc], &[0, 0]).unwrap();
    let two = Value::Map([(Value::Int(0), Value::Int(2))].into_iter().collect());
    assert_eq!(s, Value::Tuple(vec![two, Value::empty_map()]));
    assert!(fold_crdt(&spec, &d, &[vec![Value::Int(1)]], &[]).is_err());
}

#[test]
fn folds_stay_in_the_state_type() {
    for (name, d) in builtin_designs() {
        let spec = spec_of(&d);
        let u = Universe::default_for(&spec, 2, 2);
        for log in enumerate_logs(&spec, &u, 3).unwrap() {
            let nodes: Vec<i64> = (0..log.len() as i64).map(|i| i % 2).collect();
            let s = fold_crdt(&spec, &d, &log, &nodes).unwrap();
            assert!(lattice::validate(&d.state_type, &s), "{name}: {s}");
        }
    }
}

#[test]
fn permutation_invariance() {
    for (name, d) in builtin_designs() {
        if d.flags.non_idempotent {
            continue;
        }
        let spec = spec_of(&d);
        let u = Universe::default_for(&spec, 2, 2);
        let logs = enumerate_logs(&spec, &u, 4).unwrap();
        assert!(
            check_permutation_invariance(&spec, &d, &logs).unwrap(),
            "{name}"
        );
    }
    let d = design("lww-register");
    let spec = spec_of(&d);
    let w = |v: i64, t: i64| vec![Value::Int(v), Value::Int(t)];
    assert!(check_permutation_invariance(&spec, &d, &[vec![w(1, 1), w(2, 2)]]).unwrap());
}

#[test]
fn merge_agrees_with_transition() {
    for (name, d) in builtin_designs() {
        if d.flags.non_idempotent {
            continue;
        }
        let spec = spec_of(&d);
        let u = Universe::default_for(&spec, 2, 2);
        let ops = u.op_space(&spec).unwrap();
        let mut logs: Vec<Vec<OpValue>> = vec![vec![]];
        for _ in 0..2 {
            let longer: Vec<Vec<OpValue>> = logs
                .iter()
                .filter(|l| l.len() < 2)
                .flat_map(|l| {
                    ops.iter()
                        .map(move |o| [l.clone(), vec![o.clone()]].concat())
                })
                .collect();
            logs.extend(longer);
        }
        logs.dedup();
        let fold = |l: &[OpValue]| fold_crdt(&spec, &d, l, &vec![0; l.len()]).unwrap();
        for a in &logs {
            for b in logs.iter().filter(|b| a.len() + b.len() <= 3) {
                let merged = lattice::join(&d.state_type, &fold(a), &fold(b)).unwrap();
                let both = fold(&[a.clone(), b.clone()].concat());
                assert!(
                    lattice::semantic_eq(&d.state_type, &merged, &both).unwrap(),
                    "{name}"
                );
            }
        }
    }
}

#[test]
fn design_json_round_trip() {
    for (name, d) in corpus() {
        let j = d.to_json();
        assert_eq!(j["format_version"], 1);
        let back = CrdtDesign::from_json(j).unwrap();
        assert_eq!(back, d, "{name}");
    }
    let mut j = design("grow-only-set").to_json();
    j["format_version"] = 9.into();
    assert!(matches!(
        CrdtDesign::from_json(j),
        Err(VerifyError::Version(9))
    ));
}

#[test]
fn ill_typed_designs_are_rejected() {
    let mut d = design("two-phase-set-map");
    let spec = spec_of(&d);
    d.query_star = get(var("state"), var("v"), tt());
    assert!(d.validate(&spec).is_ok());
    d.query_star = var("v");
    assert!(d.validate(&spec).is_err());
    let mut d = design("grow-only-set");
    d.init = Value::Int(3);
    assert!(matches!(d.validate(&spec), Err(VerifyError::BadInit(_))));
}

#[test]
fn verdict_json_shape() {
    let d = design("naive-set");
    let spec = spec_of(&d);
    let u = Universe::default_for(&spec, 2, 2);
    let v = check_bounded(&spec, &d, &u, 2).unwrap();
    let j = serde_json::to_value(&v).unwrap();
    assert_eq!(j["verdict"], "fail");
    assert_eq!(j["log"].as_array().unwrap().len(), 2);
    let p =
        serde_json::to_value(check_bounded(&spec, &design("two-phase-set-map"), &u, 2).unwrap())
            .unwrap();
    assert_eq!(p["verdict"], "pass");
    assert_eq!(p["log_bound"], 2);
}
