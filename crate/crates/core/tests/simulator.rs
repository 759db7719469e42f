use katalite::lattice::{self, Value};
use katalite::seqspec::{builtin_benchmark, SequentialSpec};
use katalite::simulator::*;
use katalite::verifier::{builtin_design, builtin_designs, CrdtDesign};

fn pair(name: &str) -> (SequentialSpec, CrdtDesign) {
    let d = builtin_design(name).unwrap();
    (builtin_benchmark(&d.spec_name).unwrap(), d)
}

fn verified() -> Vec<(String, SequentialSpec, CrdtDesign)> {
    builtin_designs()
        .into_iter()
        .filter(|(n, _)| *n != "naive-set")
        .map(|(n, d)| (n.to_string(), builtin_benchmark(&d.spec_name).unwrap(), d))
        .collect()
}

fn answers(r: &SimReport, v: i64) -> Vec<Value> {
    r.queries
        .iter()
        .rev()
        .find(|q| q.query == vec![Value::Int(v)])
        .unwrap()
        .answers
        .clone()
}

#[test]
fn gossip_both_ways_agrees() {
    let (spec, d) = pair("two-phase-set-map");
    let s = Schedule {
        replicas: 2,
        events: vec![
            Event::Apply {
                replica: 0,
                op: vec![Value::Int(1), Value::Int(1)],
            },
            Event::Apply {
                replica: 1,
                op: vec![Value::Int(0), Value::Int(2)],
            },
            Event::Gossip { from: 0, to: 1 },
            Event::Gossip { from: 1, to: 0 },
        ],
        seed: None,
    };
    let r = run(&spec, &d, &s).unwrap();
    assert!(check_convergence(&r));
    assert!(
        lattice::semantic_eq(&d.state_type, &r.replicas[0].state, &r.replicas[1].state).unwrap()
    );
}

#[test]
fn lww_reads_the_causally_later_write() {
    let (spec, d) = pair("lww-register");
    let mut events = vec![
        Event::Apply {
            replica: 0,
            op: vec![Value::Int(1)],
        },
        Event::Gossip { from: 0, to: 1 },
        Event::Apply {
            replica: 1,
            op: vec![Value::Int(2)],
        },
    ];
    events.extend(quiescence(3));
    events.push(Event::QueryAll { query: vec![] });
    let r = run(
        &spec,
        &d,
        &Schedule {
            replicas: 3,
            events,
            seed: None,
        },
    )
    .unwrap();
    assert_eq!(
        r.applied,
        vec![
            vec![Value::Int(1), Value::Int(1)],
            vec![Value::Int(2), Value::Int(2)]
        ]
    );
    assert_eq!(r.queries[0].answers, vec![Value::Int(2); 3]);
    assert!(!r.diverged());
}

#[test]
fn concurrent_insert_and_remove() {
    let (spec, d) = pair("two-phase-set-classic");
    let r = run(&spec, &d, &scenario("fig1-left").unwrap()).unwrap();
    assert_eq!(answers(&r, 1), vec![Value::Bool(false); 2]);
    assert!(!r.diverged());

    let (spec, naive) = pair("naive-set");
    let r = run(&spec, &naive, &scenario("fig1-left").unwrap()).unwrap();
    assert!(check_convergence(&r));
    assert_eq!(answers(&r, 1), vec![Value::Bool(true); 2]);
    assert!(r.diverged());
}

#[test]
fn scenarios_separate_the_naive_set_from_the_two_set_design() {
    for name in SCENARIOS {
        let s = scenario(name).unwrap();
        let (spec, good) = pair("two-phase-set-classic");
        let r = run(&spec, &good, &s).unwrap();
        assert!(
            check_convergence(&r) && !r.diverged(),
            "{name}: {:?}",
            r.witnesses
        );
        let naive = builtin_design("naive-set").unwrap();
        let r = run(&spec, &naive, &s).unwrap();
        assert!(r.diverged(), "{name}");
    }
    let (spec, naive) = pair("naive-set");
    let r = run(&spec, &naive, &scenario("fig1-middle").unwrap()).unwrap();
    // the removed item survives through the earlier gossip
    assert_eq!(answers(&r, 2), vec![Value::Bool(true); 2]);
    assert!(r
        .witnesses
        .iter()
        .any(|w| matches!(w, Witness::Reference { query, .. } if *query == vec![Value::Int(2)])));
    assert!(matches!(
        scenario("fig1-right"),
        Err(SimError::UnknownScenario(_))
    ));
}

#[test]
fn single_replica_converges() {
    let (spec, d) = pair("naive-set");
    let s = random_schedule(&spec, 1, 30, 0.3, 7).unwrap();
    assert!(s.events.iter().all(|e| !matches!(e, Event::Gossip { .. })));
    assert!(check_convergence(&run(&spec, &d, &s).unwrap()));
}

#[test]
fn verified_designs_converge_under_random_schedules() {
    for (name, spec, d) in verified() {
        for seed in 0..100 {
            let s = random_schedule(&spec, 3, 100, 0.3, seed).unwrap();
            let r = run(&spec, &d, &s).unwrap();
            assert!(check_convergence(&r), "{name} seed {seed}");
            assert!(r.reference_log.is_some(), "{name} seed {seed}");
            assert!(!r.diverged(), "{name} seed {seed}: {:?}", r.witnesses);
        }
    }
}

#[test]
fn counters_count_exactly() {
    for name in ["grow-only-counter", "general-counter"] {
        let (spec, d) = pair(name);
        for seed in 0..100 {
            let s = random_schedule(&spec, 3, 100, 0.3, seed).unwrap();
            let r = run(&spec, &d, &s).unwrap();
            let inc = r
                .applied
                .iter()
                .filter(|o| o.first().is_none_or(|x| *x == Value::Int(1)))
                .count() as i64;
            let dec = r.applied.len() as i64 - inc;
            assert_eq!(
                r.queries.last().unwrap().answers,
                vec![Value::Int(inc - dec); 3],
                "{name} seed {seed}"
            );
        }
    }
}

#[test]
fn replica_states_only_grow() {
    for (name, spec, d) in verified() {
        let s = random_schedule(&spec, 3, 60, 0.3, 11).unwrap();
        let mut replicas: Vec<Replica> = (0..3)
            .map(|i| Replica {
                node_id: i,
                state: d.init.clone(),
                lamport_clock: 0,
            })
            .collect();
        let mut applied = Vec::new();
        for (i, e) in s.events.iter().enumerate() {
            let before = replicas.clone();
            step(&spec, &d, &mut replicas, e, i, &mut applied).unwrap();
            for (a, b) in before.iter().zip(&replicas) {
                assert!(
                    lattice::leq(&d.state_type, &a.state, &b.state).unwrap(),
                    "{name}"
                );
                assert!(a.lamport_clock <= b.lamport_clock);
            }
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let (spec, d) = pair("add-wins-set");
    let a = random_schedule(&spec, 3, 100, 0.3, 5).unwrap();
    let b = random_schedule(&spec, 3, 100, 0.3, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, random_schedule(&spec, 3, 100, 0.3, 6).unwrap());
    assert_eq!(run(&spec, &d, &a).unwrap(), run(&spec, &d, &b).unwrap());
    let json = serde_json::to_string(&a).unwrap();
    let back: Schedule = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}

#[test]
fn bad_events_are_reported() {
    let (spec, d) = pair("grow-only-set");
    let out_of_range = Schedule {
        replicas: 2,
        events: vec![Event::Gossip { from: 0, to: 2 }],
        seed: None,
    };
    assert!(matches!(
        run(&spec, &d, &out_of_range),
        Err(SimError::NoSuchReplica {
            index: 0,
            replica: 2
        })
    ));
    let short = Schedule {
        replicas: 1,
        events: vec![Event::Apply {
            replica: 0,
            op: vec![Value::Int(1)],
        }],
        seed: None,
    };
    assert!(matches!(
        run(&spec, &d, &short),
        Err(SimError::Arity {
            want: 2,
            got: 1,
            ..
        })
    ));
    assert!(matches!(
        random_schedule(&spec, 0, 1, 0.3, 0),
        Err(SimError::NoReplicas)
    ));
}
