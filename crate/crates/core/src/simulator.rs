//! Deterministic multi-replica execution of a CRDT design: client
//! operations, full-state gossip and Lamport timestamps under a fixed
//! schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{self, LatticeError, Value};
use crate::seqspec::{OpValue, QueryValue, SequentialSpec, SpecError};
use crate::verifier::{log_in_order, CrdtDesign, Universe, VerifyError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event {index}: replica {replica} out of range")]
    NoSuchReplica { index: usize, replica: usize },
    #[error("event {index}: operation {op:?} fails its precondition")]
    Precondition { index: usize, op: OpValue },
    #[error("event {index}: expected {want} operation arguments, got {got}")]
    Arity {
        index: usize,
        want: usize,
        got: usize,
    },
    #[error("event {index}: query failed: {message}")]
    Query { index: usize, message: String },
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("a schedule needs at least one replica")]
    NoReplicas,
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub node_id: i64,
    pub state: Value,
    pub lamport_clock: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// A client operation at one replica. The timestamp is added by the
    /// replica, so `op` holds only the user-declared fields.
    Apply {
        replica: usize,
        op: OpValue,
    },
    Gossip {
        from: usize,
        to: usize,
    },
    QueryAll {
        query: QueryValue,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub replicas: usize,
    pub events: Vec<Event>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub event: usize,
    pub query: QueryValue,
    pub answers: Vec<Value>,
}

/// Evidence that a run did not end in agreement with the sequential type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Two replicas hold different states at the end of the schedule.
    States { a: usize, b: usize },
    /// A replica's final answer differs from the sequential type run over
    /// every applied operation in spec order.
    Reference {
        replica: usize,
        query: QueryValue,
        actual: Value,
        expected: Value,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub replicas: Vec<Replica>,
    pub converged: bool,
    pub queries: Vec<QueryRow>,
    /// Operations as applied, with timestamps when the spec uses them.
    pub applied: Vec<OpValue>,
    /// The applied operations reordered into a log the spec accepts, when
    /// one was found.
    pub reference_log: Option<Vec<OpValue>>,
    pub witnesses: Vec<Witness>,
}

impl SimReport {
    /// Whether the run disagrees with itself or with the sequential type.
    pub fn diverged(&self) -> bool {
        !self.witnesses.is_empty()
    }
}

/// Applies one event. Returns the per-replica answers for a query.
pub fn step(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    replicas: &mut [Replica],
    event: &Event,
    index: usize,
    applied: &mut Vec<OpValue>,
) -> Result<Option<Vec<Value>>, SimError> {
    let check = |r: usize| {
        if r < replicas.len() {
            Ok(())
        } else {
            Err(SimError::NoSuchReplica { index, replica: r })
        }
    };
    match event {
        Event::Apply { replica, op } => {
            check(*replica)?;
            if op.len() != spec.op_fields.len() {
                return Err(SimError::Arity {
                    index,
                    want: spec.op_fields.len(),
                    got: op.len(),
                });
            }
            let r = &mut replicas[*replica];
            r.lamport_clock += 1;
            let mut op = op.clone();
            if spec.flags.timestamps {
                op.push(Value::Int(r.lamport_clock));
            }
            if !spec.satisfies_precondition(&op)? {
                return Err(SimError::Precondition { index, op });
            }
            let delta = design.delta(spec, &r.state, &op, r.node_id, index)?;
            r.state = lattice::join(&design.state_type, &r.state, &delta)?;
            applied.push(op);
            Ok(None)
        }
        Event::Gossip { from, to } => {
            check(*from)?;
            check(*to)?;
            let sender = replicas[*from].clone();
            let r = &mut replicas[*to];
            r.state = lattice::join(&design.state_type, &r.state, &sender.state)?;
            r.lamport_clock = r.lamport_clock.max(sender.lamport_clock);
            Ok(None)
        }
        Event::QueryAll { query } => replicas
            .iter()
            .map(|r| design.query(spec, &r.state, query))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|e| SimError::Query {
                index,
                message: e.to_string(),
            }),
    }
}

/// Sorts operations into an order the spec accepts, if the ordering
/// relation allows it. Insertion sort: stable, and well defined even when
/// the relation is not a total preorder.
pub fn reference_log(
    spec: &SequentialSpec,
    ops: &[OpValue],
) -> Result<Option<Vec<OpValue>>, SpecError> {
    let before = |a: &OpValue, b: &OpValue| -> Result<bool, SpecError> {
        Ok(spec.ordered(a, b)? && !spec.ordered(b, a)?)
    };
    let mut log = ops.to_vec();
    for i in 1..log.len() {
        let mut j = i;
        while j > 0 && before(&log[j], &log[j - 1])? {
            log.swap(j, j - 1);
            j -= 1;
        }
    }
    Ok(log_in_order(spec, &log)?.then_some(log))
}

/// Runs a schedule from fresh replicas and compares the outcome with the
/// sequential type.
pub fn run(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    schedule: &Schedule,
) -> Result<SimReport, SimError> {
    if schedule.replicas == 0 {
        return Err(SimError::NoReplicas);
    }
    let mut replicas: Vec<Replica> = (0..schedule.replicas)
        .map(|i| Replica {
            node_id: i as i64,
            state: design.init.clone(),
            lamport_clock: 0,
        })
        .collect();
    let mut applied = Vec::new();
    let mut queries = Vec::new();
    for (index, event) in schedule.events.iter().enumerate() {
        if let Some(answers) = step(spec, design, &mut replicas, event, index, &mut applied)? {
            if let Event::QueryAll { query } = event {
                queries.push(QueryRow {
                    event: index,
                    query: query.clone(),
                    answers,
                });
            }
        }
    }
    let mut witnesses = Vec::new();
    for a in 0..replicas.len() {
        for b in a + 1..replicas.len() {
            if !lattice::semantic_eq(&design.state_type, &replicas[a].state, &replicas[b].state)? {
                witnesses.push(Witness::States { a, b });
            }
        }
    }
    let reference = reference_log(spec, &applied)?;
    if let Some(log) = &reference {
        let seq = spec.run_sequential(log)?;
        let mut seen: Vec<&QueryValue> = Vec::new();
        for row in &queries {
            if seen.contains(&&row.query) {
                continue;
            }
            seen.push(&row.query);
            let expected = spec.answer_query(&seq, &row.query)?;
            for (i, r) in replicas.iter().enumerate() {
                let actual =
                    design
                        .query(spec, &r.state, &row.query)
                        .map_err(|e| SimError::Query {
                            index: row.event,
                            message: e.to_string(),
                        })?;
                if actual != expected {
                    witnesses.push(Witness::Reference {
                        replica: i,
                        query: row.query.clone(),
                        actual,
                        expected: expected.clone(),
                    });
                }
            }
        }
    }
    Ok(SimReport {
        converged: !witnesses
            .iter()
            .any(|w| matches!(w, Witness::States { .. })),
        replicas,
        queries,
        applied,
        reference_log: reference,
        witnesses,
    })
}

/// Whether all final replica states are equal under the state lattice.
pub fn check_convergence(report: &SimReport) -> bool {
    report.converged
}

/// Gossip from every replica to every other, ordered so that the last
/// sender already holds everything.
pub fn quiescence(replicas: usize) -> Vec<Event> {
    let mut out = Vec::new();
    for from in 0..replicas {
        for to in 0..replicas {
            if from != to {
                out.push(Event::Gossip { from, to });
            }
        }
    }
    out
}

/// Random operations over the default universe, each followed by a gossip
/// between two random replicas with probability `gossip_rate`, then a
/// quiescence round and a query of every query value.
pub fn random_schedule(
    spec: &SequentialSpec,
    replicas: usize,
    op_count: usize,
    gossip_rate: f64,
    seed: u64,
) -> Result<Schedule, SimError> {
    if replicas == 0 {
        return Err(SimError::NoReplicas);
    }
    let universe = Universe::default_for(spec, 3, replicas);
    let domains: Vec<Vec<Value>> = spec
        .op_fields
        .iter()
        .map(|f| universe.values_for(f.sort))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(op_count * 2);
    for _ in 0..op_count {
        let op: OpValue = domains
            .iter()
            .map(|d| d[rng.gen_range(0..d.len())].clone())
            .collect();
        events.push(Event::Apply {
            replica: rng.gen_range(0..replicas),
            op,
        });
        if replicas > 1 && rng.gen_bool(gossip_rate) {
            let from = rng.gen_range(0..replicas);
            let to = (from + rng.gen_range(1..replicas)) % replicas;
            events.push(Event::Gossip { from, to });
        }
    }
    events.extend(quiescence(replicas));
    events.extend(
        universe
            .query_space(spec)
            .into_iter()
            .map(|query| Event::QueryAll { query }),
    );
    Ok(Schedule {
        replicas,
        events,
        seed: Some(seed),
    })
}

pub const SCENARIOS: [&str; 3] = ["fig1-left", "fig1-middle", "fig1-gossip"];

/// Insert/remove conflicts on a two-replica set, for specs with
/// `(add, value)` operations and a `v` query.
pub fn scenario(name: &str) -> Result<Schedule, SimError> {
    let insert = |replica: usize, v: i64| Event::Apply {
        replica,
        op: vec![Value::Int(1), Value::Int(v)],
    };
    let remove = |replica: usize, v: i64| Event::Apply {
        replica,
        op: vec![Value::Int(0), Value::Int(v)],
    };
    let ask = |v: i64| Event::QueryAll {
        query: vec![Value::Int(v)],
    };
    let mut events = match name {
        // concurrent insert and remove of one item
        "fig1-left" => vec![insert(0, 1), remove(1, 1)],
        // the right replica's insert reaches the left before its remove
        "fig1-middle" => vec![
            insert(0, 1),
            insert(1, 2),
            Event::Gossip { from: 1, to: 0 },
            remove(1, 2),
        ],
        // the same operations with no gossip until the end
        "fig1-gossip" => vec![insert(0, 1), insert(1, 2), remove(1, 2)],
        _ => return Err(SimError::UnknownScenario(name.into())),
    };
    events.extend(quiescence(2));
    events.extend([ask(1), ask(2)]);
    Ok(Schedule {
        replicas: 2,
        events,
        seed: None,
    })
}
