//! Iterative-deepening search over state types and their transition,
//! query and initial-state candidates, with two-phase bounded checking and
//! a shared counterexample cache.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Env, TermRef};
use crate::grammar::{
    component_var, distinct_transitions, enumerate_initial_states, enumerate_state_types,
    transition_candidates, Goal, GrammarConfig, Role, StateSorts, TermGrammar,
};
use crate::lattice::{LatticeType, Value};
use crate::seqspec::{OpValue, QueryValue, SequentialSpec, SpecError};
use crate::verifier::{
    check_bounded_with_budget, fold_crdt, query_bindings, CrdtDesign, Obligations, Provenance,
    Universe, Verdict, VerifyError, DEFAULT_BUDGET,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_depth: usize,
    pub initial_log_bound: usize,
    pub phase2_log_bound_delta: usize,
    pub phase2_universe_delta: usize,
    /// Escalation stops once the phase-1 log bound would exceed this.
    pub max_log_bound: usize,
    pub universe_size: usize,
    pub nodes: usize,
    /// Worker threads; 0 picks rayon's default.
    pub workers: usize,
    /// Report the first winner in state-type order rather than the first to finish.
    pub deterministic: bool,
    pub use_cache: bool,
    /// Time allowed per state type.
    pub state_budget: Option<Duration>,
    pub timeout: Option<Duration>,
    /// Shuffles state types of equal depth when set.
    pub seed: Option<u64>,
    /// Prefix-query checks allowed per bounded check.
    pub check_budget: u64,
    /// Restricts the search to one state type.
    pub hint_state: Option<LatticeType>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_depth: 4,
            initial_log_bound: 2,
            phase2_log_bound_delta: 2,
            phase2_universe_delta: 1,
            max_log_bound: 5,
            universe_size: 3,
            nodes: 2,
            workers: 0,
            deterministic: true,
            use_cache: true,
            state_budget: None,
            timeout: None,
            seed: None,
            check_budget: DEFAULT_BUDGET,
            hint_state: None,
        }
    }
}

impl SearchConfig {
    pub fn universe(&self, spec: &SequentialSpec) -> Universe {
        Universe::default_for(spec, self.universe_size, self.nodes)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CexRecord {
    pub log: Vec<OpValue>,
    pub nodes: Vec<i64>,
    pub query: QueryValue,
    pub expected: Value,
}

/// Append-only store of counterexamples, shared by all workers of a search.
#[derive(Debug, Default)]
pub struct CexCache {
    records: RwLock<Vec<Arc<CexRecord>>>,
}

impl CexCache {
    pub fn new() -> Self {
        CexCache::default()
    }

    /// Adds a record unless an identical one is present.
    pub fn push(&self, r: CexRecord) -> bool {
        let mut w = self.records.write().expect("cache lock");
        if w.iter().any(|x| **x == r) {
            return false;
        }
        w.push(Arc::new(r));
        true
    }

    pub fn snapshot(&self) -> Vec<Arc<CexRecord>> {
        self.records.read().expect("cache lock").clone()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Work counters for one state type or a whole search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    /// (initial state, transition) pairs examined.
    pub transitions: u64,
    /// Transitions rejected because two logs reach one state with different answers.
    pub state_conflicts: u64,
    /// Complete candidates considered.
    pub candidates: u64,
    /// Candidates rejected by replaying cached counterexamples.
    pub cache_rejections: u64,
    /// Bounded checks run to completion or first mismatch: observation
    /// tables built plus queries checked against them.
    pub full_checks: u64,
    pub phase2_checks: u64,
    pub phase2_failures: u64,
    pub escalations: u64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.transitions += o.transitions;
        self.state_conflicts += o.state_conflicts;
        self.candidates += o.candidates;
        self.cache_rejections += o.cache_rejections;
        self.full_checks += o.full_checks;
        self.phase2_checks += o.phase2_checks;
        self.phase2_failures += o.phase2_failures;
        self.escalations += o.escalations;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOutcome {
    Found,
    Exhausted,
    EscalationLimit,
    Inconclusive,
    Cancelled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateReport {
    pub depth: usize,
    pub index: usize,
    pub state_type: LatticeType,
    pub outcome: StateOutcome,
    pub final_log_bound: usize,
    pub stats: Stats,
    pub millis: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOutcome {
    Found,
    NotFound,
    Timeout,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchReport {
    pub spec: String,
    pub outcome: SearchOutcome,
    pub designs: Vec<CrdtDesign>,
    pub depth_reached: usize,
    pub states: Vec<StateReport>,
    pub totals: Stats,
    pub cache_size: usize,
    pub millis: u128,
}

impl SearchReport {
    pub fn design(&self) -> Option<&CrdtDesign> {
        self.designs.first()
    }
}

type SharedObligations = Arc<Result<Obligations, String>>;

/// Shared state of one search.
struct Ctx<'a> {
    spec: &'a SequentialSpec,
    cfg: &'a SearchConfig,
    cache: Arc<CexCache>,
    /// Keyed by (universe size, log bound).
    obligations: Mutex<HashMap<(usize, usize), SharedObligations>>,
    deadline: Option<Instant>,
    stop: AtomicBool,
    /// Lowest state-type index that has produced a winner at the current depth.
    best: AtomicUsize,
    timed_out: AtomicBool,
    /// Operations of the phase-2 universe, which contains the phase-1 one.
    fingerprint_ops: Vec<OpValue>,
}

enum Phase1 {
    Found(CrdtDesign),
    Exhausted,
    Inconclusive(String),
    Cancelled,
}

impl<'a> Ctx<'a> {
    fn new(
        spec: &'a SequentialSpec,
        cfg: &'a SearchConfig,
        cache: Arc<CexCache>,
    ) -> Result<Self, SpecError> {
        let fingerprint_ops = cfg
            .universe(spec)
            .enlarge(cfg.phase2_universe_delta)
            .op_space(spec)?;
        Ok(Ctx {
            fingerprint_ops,
            spec,
            cfg,
            cache,
            obligations: Mutex::new(HashMap::new()),
            deadline: cfg.timeout.map(|t| Instant::now() + t),
            stop: AtomicBool::new(false),
            best: AtomicUsize::new(usize::MAX),
            timed_out: AtomicBool::new(false),
        })
    }

    fn obligations(
        &self,
        universe: &Universe,
        bound: usize,
    ) -> Result<SharedObligations, SpecError> {
        let key = (universe.size, bound);
        if let Some(o) = self.obligations.lock().expect("obligations lock").get(&key) {
            return Ok(o.clone());
        }
        let built = Arc::new(Obligations::build(
            self.spec,
            universe,
            bound,
            self.cfg.check_budget,
        )?);
        Ok(self
            .obligations
            .lock()
            .expect("obligations lock")
            .entry(key)
            .or_insert(built)
            .clone())
    }

    fn cancelled(&self, index: usize, state_deadline: Option<Instant>) -> bool {
        if self.stop.load(Ordering::Relaxed) {
            return true;
        }
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                self.timed_out.store(true, Ordering::Relaxed);
                self.stop.store(true, Ordering::Relaxed);
                return true;
            }
        }
        if state_deadline.is_some_and(|d| Instant::now() >= d) {
            return true;
        }
        self.cfg.deterministic && index > self.best.load(Ordering::Relaxed)
    }

    fn design(
        &self,
        state_type: &LatticeType,
        init: &Value,
        f: &TermRef,
        q: &TermRef,
        depth: usize,
    ) -> CrdtDesign {
        CrdtDesign {
            spec_name: self.spec.name.clone(),
            state_type: state_type.clone(),
            init: init.clone(),
            f_star: f.clone(),
            query_star: q.clone(),
            flags: self.spec.flags,
            provenance: Provenance {
                grammar_depth: Some(depth),
                source: "synthesized".into(),
                ..Provenance::default()
            },
        }
    }

    /// Phase 1 for one state type at one depth and log bound.
    #[allow(clippy::too_many_arguments)]
    fn synth_for_state(
        &self,
        state_type: &LatticeType,
        depth: usize,
        log_bound: usize,
        refuted: &HashSet<(Value, TermRef, TermRef)>,
        stats: &mut Stats,
        index: usize,
        state_deadline: Option<Instant>,
    ) -> Result<Phase1, SpecError> {
        let spec = self.spec;
        let universe = self.cfg.universe(spec);
        let obl = self.obligations(&universe, log_bound)?;
        let obl = match &*obl {
            Ok(o) => o,
            Err(reason) => return Ok(Phase1::Inconclusive(reason.clone())),
        };
        let mut tg = TermGrammar::for_transition(spec, state_type);
        let Ok(query_sort) = spec.query_sort() else {
            return Ok(Phase1::Exhausted);
        };
        let query_goal = Goal::sort(query_sort);
        let inits = enumerate_initial_states(
            &GrammarConfig::for_spec(spec, depth, Role::InitialState),
            state_type,
        );
        let placeholder = crate::expr::build::tt();
        let stream = if spec.flags.non_idempotent {
            transition_candidates(&mut tg, spec, state_type, depth)
        } else {
            distinct_transitions(&mut tg, spec, state_type, depth, &self.fingerprint_ops)
        };
        for cand in stream {
            for init in &inits {
                if self.cancelled(index, state_deadline) {
                    return Ok(Phase1::Cancelled);
                }
                stats.transitions += 1;
                let probe = self.design(state_type, init, &cand.term, &placeholder, depth);
                let cached: Vec<(Value, Arc<CexRecord>)> = if self.cfg.use_cache {
                    let mut folded = Vec::new();
                    for r in self.cache.snapshot() {
                        if obl.covers(&r.log, &r.nodes, &r.query) {
                            if let Ok(s) = fold_crdt(spec, &probe, &r.log, &r.nodes) {
                                folded.push((s, r));
                            }
                        }
                    }
                    folded
                } else {
                    Vec::new()
                };
                if cached_conflict(&cached) {
                    stats.cache_rejections += 1;
                    continue;
                }
                stats.full_checks += 1;
                let table = match obl.observe(&probe) {
                    Ok(Ok(t)) => t,
                    Ok(Err(c)) => {
                        stats.state_conflicts += 1;
                        if self.cfg.use_cache {
                            for (log, nodes, expected) in [c.first, c.second] {
                                self.cache.push(CexRecord {
                                    log,
                                    nodes,
                                    query: c.query.clone(),
                                    expected,
                                });
                            }
                        }
                        continue;
                    }
                    Err(e) => {
                        debug!("transition {} rejected: {e}", cand.term);
                        continue;
                    }
                };
                let examples = obl.query_examples(&table, state_type);
                let known: Vec<(Env, Value)> = cached
                    .iter()
                    .map(|(s, r)| {
                        (
                            query_bindings(spec, state_type, s, &r.query),
                            r.expected.clone(),
                        )
                    })
                    .collect();
                let envs = known
                    .iter()
                    .map(|(e, _)| e.clone())
                    .chain(examples.iter().map(|x| x.env.clone()))
                    .collect();
                let mut qg = TermGrammar::for_query(spec, state_type).with_examples(envs);
                for d in 1..=depth {
                    if self.cancelled(index, state_deadline) {
                        return Ok(Phase1::Cancelled);
                    }
                    for q in qg.terms_at(&query_goal, d).iter() {
                        if refuted.contains(&(init.clone(), cand.term.clone(), q.term.clone())) {
                            continue;
                        }
                        stats.candidates += 1;
                        if known
                            .iter()
                            .any(|(e, want)| expr::eval(&q.term, e).map_or(true, |a| a != *want))
                        {
                            stats.cache_rejections += 1;
                            continue;
                        }
                        stats.full_checks += 1;
                        let miss =
                            examples
                                .iter()
                                .find_map(|x| match expr::eval(&q.term, &x.env) {
                                    Ok(a) if a == x.expected => None,
                                    Ok(a) => Some(Some(obl.example_counterexample(&table, x, a))),
                                    Err(_) => Some(None),
                                });
                        match miss {
                            None => {
                                return Ok(Phase1::Found(
                                    self.design(state_type, init, &cand.term, &q.term, depth),
                                ))
                            }
                            Some(Some(c)) if self.cfg.use_cache => {
                                self.cache.push(CexRecord {
                                    log: c.log,
                                    nodes: c.nodes,
                                    query: c.query,
                                    expected: c.expected,
                                });
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        Ok(Phase1::Exhausted)
    }

    /// The two-phase loop of one state type, with escalation.
    fn try_state(
        &self,
        state_type: &LatticeType,
        depth: usize,
        index: usize,
    ) -> Result<(Option<CrdtDesign>, StateReport), SynthError> {
        let started = Instant::now();
        debug!("{}: trying {state_type} at depth {depth}", self.spec.name);
        let state_deadline = self.cfg.state_budget.map(|b| started + b);
        let mut stats = Stats::default();
        let mut refuted: HashSet<(Value, TermRef, TermRef)> = HashSet::new();
        let mut bound = self.cfg.initial_log_bound.max(2);
        let mut p2_bound = bound + self.cfg.phase2_log_bound_delta;
        let p2_universe = self
            .cfg
            .universe(self.spec)
            .enlarge(self.cfg.phase2_universe_delta);
        let report = |outcome, bound, stats| StateReport {
            depth,
            index,
            state_type: state_type.clone(),
            outcome,
            final_log_bound: bound,
            stats,
            millis: started.elapsed().as_millis(),
        };
        loop {
            let design = match self.synth_for_state(
                state_type,
                depth,
                bound,
                &refuted,
                &mut stats,
                index,
                state_deadline,
            )? {
                Phase1::Found(d) => d,
                Phase1::Exhausted => {
                    return Ok((None, report(StateOutcome::Exhausted, bound, stats)))
                }
                Phase1::Cancelled => {
                    return Ok((None, report(StateOutcome::Cancelled, bound, stats)))
                }
                Phase1::Inconclusive(reason) => {
                    debug!("{state_type}: phase 1 inconclusive: {reason}");
                    return Ok((None, report(StateOutcome::Inconclusive, bound, stats)));
                }
            };
            stats.phase2_checks += 1;
            let verdict = match &*self.obligations(&p2_universe, p2_bound)? {
                Ok(o) => o.check(&design)?,
                Err(reason) => Verdict::Inconclusive {
                    reason: reason.clone(),
                },
            };
            match verdict {
                Verdict::Pass(b) => {
                    let mut design = design;
                    design.provenance.verified_log_bound = Some(b.log_bound);
                    design.provenance.verified_universe = Some(b.universe);
                    info!("{}: {} passes {}", self.spec.name, state_type, b);
                    return Ok((Some(design), report(StateOutcome::Found, bound, stats)));
                }
                Verdict::Fail(c) => {
                    stats.phase2_failures += 1;
                    debug!("{state_type}: phase 2 rejects {design}");
                    self.cache.push(CexRecord {
                        log: c.log,
                        nodes: c.nodes,
                        query: c.query,
                        expected: c.expected,
                    });
                }
                Verdict::Inconclusive { reason } => {
                    warn!("{state_type}: phase 2 inconclusive ({reason}); escalating");
                }
            }
            refuted.insert((design.init, design.f_star, design.query_star));
            if bound + 1 > self.cfg.max_log_bound {
                return Ok((None, report(StateOutcome::EscalationLimit, bound, stats)));
            }
            bound += 1;
            p2_bound += 1;
            stats.escalations += 1;
        }
    }
}

/// Whether two cached logs reach one state but expect different answers
/// to the same query.
fn cached_conflict(folded: &[(Value, Arc<CexRecord>)]) -> bool {
    let mut seen: HashMap<(&Value, &QueryValue), &Value> = HashMap::new();
    for (s, r) in folded {
        if let Some(e) = seen.insert((s, &r.query), &r.expected) {
            if *e != r.expected {
                return true;
            }
        }
    }
    false
}

/// Phase 1 alone: the first candidate for `state_type` that passes the
/// bounded check at `log_bound`.
pub fn synth_for_state(
    spec: &SequentialSpec,
    state_type: &LatticeType,
    depth: usize,
    log_bound: usize,
    cfg: &SearchConfig,
    cache: Arc<CexCache>,
) -> Result<(Option<CrdtDesign>, Stats), SynthError> {
    let ctx = Ctx::new(spec, cfg, cache)?;
    let mut stats = Stats::default();
    let found = match ctx.synth_for_state(
        state_type,
        depth,
        log_bound,
        &HashSet::new(),
        &mut stats,
        0,
        None,
    )? {
        Phase1::Found(d) => Some(d),
        _ => None,
    };
    Ok((found, stats))
}

/// Re-checks a design at the enlarged phase-2 bounds for `log_bound`, caching
/// any counterexample.
pub fn phase2_check(
    spec: &SequentialSpec,
    design: &CrdtDesign,
    log_bound: usize,
    cfg: &SearchConfig,
    cache: &CexCache,
) -> Result<Verdict, SynthError> {
    let universe = cfg.universe(spec).enlarge(cfg.phase2_universe_delta);
    let v = check_bounded_with_budget(
        spec,
        design,
        &universe,
        log_bound + cfg.phase2_log_bound_delta,
        cfg.check_budget,
    )?;
    if let Verdict::Fail(c) = &v {
        cache.push(CexRecord {
            log: c.log.clone(),
            nodes: c.nodes.clone(),
            query: c.query.clone(),
            expected: c.expected.clone(),
        });
    }
    Ok(v)
}

/// State types tried at `depth`, in search order.
pub fn state_types_at(spec: &SequentialSpec, depth: usize, cfg: &SearchConfig) -> Vec<LatticeType> {
    if let Some(h) = &cfg.hint_state {
        return vec![h.clone()];
    }
    let mut types: Vec<LatticeType> = enumerate_state_types(depth, &StateSorts::for_spec(spec), 2)
        .into_iter()
        .filter(|t| t.canonical() == *t)
        .collect();
    if let Some(seed) = cfg.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ depth as u64);
        let mut start = 0;
        while start < types.len() {
            let d = types[start].depth();
            let end = start + types[start..].iter().take_while(|t| t.depth() == d).count();
            types[start..end].shuffle(&mut rng);
            start = end;
        }
    }
    types
}

fn with_pool<T: Send>(cfg: &SearchConfig, f: impl FnOnce() -> T + Send) -> Result<T, SynthError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if cfg.workers > 0 {
        b = b.num_threads(cfg.workers);
    }
    let pool = b.build().map_err(|e| SynthError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

type Attempt = Result<(Option<CrdtDesign>, StateReport), SynthError>;

/// Searches for the first design passing both phases.
pub fn search(spec: &SequentialSpec, cfg: &SearchConfig) -> Result<SearchReport, SynthError> {
    search_with_cache(spec, cfg, Arc::new(CexCache::new()))
}

pub fn search_with_cache(
    spec: &SequentialSpec,
    cfg: &SearchConfig,
    cache: Arc<CexCache>,
) -> Result<SearchReport, SynthError> {
    spec.validate()?;
    let started = Instant::now();
    let ctx = Ctx::new(spec, cfg, cache)?;
    let mut states: Vec<StateReport> = Vec::new();
    let mut depth_reached = 0;
    let mut winner = None;
    with_pool(cfg, || -> Result<(), SynthError> {
        for depth in 2..=cfg.max_depth {
            depth_reached = depth;
            let types = state_types_at(spec, depth, cfg);
            info!("{}: depth {depth}, {} state types", spec.name, types.len());
            ctx.best.store(usize::MAX, Ordering::Relaxed);
            let reports: Mutex<Vec<StateReport>> = Mutex::new(Vec::new());
            let run = |(i, t): (usize, &LatticeType)| -> Option<Attempt> {
                if ctx.cancelled(i, None) {
                    return None;
                }
                match ctx.try_state(t, depth, i) {
                    Ok((found, report)) => {
                        reports.lock().expect("reports lock").push(report.clone());
                        let found = found?;
                        ctx.best.fetch_min(i, Ordering::Relaxed);
                        if !cfg.deterministic {
                            ctx.stop.store(true, Ordering::Relaxed);
                        }
                        Some(Ok((Some(found), report)))
                    }
                    Err(e) => Some(Err(e)),
                }
            };
            let hit = if cfg.deterministic {
                types
                    .par_iter()
                    .enumerate()
                    .filter_map(run)
                    .find_first(|_| true)
            } else {
                types
                    .par_iter()
                    .enumerate()
                    .filter_map(run)
                    .find_any(|_| true)
            };
            let mut reports = reports.into_inner().expect("reports lock");
            reports.sort_by_key(|r| r.index);
            match hit {
                Some(Err(e)) => return Err(e),
                Some(Ok((design, report))) => {
                    if cfg.deterministic {
                        reports.retain(|r| r.index <= report.index);
                    }
                    states.extend(reports);
                    winner = design;
                    return Ok(());
                }
                None => states.extend(reports),
            }
            if ctx.timed_out.load(Ordering::Relaxed) {
                return Ok(());
            }
        }
        Ok(())
    })??;
    let mut totals = Stats::default();
    for r in &states {
        totals.add(&r.stats);
    }
    let outcome = match (&winner, ctx.timed_out.load(Ordering::Relaxed)) {
        (Some(_), _) => SearchOutcome::Found,
        (None, true) => SearchOutcome::Timeout,
        (None, false) => SearchOutcome::NotFound,
    };
    Ok(SearchReport {
        spec: spec.name.clone(),
        outcome,
        designs: winner.into_iter().collect(),
        depth_reached,
        states,
        totals,
        cache_size: ctx.cache.len(),
        millis: started.elapsed().as_millis(),
    })
}

/// The state type a design actually uses: free-tuple components the query
/// never reads are dropped.
pub fn effective_state_type(d: &CrdtDesign) -> LatticeType {
    let LatticeType::FreeTuple { elements } = &d.state_type else {
        return d.state_type.canonical();
    };
    let mut used = Vec::new();
    d.query_star.free_vars(&mut used);
    let kept: Vec<LatticeType> = elements
        .iter()
        .enumerate()
        .filter(|(i, _)| used.iter().any(|v| **v == *component_var(*i)))
        .map(|(_, e)| e.canonical())
        .collect();
    match kept.len() {
        0 => LatticeType::free(vec![]),
        1 => kept.into_iter().next().unwrap(),
        _ => LatticeType::free(kept),
    }
}

/// Collects up to `k` verified designs with pairwise distinct effective
/// state types, in search order.
pub fn search_all(
    spec: &SequentialSpec,
    cfg: &SearchConfig,
    k: usize,
) -> Result<SearchReport, SynthError> {
    spec.validate()?;
    let started = Instant::now();
    let mut cfg = cfg.clone();
    cfg.deterministic = false;
    let ctx = Ctx::new(spec, &cfg, Arc::new(CexCache::new()))?;
    let mut designs: Vec<CrdtDesign> = Vec::new();
    let mut seen: Vec<LatticeType> = Vec::new();
    let mut solved: HashSet<LatticeType> = HashSet::new();
    let mut states: Vec<StateReport> = Vec::new();
    let mut depth_reached = 0;
    with_pool(&cfg, || -> Result<(), SynthError> {
        for depth in 2..=cfg.max_depth {
            depth_reached = depth;
            let types: Vec<LatticeType> = state_types_at(spec, depth, &cfg)
                .into_iter()
                .filter(|t| !solved.contains(t))
                .collect();
            let results: Vec<Attempt> = types
                .par_iter()
                .enumerate()
                .map(|(i, t)| ctx.try_state(t, depth, i))
                .collect();
            for r in results {
                let (found, report) = r?;
                states.push(report);
                let Some(d) = found else { continue };
                solved.insert(d.state_type.clone());
                let eff = effective_state_type(&d);
                if seen.contains(&eff) {
                    continue;
                }
                seen.push(eff);
                designs.push(d);
                if designs.len() == k {
                    return Ok(());
                }
            }
            if ctx.timed_out.load(Ordering::Relaxed) {
                return Ok(());
            }
        }
        Ok(())
    })??;
    let mut totals = Stats::default();
    for r in &states {
        totals.add(&r.stats);
    }
    let outcome = if designs.len() == k {
        SearchOutcome::Found
    } else if ctx.timed_out.load(Ordering::Relaxed) {
        SearchOutcome::Timeout
    } else {
        SearchOutcome::NotFound
    };
    Ok(SearchReport {
        spec: spec.name.clone(),
        outcome,
        designs,
        depth_reached,
        states,
        totals,
        cache_size: ctx.cache.len(),
        millis: started.elapsed().as_millis(),
    })
}
