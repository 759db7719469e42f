use std::sync::Arc;

use katalite::lattice::{LatticeType, ScalarSort};
use katalite::seqspec::{builtin_benchmark, SequentialSpec};
use katalite::synthesizer::*;
use katalite::verifier::{builtin_design, check_bounded, replay, Universe, Verdict};

fn spec(name: &str) -> SequentialSpec {
    builtin_benchmark(name).unwrap()
}

fn two_phase_map() -> LatticeType {
    LatticeType::map(ScalarSort::Opaque, LatticeType::OrBool)
}

fn found(name: &str, cfg: &SearchConfig) -> SearchReport {
    let r = search(&spec(name), cfg).unwrap();
    assert_eq!(r.outcome, SearchOutcome::Found, "{name}");
    r
}

/// Re-verifies a returned design at the bounds its provenance claims.
fn assert_verified(spec: &SequentialSpec, r: &SearchReport) {
    for d in &r.designs {
        let bound = d.provenance.verified_log_bound.unwrap();
        let u = Universe::default_for(spec, d.provenance.verified_universe.unwrap(), 3);
        assert!(check_bounded(spec, d, &u, bound).unwrap().is_pass(), "{d}");
    }
}

#[test]
fn two_phase_set_prefers_the_map_design() {
    let r = found("two-phase-set", &SearchConfig::default());
    let d = r.design().unwrap();
    assert_eq!(d.state_type, two_phase_map());
    assert_eq!(d.provenance.grammar_depth, Some(3));
    assert!(r
        .states
        .iter()
        .all(|s| s.outcome != StateOutcome::Found || s.state_type == two_phase_map()));
    assert_verified(&spec("two-phase-set"), &r);
}

#[test]
fn simple_benchmarks_reach_their_state_types() {
    let clock = || LatticeType::max_int(ScalarSort::Clock);
    let cases = [
        ("grow-only-set", LatticeType::set(ScalarSort::Opaque)),
        (
            "lww-register",
            LatticeType::lex(clock(), LatticeType::max_int(ScalarSort::Opaque)),
        ),
        (
            "enable-wins-flag",
            LatticeType::lex(clock(), LatticeType::OrBool),
        ),
        (
            "disable-wins-flag",
            LatticeType::lex(clock(), LatticeType::OrBool),
        ),
        (
            "grow-only-counter",
            LatticeType::map(ScalarSort::NodeID, LatticeType::max_int(ScalarSort::Int)),
        ),
    ];
    for (name, want) in cases {
        let r = found(name, &SearchConfig::default());
        assert_eq!(r.design().unwrap().state_type, want, "{name}");
        assert_verified(&spec(name), &r);
    }
}

#[test]
fn search_all_returns_both_two_phase_designs() {
    let s = spec("two-phase-set");
    let r = search_all(&s, &SearchConfig::default(), 2).unwrap();
    let types: Vec<LatticeType> = r.designs.iter().map(effective_state_type).collect();
    assert_eq!(types.len(), 2);
    assert_eq!(types[0], two_phase_map());
    let sets = LatticeType::set(ScalarSort::Opaque);
    assert_eq!(types[1], LatticeType::free(vec![sets.clone(), sets]));
    assert_verified(&s, &r);
}

#[test]
fn search_all_with_one_matches_search() {
    let s = spec("grow-only-set");
    let one = search_all(&s, &SearchConfig::default(), 1).unwrap();
    let first = search(&s, &SearchConfig::default()).unwrap();
    assert_eq!(one.designs.len(), 1);
    assert_eq!(
        one.design().unwrap().state_type,
        first.design().unwrap().state_type
    );
}

#[test]
fn cache_prunes_without_changing_the_winner() {
    let s = spec("two-phase-set");
    let base = SearchConfig {
        workers: 1,
        ..SearchConfig::default()
    };
    let with = search(&s, &base).unwrap();
    let without = search(
        &s,
        &SearchConfig {
            use_cache: false,
            ..base
        },
    )
    .unwrap();
    assert_eq!(with.design(), without.design());
    assert_eq!(without.totals.cache_rejections, 0);
    assert!(
        without.totals.full_checks >= 2 * with.totals.full_checks,
        "{} vs {}",
        without.totals.full_checks,
        with.totals.full_checks
    );
}

#[test]
fn deterministic_runs_agree() {
    for name in ["two-phase-set", "lww-register"] {
        let a = found(name, &SearchConfig::default());
        let b = found(
            name,
            &SearchConfig {
                workers: 3,
                ..SearchConfig::default()
            },
        );
        assert_eq!(
            a.design().unwrap().to_json().to_string(),
            b.design().unwrap().to_json().to_string()
        );
    }
}

#[test]
fn cached_counterexamples_never_refute_the_winner() {
    let s = spec("enable-wins-flag");
    let cache = Arc::new(CexCache::new());
    let r = search_with_cache(&s, &SearchConfig::default(), cache.clone()).unwrap();
    let d = r.design().unwrap();
    assert!(!cache.is_empty());
    for rec in cache.snapshot() {
        assert!(
            replay(&s, d, &rec.log, &rec.nodes, &rec.query)
                .unwrap()
                .is_none(),
            "{rec:?}"
        );
    }
}

#[test]
fn no_or_bool_two_phase_set() {
    let s = spec("two-phase-set");
    let cfg = SearchConfig::default();
    let (d, stats) = synth_for_state(
        &s,
        &LatticeType::OrBool,
        4,
        2,
        &cfg,
        Arc::new(CexCache::new()),
    )
    .unwrap();
    assert!(d.is_none());
    assert!(stats.transitions > 0);
}

#[test]
fn phase_one_finds_the_map_design() {
    let s = spec("two-phase-set");
    let cfg = SearchConfig::default();
    let (d, _) =
        synth_for_state(&s, &two_phase_map(), 3, 2, &cfg, Arc::new(CexCache::new())).unwrap();
    let d = d.unwrap();
    let u = cfg.universe(&s);
    assert!(check_bounded(&s, &d, &u, 2).unwrap().is_pass());
}

#[test]
fn phase_two_rejects_insert_only_logic() {
    let s = spec("two-phase-set");
    let naive = builtin_design("naive-set").unwrap();
    let cfg = SearchConfig::default();
    assert!(check_bounded(&s, &naive, &cfg.universe(&s), 1)
        .unwrap()
        .is_pass());
    let cache = CexCache::new();
    let v = phase2_check(&s, &naive, 1, &cfg, &cache).unwrap();
    assert!(matches!(v, Verdict::Fail(_)));
    assert_eq!(cache.len(), 1);
    let good = builtin_design("two-phase-set-map").unwrap();
    assert!(phase2_check(&s, &good, 2, &cfg, &cache).unwrap().is_pass());
}

#[test]
fn hinted_searches() {
    let stamps = || LatticeType::map(ScalarSort::Opaque, LatticeType::max_int(ScalarSort::Clock));
    let counts = || LatticeType::map(ScalarSort::NodeID, LatticeType::max_int(ScalarSort::Int));
    for (name, hint) in [
        (
            "remove-wins-set",
            LatticeType::free(vec![stamps(), stamps()]),
        ),
        (
            "general-counter",
            LatticeType::free(vec![counts(), counts()]),
        ),
    ] {
        let cfg = SearchConfig {
            hint_state: Some(hint.clone()),
            ..SearchConfig::default()
        };
        let r = found(name, &cfg);
        assert_eq!(r.design().unwrap().state_type, hint);
        assert!(r.states.iter().all(|s| s.state_type == hint));
        assert_verified(&spec(name), &r);
    }
}

#[test]
fn exhausted_search_reports_not_found() {
    let s = spec("two-phase-set");
    let cfg = SearchConfig {
        max_depth: 2,
        ..SearchConfig::default()
    };
    let r = search(&s, &cfg).unwrap();
    assert_eq!(r.outcome, SearchOutcome::NotFound);
    assert!(r.designs.is_empty());
    assert_eq!(r.depth_reached, 2);
}

#[test]
fn report_serializes() {
    let r = found("grow-only-set", &SearchConfig::default());
    let j = serde_json::to_value(&r).unwrap();
    assert_eq!(j["outcome"], "found");
    assert!(j["designs"][0]["state_type"].is_object());
}

#[test]
fn flag_alternatives_are_distinct() {
    let s = spec("enable-wins-flag");
    let r = search_all(&s, &SearchConfig::default(), 2).unwrap();
    assert_eq!(r.designs.len(), 2);
    let lex = LatticeType::lex(LatticeType::max_int(ScalarSort::Clock), LatticeType::OrBool);
    assert_eq!(r.designs[0].state_type, lex);
    assert_ne!(effective_state_type(&r.designs[1]), lex);
    assert_verified(&s, &r);
}
