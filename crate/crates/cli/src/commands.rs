use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use katalite::grammar::{
    enumerate_initial_states, enumerate_state_types, query_candidates, transition_candidates, Goal,
    GrammarConfig, Role, StateSorts, TermGrammar,
};
use katalite::lattice::LatticeType;
use katalite::seqspec::{builtin_benchmark, builtin_benchmarks, SequentialSpec, SpecError};
use katalite::simulator::{self, SimError};
use katalite::synthesizer::{self, SearchConfig, SearchOutcome, SynthError};
use katalite::verifier::{
    builtin_design, check_bounded_with_budget, minimize_counterexample, CrdtDesign, Universe,
    Verdict, VerifyError, DEFAULT_BUDGET,
};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::{
    BenchCommand, Cli, Command, DumpArgs, Format, GrammarCommand, GrammarRole, SimulateArgs,
    SpecCommand, SynthesizeArgs, VerifyArgs,
};

pub const OK: u8 = 0;
pub const FAILED: u8 = 1;
pub const INCONCLUSIVE: u8 = 2;
pub const USAGE: u8 = 3;

/// Version of every JSON document printed on stdout.
pub const OUTPUT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown benchmark {0}; see `katalite bench list`")]
    UnknownBench(String),
    #[error("unknown built-in design {0}")]
    UnknownDesign(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

/// Resolves `bench:<name>` or reads a specification file.
pub fn load_spec(reference: &str) -> Result<SequentialSpec> {
    match reference.strip_prefix("bench:") {
        Some(name) => builtin_benchmark(name).ok_or_else(|| CliError::UnknownBench(name.into())),
        None => Ok(SequentialSpec::from_json_str(&read(Path::new(reference))?)?),
    }
}

/// Resolves `builtin:<name>` or reads a design file.
pub fn load_design(reference: &str) -> Result<CrdtDesign> {
    match reference.strip_prefix("builtin:") {
        Some(name) => builtin_design(name).ok_or_else(|| CliError::UnknownDesign(name.into())),
        None => Ok(CrdtDesign::from_json_str(&read(Path::new(reference))?)?),
    }
}

fn parse_type(s: &str) -> Result<LatticeType> {
    s.parse()
        .map_err(|e| CliError::Usage(format!("bad state type {s:?}: {e}")))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(format: Format, doc: Json, pretty: impl FnOnce() -> String) {
    let text = match format {
        Format::Json => {
            let mut doc = doc;
            if let Json::Object(m) = &mut doc {
                m.insert("format_version".into(), OUTPUT_VERSION.into());
            }
            serde_json::to_string_pretty(&doc).expect("json output") + "\n"
        }
        Format::Pretty => pretty(),
    };
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Bench(BenchCommand::List) => bench_list(cli.format),
        Command::Synthesize(a) => synthesize(cli.format, a),
        Command::Verify(a) => verify(cli.format, a),
        Command::Simulate(a) => simulate(cli.format, a),
        Command::Spec(SpecCommand::Validate { spec }) => validate_spec(cli.format, spec),
        Command::Grammar(GrammarCommand::Dump(a)) => grammar_dump(cli.format, a),
    }
}

fn literature(name: &str) -> &'static str {
    match name {
        "enable-wins-flag" | "disable-wins-flag" | "add-wins-set" | "remove-wins-set" => "De Porre",
        _ => "Shapiro",
    }
}

fn bench_list(format: Format) -> Result<u8> {
    let specs = builtin_benchmarks();
    let rows: Vec<Json> = specs
        .iter()
        .map(|s| {
            json!({
                "name": s.name,
                "title": s.title,
                "source": literature(&s.name),
                "operation": s.op_fields.iter().map(|f| format!("{}: {}", f.name, f.sort.name())).collect::<Vec<_>>(),
                "timestamps": s.flags.timestamps,
                "non_idempotent": s.flags.non_idempotent,
            })
        })
        .collect();
    emit(format, json!({ "benchmarks": rows }), || {
        let mut out = format!(
            "{:<20} {:<26} {:<9} {:<10} {}\n",
            "NAME", "TITLE", "SOURCE", "TIMESTAMPS", "NON-IDEMPOTENT"
        );
        for s in &specs {
            let mark = |b: bool| if b { "yes" } else { "" };
            out += &format!(
                "{:<20} {:<26} {:<9} {:<10} {}\n",
                s.name,
                s.title,
                literature(&s.name),
                mark(s.flags.timestamps),
                mark(s.flags.non_idempotent)
            );
        }
        out
    });
    Ok(OK)
}

fn design_file(dir: &Path, spec: &str, i: usize) -> PathBuf {
    match i {
        0 => dir.join(format!("{spec}.design.json")),
        _ => dir.join(format!("{spec}.{}.design.json", i + 1)),
    }
}

fn synthesize(format: Format, a: &SynthesizeArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    if a.all == Some(0) {
        return Err(CliError::Usage("--all needs at least 1".into()));
    }
    let cfg = SearchConfig {
        max_depth: a.max_depth,
        initial_log_bound: a.log_bound,
        universe_size: a.universe,
        nodes: a.nodes,
        workers: a.threads,
        deterministic: a.deterministic,
        use_cache: !a.no_cache,
        timeout: a.timeout.map(Duration::from_secs),
        seed: a.seed,
        hint_state: a.hint_state.as_deref().map(parse_type).transpose()?,
        ..SearchConfig::default()
    };
    let report = match a.all {
        Some(k) => synthesizer::search_all(&spec, &cfg, k)?,
        None => synthesizer::search(&spec, &cfg)?,
    };
    let mut files = Vec::new();
    for (i, d) in report.designs.iter().enumerate() {
        let path = design_file(&a.out_dir, &spec.name, i);
        write(
            &path,
            &serde_json::to_string_pretty(&d.to_json()).expect("design json"),
        )?;
        files.push(path);
    }
    if let Some(path) = &a.report {
        write(
            path,
            &serde_json::to_string_pretty(&report).expect("report json"),
        )?;
    }
    let doc = json!({
        "spec": spec.name,
        "outcome": report.outcome,
        "designs": report.designs.iter().map(|d| d.to_json()).collect::<Vec<_>>(),
        "files": files,
        "depth_reached": report.depth_reached,
        "totals": report.totals,
        "cache_size": report.cache_size,
        "millis": report.millis,
    });
    emit(format, doc, || {
        let mut out = String::new();
        for (d, f) in report.designs.iter().zip(&files) {
            out += &d.render(&spec);
            out += &format!("\n// {}\n// written to {}\n\n", provenance(d), f.display());
        }
        let t = &report.totals;
        out += &format!(
            "{:?} after {} ms at depth {}: {} transitions, {} candidates, {} full checks, {} cache rejections\n",
            report.outcome, report.millis, report.depth_reached, t.transitions, t.candidates, t.full_checks, t.cache_rejections
        );
        out
    });
    Ok(match report.outcome {
        SearchOutcome::Found => OK,
        SearchOutcome::NotFound => FAILED,
        SearchOutcome::Timeout => INCONCLUSIVE,
    })
}

fn provenance(d: &CrdtDesign) -> String {
    let p = &d.provenance;
    match (p.verified_universe, p.verified_log_bound) {
        (Some(u), Some(l)) => format!(
            "bounded-verified (U={u}, L={l}), grammar depth {}",
            p.grammar_depth.unwrap_or(0)
        ),
        _ => "not verified".into(),
    }
}

fn verify(format: Format, a: &VerifyArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let design = load_design(&a.design)?;
    design.validate(&spec)?;
    if design.spec_name != spec.name {
        log::warn!(
            "design was written for {}, checking against {}",
            design.spec_name,
            spec.name
        );
    }
    let universe = Universe::default_for(&spec, a.universe, a.nodes);
    let mut verdict =
        check_bounded_with_budget(&spec, &design, &universe, a.log_bound, DEFAULT_BUDGET)?;
    if let (Verdict::Fail(c), false) = (&verdict, a.no_minimize) {
        verdict = Verdict::Fail(minimize_counterexample(&spec, &design, c, &universe)?);
    }
    let doc = json!({ "spec": spec.name, "result": verdict });
    emit(format, doc, || match &verdict {
        Verdict::Pass(b) => format!("PASS {b}\n"),
        Verdict::Fail(c) => {
            let log: Vec<String> = c
                .log
                .iter()
                .zip(&c.nodes)
                .map(|(op, n)| {
                    let args: Vec<String> = op.iter().map(|v| v.to_string()).collect();
                    match spec.flags.non_idempotent {
                        true => format!("({}) at node {n}", args.join(", ")),
                        false => format!("({})", args.join(", ")),
                    }
                })
                .collect();
            let query: Vec<String> = c.query.iter().map(|v| v.to_string()).collect();
            format!(
                "FAIL after [{}]: query({}) expected {}, design answers {}\n",
                log.join(", "),
                query.join(", "),
                c.expected,
                c.actual
            )
        }
        Verdict::Inconclusive { reason } => format!("INCONCLUSIVE {reason}\n"),
    });
    Ok(match verdict {
        Verdict::Pass(_) => OK,
        Verdict::Fail(_) => FAILED,
        Verdict::Inconclusive { .. } => INCONCLUSIVE,
    })
}

fn simulate(format: Format, a: &SimulateArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    let design = load_design(&a.design)?;
    design.validate(&spec)?;
    if !(0.0..=1.0).contains(&a.gossip_rate) {
        return Err(CliError::Usage("--gossip-rate must lie in [0, 1]".into()));
    }
    let schedule = match &a.scenario {
        Some(name) => simulator::scenario(name)?,
        None => simulator::random_schedule(&spec, a.replicas, a.ops, a.gossip_rate, a.seed)?,
    };
    let report = simulator::run(&spec, &design, &schedule)?;
    let doc = json!({ "spec": spec.name, "schedule": schedule, "report": report });
    emit(format, doc, || {
        let mut out = format!(
            "{} replicas, {} operations applied: {}\n",
            report.replicas.len(),
            report.applied.len(),
            if report.converged {
                "converged"
            } else {
                "replica states differ"
            }
        );
        if let Some(row) = report.queries.last() {
            let answers: Vec<String> = row.answers.iter().map(|v| v.to_string()).collect();
            out += &format!("final answers: [{}]\n", answers.join(", "));
        }
        for w in &report.witnesses {
            out += &format!(
                "witness: {}\n",
                serde_json::to_string(w).expect("witness json")
            );
        }
        out
    });
    Ok(if report.diverged() { FAILED } else { OK })
}

fn validate_spec(format: Format, reference: &str) -> Result<u8> {
    let spec = load_spec(reference)?;
    let checked = spec.validate().and_then(|()| {
        let ops = Universe::default_for(&spec, 3, 2).op_space(&spec)?;
        spec.check_transitivity(&ops)
    });
    let (code, problem) = match checked {
        Ok(()) => (OK, None),
        Err(e) => (FAILED, Some(e.to_string())),
    };
    emit(
        format,
        json!({ "valid": problem.is_none(), "problem": problem, "spec": spec.to_json() }),
        || match &problem {
            None => format!(
                "{} ({}) is valid\n{}\n",
                spec.name,
                spec.title,
                serde_json::to_string_pretty(&spec.to_json()).expect("spec json")
            ),
            Some(p) => format!("{} is invalid: {p}\n", spec.name),
        },
    );
    Ok(code)
}

fn grammar_dump(format: Format, a: &DumpArgs) -> Result<u8> {
    let spec = load_spec(&a.spec)?;
    spec.validate()?;
    let state = a.state.as_deref().map(parse_type).transpose()?;
    let need_state = || {
        state
            .clone()
            .ok_or_else(|| CliError::Usage("--state is required for this role".into()))
    };
    let mut stats: Option<Vec<usize>> = None;
    let items: Vec<String> = match a.role {
        GrammarRole::State => {
            let types = enumerate_state_types(a.depth, &StateSorts::for_spec(&spec), 2);
            if a.grammar_stats {
                stats = Some(
                    (1..=a.depth)
                        .map(|d| types.iter().filter(|t| t.depth() == d).count())
                        .collect(),
                );
            }
            types.iter().take(a.limit).map(|t| t.to_string()).collect()
        }
        GrammarRole::Transition => {
            let t = need_state()?;
            let mut g = TermGrammar::for_transition(&spec, &t);
            if a.grammar_stats {
                stats = Some(g.stats(&Goal::lattice(&t), a.depth));
            }
            transition_candidates(&mut g, &spec, &t, a.depth)
                .take(a.limit)
                .map(|c| c.term.to_string())
                .collect()
        }
        GrammarRole::Query => {
            let t = need_state()?;
            let mut g = TermGrammar::for_query(&spec, &t);
            if a.grammar_stats {
                stats = Some(g.stats(&Goal::sort(spec.query_sort()?), a.depth));
            }
            query_candidates(&mut g, &spec, a.depth)
                .iter()
                .take(a.limit)
                .map(|c| c.term.to_string())
                .collect()
        }
        GrammarRole::Init => {
            let t = need_state()?;
            let inits = enumerate_initial_states(
                &GrammarConfig::for_spec(&spec, a.depth, Role::InitialState),
                &t,
            );
            inits.iter().take(a.limit).map(|v| v.to_string()).collect()
        }
    };
    let doc = json!({ "spec": spec.name, "role": format!("{:?}", a.role).to_lowercase(), "depth": a.depth, "candidates": items, "per_depth": stats });
    emit(format, doc, || {
        let mut out: String = items.iter().map(|s| format!("{s}\n")).collect();
        if let Some(s) = &stats {
            out += &format!("per depth: {s:?}\n");
        }
        out
    });
    Ok(OK)
}
