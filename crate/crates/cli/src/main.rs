mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "katalite",
    version,
    about = "Synthesize, verify and simulate state-based CRDTs from sequential specifications"
)]
pub struct Cli {
    /// Log filter, e.g. `info` or `katalite=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Pretty)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Pretty,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Built-in benchmark specifications.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Search for a CRDT design implementing a specification.
    Synthesize(SynthesizeArgs),
    /// Bounded check of a design against a specification.
    Verify(VerifyArgs),
    /// Run a design on simulated replicas.
    Simulate(SimulateArgs),
    /// Specification files.
    #[command(subcommand)]
    Spec(SpecCommand),
    /// Inspect the candidate grammars.
    #[command(subcommand)]
    Grammar(GrammarCommand),
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    List,
}

#[derive(Subcommand, Debug)]
pub enum SpecCommand {
    /// Check a specification and print its normalized form.
    Validate {
        #[arg(long)]
        spec: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum GrammarCommand {
    /// Print the first candidates of one grammar.
    Dump(DumpArgs),
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    /// `bench:<name>` or a `.spec.json` file.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    /// Initial phase-1 log bound.
    #[arg(long, default_value_t = 2)]
    pub log_bound: usize,
    /// Values per scalar sort in phase 1.
    #[arg(long, default_value_t = 3)]
    pub universe: usize,
    #[arg(long, default_value_t = 2)]
    pub nodes: usize,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, env = "KATALITE_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Report the first design in search order instead of the first to finish.
    #[arg(long)]
    pub deterministic: bool,
    /// Collect up to this many structurally distinct designs.
    #[arg(long)]
    pub all: Option<usize>,
    /// Only try this state type, e.g. `Map<OpaqueInt, OrBool>`.
    #[arg(long)]
    pub hint_state: Option<String>,
    /// Global timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Disable the counterexample cache.
    #[arg(long)]
    pub no_cache: bool,
    /// Shuffle state types of equal depth with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the search report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for `*.design.json` files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub spec: String,
    /// `builtin:<name>` or a `.design.json` file.
    #[arg(long)]
    pub design: String,
    #[arg(long, default_value_t = 3)]
    pub universe: usize,
    #[arg(long, default_value_t = 2)]
    pub nodes: usize,
    #[arg(long, default_value_t = 4)]
    pub log_bound: usize,
    /// Report the counterexample as found instead of shrinking it.
    #[arg(long)]
    pub no_minimize: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub design: String,
    #[arg(long, default_value_t = 3)]
    pub replicas: usize,
    #[arg(long, default_value_t = 100)]
    pub ops: usize,
    #[arg(long, default_value_t = 0.3)]
    pub gossip_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// A fixture schedule instead of a random one.
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GrammarRole {
    State,
    Transition,
    Query,
    Init,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(long)]
    pub spec: String,
    #[arg(long, value_enum, default_value_t = GrammarRole::Transition)]
    pub role: GrammarRole,
    /// State type the candidates are for; required except for `--role state`.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    /// Also print candidate counts per depth.
    #[arg(long)]
    pub grammar_stats: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::USAGE)
        }
    }
}
