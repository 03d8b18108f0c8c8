use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mergebo_core::{Session, SessionConfig};
use mergebo_harness::{
    aggregate, build_test_suite, jobs, read_records, run_jobs, stratified_subset, write_records, Method, OracleKind,
    RunOptions, TestCase,
};

#[derive(Parser)]
#[command(
    name = "mergebo",
    version,
    about = "Preference-driven search for sparse adapter merge coefficients"
)]
struct Cli {
    /// Engine configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Matching benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Serve the HTTP API (configured through MERGEBO_* variables).
    Serve,
    /// Rebuild a session from its JSONL transcript and print its state.
    Replay { transcript: PathBuf },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Write the test suite as JSON.
    Suite {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run methods against the suite and write per-iteration records as CSV.
    Run(RunArgs),
    /// Summarize a records CSV as JSON.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SuiteArgs {
    /// Number of adapters in the collection.
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Suite generation seed.
    #[arg(long, visible_alias = "suite-seed", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "coefficient")]
    oracle: OracleKind,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Comma-separated method names; the five main methods by default.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// A suite JSON file written by `bench suite`, or a number of cases to
    /// take as a stratified subset of the generated suite.
    #[arg(long)]
    cases: Option<String>,
    /// Repetitions per (method, case), seeds 0..seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// All 30 cases with 5 seeds each; overrides --cases and --seeds.
    #[arg(long)]
    full: bool,
    /// Replace the first initial sample by the ground truth.
    #[arg(long)]
    plant_target: bool,
    #[arg(long)]
    out: PathBuf,
}

fn engine_config(path: Option<&Path>) -> Result<SessionConfig> {
    match path {
        Some(p) => SessionConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(SessionConfig::default()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn suite(args: &SuiteArgs) -> Result<Vec<TestCase>> {
    Ok(build_test_suite(args.n, args.seed, args.oracle)?)
}

fn bench(cmd: BenchCommand, config: SessionConfig) -> Result<()> {
    match cmd {
        BenchCommand::Suite { suite: args, out } => {
            let cases = suite(&args)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &cases)?;
            writeln!(w)?;
        }
        BenchCommand::Run(args) => {
            let mut seeds = args.seeds;
            let cases = match args.cases.as_deref() {
                _ if args.full => {
                    seeds = 5;
                    suite(&args.suite)?
                }
                None => suite(&args.suite)?,
                Some(spec) => match spec.parse::<usize>() {
                    Ok(count) => stratified_subset(&suite(&args.suite)?, count),
                    Err(_) => {
                        let file = File::open(spec).with_context(|| format!("opening {spec}"))?;
                        serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {spec}"))?
                    }
                },
            };
            if let Some(case) = cases.iter().find(|c| c.n != config.n) {
                bail!("engine n = {} but case {} has n = {}", config.n, case.case_id, case.n);
            }
            let methods = if args.methods.is_empty() {
                Method::MAIN.to_vec()
            } else {
                args.methods
            };
            let options = RunOptions {
                engine: config,
                plant_target: args.plant_target,
            };
            let all = jobs(&methods, &cases, seeds);
            log::info!("{} runs, budget {} renders each", all.len(), options.budget());
            let records = run_jobs(&all, &options)?;
            let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            write_records(&records, BufWriter::new(file))?;
            for m in aggregate(&records).methods {
                println!(
                    "{:<18} runs {:>3}  final similarity {:.4}  success@0.90 {:.2}  median F1 {:.3}",
                    m.method, m.runs, m.mean_final_similarity, m.success.at_0_90, m.median_final_f1
                );
            }
        }
        BenchCommand::Report { input, out } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let summary = aggregate(&read_records(BufReader::new(file))?);
            for cell in &summary.missing {
                log::warn!("incomplete: {cell}");
            }
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &summary)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let session = Session::replay_jsonl(BufReader::new(file))?;
    let state = session.state();
    let best = session.best_result().ok();
    let report = serde_json::json!({
        "stage": state.stage,
        "iteration": state.iteration,
        "finished": state.finished,
        "renders": session.renders_requested(),
        "pending": state.pending,
        "best_id": state.top_id,
        "best": best,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Bench(cmd) => bench(cmd, engine_config(cli.config.as_deref())?),
        Command::Serve => {
            let config = mergebo_service::ServiceConfig::from_env()?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(mergebo_service::serve(config))?;
            Ok(())
        }
        Command::Replay { transcript } => replay(&transcript),
    }
}
