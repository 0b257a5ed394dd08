use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use onesim::agent::RemoteConfig;
use onesim::behavior_graph::{build_graph, parse_scenario, validate};
use onesim::distributed::{run_worker, DistributedConfig, Master, MetricsReport, WorkerOptions};
use onesim::experiment::{
    load_results, parse_plan, population_seed, run_experiment, write_result_set, ExecutionMode, ExperimentPlan,
    GroupSpec, Paradigm, ResearchContext, ResultSet, RunOptions, RunRecord,
};
use onesim::kernel::{BackendKind, ScenarioRuntime, Simulation};
use onesim::report::{report_from_dir, PASS_THRESHOLD};
use onesim::scenarios;
use onesim::seed::group_replicate_seed;
use onesim::vr2t::{
    emit_dpo_dataset, emit_sft_dataset, run_pipeline, write_tuples, JudgeScorer, RuleReasoner, RuleRefiner, RuleScorer,
    Verifier, DEFAULT_THRESHOLD,
};

const DEFAULT_GROUP: &str = "default";

#[derive(Parser)]
#[command(name = "onesim", version, about = "Agent-based social simulation engine and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario's behavior graph; prints `severity code location message` lines.
    Validate {
        /// Scenario file (.onesim) or bundled scenario name.
        scenario: String,
    },
    /// Run one simulation and write `<out>/default/0/`.
    Run {
        /// Scenario file (.onesim) or bundled scenario name.
        scenario: String,
        #[command(flatten)]
        sim: SimArgs,
        /// Run on this many in-process workers instead of locally (0 = local).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Coordinate a run across remote workers.
    Master {
        /// Address to listen on for workers.
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Number of workers to wait for.
        #[arg(long)]
        workers: usize,
        /// Scenario file (.onesim) or bundled scenario name.
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        sim: SimArgs,
        /// Seconds to wait for every worker to register.
        #[arg(long, default_value_t = 30)]
        register_timeout: u64,
    },
    /// Serve a master's agent handlers until it shuts down.
    Worker {
        /// Master address.
        #[arg(long)]
        connect: String,
        /// Name reported at registration.
        #[arg(long)]
        name: Option<String>,
        /// Seconds to keep retrying the initial connection.
        #[arg(long, default_value_t = 10)]
        connect_timeout: u64,
    },
    /// Experiment plans.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
    /// Score recorded transcripts and emit SFT/DPO datasets.
    Feedback {
        /// Results directory containing transcripts.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for tuples.jsonl, sft.jsonl and dpo.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Records scoring below this are refined.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Scoring stage.
        #[arg(long, value_enum, default_value_t = VerifierKind::Rule)]
        verifier: VerifierKind,
    },
    /// Build a Markdown report from an experiment results directory.
    Report {
        /// Results directory.
        #[arg(long = "in")]
        input: PathBuf,
        /// Report output directory.
        #[arg(long)]
        out: PathBuf,
        /// Write the report even if a quality category is below threshold.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run every group and replicate of a plan.
    Run {
        /// Plan file (.onesim) or bundled plan name.
        plan: String,
        /// Scenario file or bundled name; defaults to the plan's `scenario`.
        #[arg(long)]
        scenario: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the plan's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the plan's round limit.
        #[arg(long)]
        rounds: Option<u32>,
        /// Decision backend.
        #[arg(long, value_enum, default_value_t = Backend::Rule)]
        backend: Backend,
        /// Run each replicate on this many in-process workers (0 = local).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Record decision transcripts for `feedback`.
        #[arg(long)]
        transcripts: bool,
        /// Run groups and replicates one at a time.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario's round limit.
    #[arg(long)]
    rounds: Option<u32>,
    /// Decision backend; `remote` reads ONESIM_ENDPOINT and ONESIM_API_TOKEN.
    #[arg(long, value_enum, default_value_t = Backend::Rule)]
    backend: Backend,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record decision transcripts for `feedback`.
    #[arg(long)]
    transcripts: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Rule,
    Stochastic,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifierKind {
    Rule,
    Remote,
}

/// A runtime failure, printed as `error <code> <message>`.
#[derive(Debug)]
struct Failure {
    code: &'static str,
    message: String,
}

impl Failure {
    fn new(code: &'static str, message: impl fmt::Display) -> Self {
        Failure { code, message: message.to_string().replace('\n', "; ") }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn remote_config() -> Result<RemoteConfig, Failure> {
    RemoteConfig::from_env().ok_or_else(|| {
        Failure::new("config", format!("remote backend requires {}", onesim::agent::ENDPOINT_ENV))
    })
}

fn backend_kind(b: Backend) -> Result<BackendKind, Failure> {
    Ok(match b {
        Backend::Rule => BackendKind::Rule,
        Backend::Stochastic => BackendKind::Stochastic,
        Backend::Remote => BackendKind::Remote(remote_config()?),
    })
}

/// Read a file, falling back to a bundled document named by the file stem.
fn read_document(arg: &str, bundled: fn(&str) -> Option<&'static str>) -> Result<String, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        return fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{arg}: {e}")));
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    bundled(stem)
        .map(str::to_string)
        .ok_or_else(|| Failure::new("not_found", format!("{arg}: no such file or bundled document")))
}

fn load_runtime(arg: &str, backend: Backend) -> Result<Arc<ScenarioRuntime>, Failure> {
    let text = read_document(arg, scenarios::bundled)?;
    scenarios::load(&text, backend_kind(backend)?).map_err(|e| Failure::new("scenario", e))
}

fn single_plan(seed: u64, rounds: Option<u32>) -> ExperimentPlan {
    ExperimentPlan {
        name: "single_run".into(),
        paradigm: Paradigm::Inductive,
        context: ResearchContext::default(),
        scenario: None,
        groups: vec![GroupSpec { name: DEFAULT_GROUP.into(), hypothesis: None, interventions: Vec::new() }],
        factors: Vec::new(),
        replicates: 1,
        base_seed: seed,
        rounds,
        metrics: Vec::new(),
        analyses: Vec::new(),
    }
}

fn finish(out: &Path, set: &ResultSet) -> Outcome {
    write_result_set(out, set).map_err(|e| Failure::new("io", e))?;
    for f in &set.failures {
        eprintln!("error run group={} replicate={} seed={} {}", f.group, f.replicate, f.seed, f.error);
    }
    for r in &set.runs {
        println!(
            "run group={} replicate={} seed={} rounds={} stopped_by={:?} out={}",
            r.group,
            r.replicate,
            r.seed,
            r.result.rounds.len(),
            r.result.stopped_by,
            out.display()
        );
    }
    Ok(if set.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_validate(scenario: &str) -> Outcome {
    let text = read_document(scenario, scenarios::bundled)?;
    let spec = parse_scenario(&text).map_err(|e| Failure::new("parse", e))?;
    let report = validate(&build_graph(&spec));
    print!("{}", report.render());
    if report.is_valid() {
        println!("ok valid {}", spec.name);
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_run(scenario: &str, sim: &SimArgs, workers: usize) -> Outcome {
    let runtime = load_runtime(scenario, sim.backend)?;
    let plan = single_plan(sim.seed, sim.rounds);
    let mode = if workers > 0 { ExecutionMode::Distributed(workers) } else { ExecutionMode::Local };
    let options = RunOptions { mode, parallel_runs: false, record_transcripts: sim.transcripts };
    let set = run_experiment(&plan, runtime, &options).map_err(|e| Failure::new("experiment", e))?;
    finish(&sim.out, &set)
}

fn write_worker_metrics(path: &Path, reports: &[MetricsReport]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::new("io", e))?;
    w.write_record(["round", "agents", "events", "handled", "compute_us"]).map_err(|e| Failure::new("io", e))?;
    for r in reports {
        w.write_record([
            r.round.to_string(),
            r.agents.len().to_string(),
            r.events.to_string(),
            r.handled.to_string(),
            r.compute_us.to_string(),
        ])
        .map_err(|e| Failure::new("io", e))?;
    }
    w.flush().map_err(|e| Failure::new("io", e))
}

fn cmd_master(listen: &str, workers: usize, scenario: &str, sim: &SimArgs, register_timeout: u64) -> Outcome {
    if workers == 0 {
        return Err(Failure::new("config", "master needs --workers >= 1"));
    }
    let runtime = load_runtime(scenario, sim.backend)?;
    let plan = single_plan(sim.seed, sim.rounds);
    let seed = group_replicate_seed(sim.seed, DEFAULT_GROUP, 0);
    let pop_seed = population_seed(sim.seed, 0);
    let mut simulation = Simulation::populate(runtime.clone(), pop_seed, seed).map_err(|e| Failure::new("kernel", e))?;
    if let Some(r) = sim.rounds {
        simulation.set_max_rounds(r);
    }
    let config = DistributedConfig {
        registration_timeout: Duration::from_secs(register_timeout),
        record_transcripts: sim.transcripts,
        ..DistributedConfig::with_workers(workers)
    };
    let mut master = Master::bind(listen, config).map_err(|e| Failure::new("io", e))?;
    let addr = master.local_addr().map_err(|e| Failure::new("io", e))?;
    println!("master listening={addr} workers={workers}");
    master.accept_workers().map_err(|e| Failure::new("distributed", e))?;
    let result = simulation.run(&mut master);
    master.shutdown();
    let result = result.map_err(|e| Failure::new("distributed", e))?;
    let observations = runtime.model.observations(&result);
    let set = ResultSet {
        plan,
        scenario: runtime.spec.name.clone(),
        runs: vec![RunRecord {
            group: DEFAULT_GROUP.into(),
            replicate: 0,
            seed,
            population_seed: pop_seed,
            modified_agents: 0,
            result,
            observations,
        }],
        failures: Vec::new(),
    };
    let code = finish(&sim.out, &set)?;
    write_worker_metrics(&sim.out.join("worker_metrics.csv"), master.reports())?;
    Ok(code)
}

fn cmd_worker(connect: &str, name: Option<String>, connect_timeout: u64) -> Outcome {
    let mut options = WorkerOptions { connect_timeout: Duration::from_secs(connect_timeout), ..WorkerOptions::default() };
    if let Some(n) = name {
        options.name = n;
    }
    let summary = run_worker(connect, &options).map_err(|e| Failure::new("distributed", e))?;
    println!(
        "worker id={} agents={} rounds={}",
        summary.worker.map_or_else(|| "none".to_string(), |w| w.to_string()),
        summary.agents,
        summary.rounds
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    plan_arg: &str,
    scenario: Option<&str>,
    out: &Path,
    seed: Option<u64>,
    rounds: Option<u32>,
    backend: Backend,
    workers: usize,
    transcripts: bool,
    sequential: bool,
) -> Outcome {
    let text = read_document(plan_arg, scenarios::bundled_plan)?;
    let mut plan = parse_plan(&text).map_err(|e| Failure::new("plan", e))?;
    if let Some(s) = seed {
        plan.base_seed = s;
    }
    if rounds.is_some() {
        plan.rounds = rounds;
    }
    let scenario_arg = match (scenario, &plan.scenario) {
        (Some(s), _) => s.to_string(),
        (None, Some(s)) => {
            let beside = Path::new(plan_arg).parent().map(|p| p.join(s));
            match beside.filter(|p| p.is_file()) {
                Some(p) => p.to_string_lossy().into_owned(),
                None => s.clone(),
            }
        }
        (None, None) => return Err(Failure::new("config", "plan names no scenario; pass --scenario")),
    };
    let runtime = load_runtime(&scenario_arg, backend)?;
    let mode = if workers > 0 { ExecutionMode::Distributed(workers) } else { ExecutionMode::Local };
    let options = RunOptions { mode, parallel_runs: !sequential, record_transcripts: transcripts };
    let set = run_experiment(&plan, runtime, &options).map_err(|e| Failure::new("experiment", e))?;
    finish(out, &set)
}

fn cmd_feedback(input: &Path, out: &Path, threshold: f64, verifier: VerifierKind) -> Outcome {
    let loaded = load_results(input).map_err(|e| Failure::new("results", e))?;
    let mut records = Vec::new();
    for run in &loaded.manifest.runs {
        records.extend(loaded.transcripts(&run.group, run.replicate).map_err(|e| Failure::new("results", e))?);
    }
    if records.is_empty() {
        return Err(Failure::new("no_transcripts", format!("{}: rerun with --transcripts", input.display())));
    }
    let rule = RuleScorer::default();
    let judge;
    let scorer: &dyn Verifier = match verifier {
        VerifierKind::Rule => &rule,
        VerifierKind::Remote => {
            judge = JudgeScorer {
                backend: onesim::agent::RemoteBackend::new(remote_config()?),
                template: "Rate the response to the prompt from 0 to 1.\nPROMPT:\n{prompt}\nRESPONSE:\n{response}\nReply with `SCORE: <number>`.".into(),
            };
            &judge
        }
    };
    let tuples =
        run_pipeline(&records, threshold, scorer, &RuleReasoner, &RuleRefiner).map_err(|e| Failure::new("feedback", e))?;
    fs::create_dir_all(out).map_err(|e| Failure::new("io", e))?;
    write_tuples(&out.join("tuples.jsonl"), &tuples).map_err(|e| Failure::new("io", e))?;
    let sft = emit_sft_dataset(&tuples);
    let dpo = emit_dpo_dataset(&tuples);
    fs::write(out.join("sft.jsonl"), &sft).map_err(|e| Failure::new("io", e))?;
    fs::write(out.join("dpo.jsonl"), &dpo).map_err(|e| Failure::new("io", e))?;
    println!(
        "feedback records={} refined={} sft={} dpo={} out={}",
        tuples.len(),
        tuples.iter().filter(|t| t.refined.is_some()).count(),
        sft.lines().count(),
        dpo.lines().count(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(input: &Path, out: &Path, force: bool) -> Outcome {
    let report = report_from_dir(input, out, force).map_err(|e| Failure::new("report", e))?;
    let s = &report.quality.scores;
    println!(
        "report out={} passed={} emitted={} technical_rigor={} clarity={} validation={} writing_quality={}",
        out.display(),
        report.quality.passed,
        report.emitted,
        s.technical_rigor,
        s.clarity,
        s.validation,
        s.writing_quality
    );
    for note in &report.quality.notes {
        println!("note {}", note.replace('\n', " "));
    }
    if !report.emitted {
        eprintln!("error quality report below threshold {PASS_THRESHOLD}; not emitted (use --force)");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run { scenario, sim, workers } => cmd_run(&scenario, &sim, workers),
        Command::Master { listen, workers, scenario, sim, register_timeout } => {
            cmd_master(&listen, workers, &scenario, &sim, register_timeout)
        }
        Command::Worker { connect, name, connect_timeout } => cmd_worker(&connect, name, connect_timeout),
        Command::Experiment { command } => match command {
            ExperimentCommand::Run { plan, scenario, out, seed, rounds, backend, workers, transcripts, sequential } => {
                cmd_experiment(&plan, scenario.as_deref(), &out, seed, rounds, backend, workers, transcripts, sequential)
            }
        },
        Command::Feedback { input, out, threshold, verifier } => cmd_feedback(&input, &out, threshold, verifier),
        Command::Report { input, out, force } => cmd_report(&input, &out, force),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error {} {}", f.code, f.message);
            ExitCode::FAILURE
        }
    }
}
