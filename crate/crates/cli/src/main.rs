//! `obsmc`: validate `.cmp` programs, explore them by observation classes,
//! count classes with the brute-force oracle, and run benchmark sweeps.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::debug;
use serde::Serialize;

use obsmc_core::explore::{self, ExplorationReport, ExploreConfig, ExploreError, Mode};
use obsmc_core::lang::{self, bench};
use obsmc_core::model::graph::{build_communication_graph, is_acyclic};
use obsmc_core::model::{event_summary, Program};
use obsmc_core::oracle::{self, Equivalence, Limits};

const EXIT_OK: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_INCOMPLETE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "obsmc",
    version,
    about = "Stateless model checking by observation equivalence"
)]
struct Cli {
    /// Log progress (repeat for more detail); overrides OBSMC_LOG.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and compile a program, then summarize it.
    Check(InputArgs),
    /// Explore a program and report classes and assertion violations.
    Run(RunArgs),
    /// Count classes under both equivalences by exhaustive enumeration.
    Classes(ClassesArgs),
    /// Compare the data-centric explorer with the sleep-set baseline.
    Bench(BenchArgs),
    /// Print the source of a builtin benchmark.
    Emit(EmitArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// A `.cmp` file, or `bench:<name>` for a builtin benchmark.
    input: String,
    /// Size parameter of a builtin benchmark.
    #[arg(long)]
    n: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Dc,
    DcCyclic,
    Sleep,
    Brute,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Dc => "dc",
            Algo::DcCyclic => "dc-cyclic",
            Algo::Sleep => "sleep",
            Algo::Brute => "brute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Table,
    Json,
}

#[derive(Args, Debug)]
struct Caps {
    /// Stop the data-centric explorer after this many calls.
    #[arg(long)]
    max_calls: Option<u64>,
    /// Stop the baselines after this many maximal traces.
    #[arg(long, default_value_t = oracle::DEFAULT_CAP)]
    max_traces: u64,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

impl Caps {
    fn time(&self) -> Option<Duration> {
        self.timeout.map(Duration::from_secs_f64)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Algo::Dc)]
    algo: Algo,
    #[arg(long, value_enum, default_value_t = Output::Table)]
    output: Output,
    #[command(flatten)]
    caps: Caps,
    /// Do not mutate a read to the write it already observes.
    #[arg(long)]
    skip_current_observation: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Equiv {
    Obs,
    Maz,
    Both,
}

#[derive(Args, Debug)]
struct ClassesArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Equiv::Both)]
    equiv: Equiv,
    #[arg(long, value_enum, default_value_t = Output::Table)]
    output: Output,
    #[arg(long, default_value_t = oracle::DEFAULT_CAP)]
    max_traces: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// A parameterized builtin: wr_chain, wr_grid, cyclic3, lastzero, opt_lock.
    suite: String,
    /// Sizes to run, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<u32>,
    #[arg(long, value_enum, default_value_t = Output::Table)]
    output: Output,
    #[command(flatten)]
    caps: Caps,
}

#[derive(Args, Debug)]
struct EmitArgs {
    /// `bench:<name>` or a bare builtin name.
    name: String,
    #[arg(long)]
    n: Option<u32>,
    /// Write to a file instead of standard output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// An input problem: reported on stderr, exit code 3.
#[derive(Debug)]
struct InputError(String);

type CmdResult = Result<u8, InputError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let code = match run_command(cli.command) {
        Ok(code) => code,
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    };
    ExitCode::from(code)
}

fn init_logging(verbose: u8) {
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::new().filter_or("OBSMC_LOG", "warn"));
    match verbose {
        0 => {}
        1 => {
            builder.filter_level(log::LevelFilter::Info);
        }
        _ => {
            builder.filter_level(log::LevelFilter::Debug);
        }
    }
    builder.format_timestamp(None).init();
}

fn run_command(cmd: Command) -> CmdResult {
    match cmd {
        Command::Check(a) => cmd_check(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Classes(a) => cmd_classes(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Emit(a) => cmd_emit(&a),
    }
}

/// Source text and a display name for an input argument.
fn read_source(input: &InputArgs) -> Result<(String, String), InputError> {
    if let Some(name) = input.input.strip_prefix("bench:") {
        let src = bench::builtin(name, input.n).ok_or_else(|| {
            let known: Vec<&str> = bench::BUILTINS.iter().map(|b| b.0).collect();
            InputError(format!(
                "unknown benchmark `{name}` (known: {})",
                known.join(", ")
            ))
        })?;
        let label = match input.n {
            Some(n) => format!("bench:{name}({n})"),
            None => format!("bench:{name}"),
        };
        return Ok((label, src));
    }
    let src = std::fs::read_to_string(&input.input)
        .map_err(|e| InputError(format!("{}: {e}", input.input)))?;
    Ok((input.input.clone(), src))
}

fn load(input: &InputArgs) -> Result<(String, Program), InputError> {
    let (label, src) = read_source(input)?;
    let program = lang::load(&src).map_err(|e| InputError(format!("{label}:{e}")))?;
    Ok((label, program))
}

fn cmd_check(a: &InputArgs) -> CmdResult {
    let (label, p) = load(a)?;
    let summary: Vec<String> = event_summary(&p)
        .into_iter()
        .map(|(k, v)| format!("{v} {k}"))
        .collect();
    let procs = p.processes.len();
    println!(
        "ok: {label}: {procs} process{}, {} events ({})",
        if procs == 1 { "" } else { "es" },
        p.event_count(),
        summary.join(", ")
    );
    let graph = build_communication_graph(&p);
    if is_acyclic(&graph) {
        println!("architecture: acyclic");
    } else {
        println!("note: cyclic architecture; explore with --algo dc-cyclic");
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct JsonViolation {
    assert_id: u32,
    witness: Vec<u32>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    program: &'a str,
    algo: &'a str,
    traces: u64,
    classes: u64,
    calls: u64,
    unrealizable: u64,
    time_ms: u128,
    violations: Vec<JsonViolation>,
    complete: bool,
}

impl<'a> JsonReport<'a> {
    fn new(program: &'a str, algo: &'a str, r: &ExplorationReport) -> Self {
        JsonReport {
            program,
            algo,
            traces: r.traces,
            classes: r.classes,
            calls: r.calls,
            unrealizable: r.unrealizable,
            time_ms: r.time_ms,
            violations: r
                .violations
                .iter()
                .map(|v| JsonViolation {
                    assert_id: v.assert_id,
                    witness: v.witness.iter().map(|e| e.0).collect(),
                })
                .collect(),
            complete: r.complete,
        }
    }
}

fn exploration(
    p: &Program,
    algo: Algo,
    caps: &Caps,
    skip: bool,
) -> Result<ExplorationReport, InputError> {
    let config = ExploreConfig {
        mode: if algo == Algo::DcCyclic {
            Mode::Cyclic
        } else {
            Mode::Acyclic
        },
        skip_current_observation: skip,
        max_calls: caps.max_calls,
        time_limit: caps.time(),
    };
    let limits = Limits {
        traces: caps.max_traces,
        time: caps.time(),
    };
    let result = match algo {
        Algo::Dc | Algo::DcCyclic => explore::explore(p, &config).map_err(|e| match e {
            ExploreError::CyclicArchitecture => {
                "the communication graph is cyclic; use --algo dc-cyclic".to_string()
            }
            other => other.to_string(),
        }),
        Algo::Sleep => oracle::sleep_set_dpor(p, limits).map_err(|e| e.to_string()),
        Algo::Brute => oracle::brute_force(p, limits).map_err(|e| e.to_string()),
    };
    result.map_err(InputError)
}

fn exit_code(r: &ExplorationReport) -> u8 {
    if !r.violations.is_empty() {
        EXIT_VIOLATION
    } else if !r.complete {
        EXIT_INCOMPLETE
    } else {
        EXIT_OK
    }
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let (label, p) = load(&a.input)?;
    let r = exploration(&p, a.algo, &a.caps, a.skip_current_observation)?;
    debug!("{r:?}");
    match a.output {
        Output::Json => {
            let json = JsonReport::new(&label, a.algo.name(), &r);
            println!(
                "{}",
                serde_json::to_string_pretty(&json).expect("report serializes")
            );
        }
        Output::Table => print!("{}", run_table(&label, a.algo.name(), &p, &r)),
    }
    Ok(exit_code(&r))
}

fn run_table(label: &str, algo: &str, p: &Program, r: &ExplorationReport) -> String {
    let mut s = String::new();
    writeln!(s, "program       {label}").unwrap();
    writeln!(s, "algo          {algo}").unwrap();
    writeln!(s, "traces        {}", r.traces).unwrap();
    writeln!(s, "classes       {}", r.classes).unwrap();
    writeln!(s, "calls         {}", r.calls).unwrap();
    writeln!(s, "unrealizable  {}", r.unrealizable).unwrap();
    writeln!(s, "time_ms       {}", r.time_ms).unwrap();
    writeln!(s, "complete      {}", r.complete).unwrap();
    writeln!(s, "violations    {}", r.violations.len()).unwrap();
    for v in &r.violations {
        writeln!(s, "  assert {} fails after:", v.assert_id).unwrap();
        for &e in &v.witness {
            writeln!(s, "    {e}  {}", p.describe(e)).unwrap();
        }
    }
    s
}

#[derive(Serialize)]
struct JsonClasses<'a> {
    program: &'a str,
    traces: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    observation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mazurkiewicz: Option<usize>,
    complete: bool,
}

fn cmd_classes(a: &ClassesArgs) -> CmdResult {
    let (label, p) = load(&a.input)?;
    let count = |eq| oracle::partition(&p, eq, a.max_traces).map_err(|e| InputError(e.to_string()));
    let obs = match a.equiv {
        Equiv::Obs | Equiv::Both => Some(count(Equivalence::Observation)?),
        Equiv::Maz => None,
    };
    let maz = match a.equiv {
        Equiv::Maz | Equiv::Both => Some(count(Equivalence::Mazurkiewicz)?),
        Equiv::Obs => None,
    };
    let any = obs
        .as_ref()
        .or(maz.as_ref())
        .expect("at least one partition");
    let out = JsonClasses {
        program: &label,
        traces: any.traces,
        observation: obs.as_ref().map(|x| x.class_count()),
        mazurkiewicz: maz.as_ref().map(|x| x.class_count()),
        complete: any.complete,
    };
    match a.output {
        Output::Json => println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("serializes")
        ),
        Output::Table => {
            println!("program       {label}");
            println!("traces        {}", out.traces);
            if let Some(n) = out.observation {
                println!("observation   {n}");
            }
            if let Some(n) = out.mazurkiewicz {
                println!("mazurkiewicz  {n}");
            }
            println!("complete      {}", out.complete);
        }
    }
    Ok(if out.complete {
        EXIT_OK
    } else {
        EXIT_INCOMPLETE
    })
}

#[derive(Serialize)]
struct BenchRow {
    n: u32,
    dc_algo: &'static str,
    dc_classes: u64,
    dc_calls: u64,
    dc_time_ms: u128,
    dc_complete: bool,
    sleep_traces: u64,
    sleep_time_ms: u128,
    sleep_complete: bool,
}

fn seconds(ms: u128, complete: bool) -> String {
    if complete {
        format!("{:.3}", ms as f64 / 1000.0)
    } else {
        "-".into()
    }
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let known = bench::BUILTINS
        .iter()
        .any(|(name, param)| *name == a.suite && param.is_some());
    if !known {
        return Err(InputError(format!(
            "`{}` is not a parameterized builtin",
            a.suite
        )));
    }
    let mut rows = Vec::new();
    for &n in &a.sizes {
        let input = InputArgs {
            input: format!("bench:{}", a.suite),
            n: Some(n),
        };
        let (_, p) = load(&input)?;
        let algo = if is_acyclic(&build_communication_graph(&p)) {
            Algo::Dc
        } else {
            Algo::DcCyclic
        };
        let dc = exploration(&p, algo, &a.caps, false)?;
        let sleep = exploration(&p, Algo::Sleep, &a.caps, false)?;
        rows.push(BenchRow {
            n,
            dc_algo: algo.name(),
            dc_classes: dc.classes,
            dc_calls: dc.calls,
            dc_time_ms: dc.time_ms,
            dc_complete: dc.complete,
            sleep_traces: sleep.traces,
            sleep_time_ms: sleep.time_ms,
            sleep_complete: sleep.complete,
        });
    }
    match a.output {
        Output::Json => println!(
            "{}",
            serde_json::to_string_pretty(&rows).expect("serializes")
        ),
        Output::Table => {
            println!(
                "{:<14} {:>10} {:>10} {:>10} {:>12} {:>10}",
                "benchmark", "dc traces", "dc calls", "dc time", "sleep traces", "sleep time"
            );
            for r in &rows {
                println!(
                    "{:<14} {:>10} {:>10} {:>10} {:>12} {:>10}",
                    format!("{}({})", a.suite, r.n),
                    r.dc_classes,
                    r.dc_calls,
                    seconds(r.dc_time_ms, r.dc_complete),
                    r.sleep_traces,
                    seconds(r.sleep_time_ms, r.sleep_complete)
                );
            }
            println!("dc traces count distinct classes; '-' marks a run stopped by a cap");
        }
    }
    let complete = rows.iter().all(|r| r.dc_complete && r.sleep_complete);
    Ok(if complete { EXIT_OK } else { EXIT_INCOMPLETE })
}

fn cmd_emit(a: &EmitArgs) -> CmdResult {
    let name = a.name.strip_prefix("bench:").unwrap_or(&a.name);
    let (_, src) = read_source(&InputArgs {
        input: format!("bench:{name}"),
        n: a.n,
    })?;
    match &a.out {
        Some(path) => std::fs::write(path, &src)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?,
        None => print!("{src}"),
    }
    Ok(EXIT_OK)
}
