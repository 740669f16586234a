//! `heb` — parse, statically check and execute HEB projects.
//!
//! Exit codes are stable for CI use:
//!   0  success
//!   1  parse/check errors
//!   2  I/O failure
//!   3  invariant violations during a monitored run
//!   4  run abort (no successor, unbound parameters, …)
//!   64 usage errors

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use heb_core::elab::{elaborate, feasibility_scan};
use heb_core::parser::parse_project_dir;
use heb_core::scenario::ScenarioBindings;
use heb_core::schedule::{AsynchPolicy, Run, RunConfig};
use heb_core::trace::Trace;
use heb_core::{Builtins, Diagnostic};

#[derive(Parser)]
#[command(name = "heb", version, about = "HEB project toolchain", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every `.heb` file of a project directory.
    Parse {
        #[arg(long, value_name = "DIR")]
        project: PathBuf,
    },
    /// Parse, elaborate and statically check a project.
    Check {
        #[arg(long, value_name = "DIR")]
        project: PathBuf,
    },
    /// Execute a project and write trace and violation files.
    Run(RunArgs),
    /// Re-parse a trace file and verify its structural invariants.
    TraceValidate {
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "DIR")]
    project: PathBuf,
    /// Scenario bindings for environment events (JSON).
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Seed for every scheduled choice. `--seeds` runs a batch instead.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated list or `a..b` range of seeds (batch mode).
    #[arg(long, value_name = "LIST", conflicts_with = "seed")]
    seeds: Option<String>,
    /// Worker threads for batch mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_name = "T")]
    horizon: f64,
    /// Output path prefix; writes PREFIX.trace.{jsonl|csv} and
    /// PREFIX.violations.jsonl.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    #[arg(long, default_value = "jsonlines", value_parser = ["jsonlines", "csv"])]
    format: String,
    /// Evaluate the runtime monitors; violations exit with code 3.
    #[arg(long, default_value_t = false)]
    check_invariants: bool,
    /// Give machines without pliant events an implicit always-enabled one.
    #[arg(long, default_value_t = false)]
    auto_plitrue: bool,
    #[arg(long, default_value = "earliest-plus-margin",
          value_parser = ["earliest-plus-margin", "uniform-random-in-window"])]
    asynch_policy: String,
    /// Firing margin after an asynch window opens, seconds.
    #[arg(long, default_value_t = 1e-3)]
    margin: f64,
    /// Maximum integration step, seconds.
    #[arg(long, default_value_t = 1e-3)]
    dt_max: f64,
    /// Output sampling step, seconds.
    #[arg(long, default_value_t = 0.05)]
    sample_step: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap help/version are normal exits
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(64);
        }
    };
    let code = match cli.command {
        Command::Parse { project } => cmd_parse(&project),
        Command::Check { project } => cmd_check(&project),
        Command::Run(args) => cmd_run(&args),
        Command::TraceValidate { trace } => cmd_trace_validate(&trace),
    };
    ExitCode::from(code)
}

fn print_diags(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

fn load_files(project: &Path) -> Result<Vec<PathBuf>, u8> {
    match heb_core::corpus::heb_files(project) {
        Ok(files) => Ok(files),
        Err(e) => {
            eprintln!("{}: cannot read project directory: {e}", project.display());
            Err(2)
        }
    }
}

fn cmd_parse(project: &Path) -> u8 {
    let files = match load_files(project) {
        Ok(f) => f,
        Err(c) => return c,
    };
    let r = parse_project_dir(&files);
    print_diags(&r.diagnostics);
    if r.has_errors() {
        1
    } else {
        println!(
            "parsed {} constructs from {} files",
            r.constructs.len(),
            files.len()
        );
        0
    }
}

fn check_project(project: &Path) -> Result<(heb_core::ElaboratedProject, Builtins), u8> {
    let files = load_files(project)?;
    let r = parse_project_dir(&files);
    print_diags(&r.diagnostics);
    if r.has_errors() {
        return Err(1);
    }
    let builtins = heb_core::corpus::project_builtins();
    let (p, diags) = elaborate(&r.constructs, &builtins);
    print_diags(&diags);
    match p {
        None => Err(1),
        Some(project) => Ok((project, builtins)),
    }
}

fn cmd_check(project: &Path) -> u8 {
    match check_project(project) {
        Err(c) => c,
        Ok((project, _)) => {
            let warnings = feasibility_scan(&project);
            print_diags(&warnings);
            println!(
                "checked project `{}`: {} machines, {} interfaces, {} contexts, {} SYNCH groups",
                project.name,
                project.machines.len(),
                project.interfaces.len(),
                project.contexts.len(),
                project.synch_groups.len()
            );
            0
        }
    }
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{s}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{s}`"))?;
        if a >= b {
            return Err(format!("empty seed range `{s}`"));
        }
        Ok((a..b).collect())
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| format!("bad seed `{x}`")))
            .collect()
    }
}

/// Hash of the sorted project sources, recorded in trace headers.
fn corpus_hash(files: &[PathBuf]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for f in files {
        h.update(
            f.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
                .as_bytes(),
        );
        h.update([0]);
        if let Ok(content) = std::fs::read(f) {
            h.update(&content);
        }
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_run(args: &RunArgs) -> u8 {
    if !(args.horizon > 0.0) {
        eprintln!("usage error: --horizon must be positive, got {}", args.horizon);
        return 64;
    }
    let files = match load_files(&args.project) {
        Ok(f) => f,
        Err(c) => return c,
    };
    let hash = corpus_hash(&files);
    let (project, builtins) = match check_project(&args.project) {
        Ok(x) => x,
        Err(c) => return c,
    };
    let scenario = match &args.scenario {
        Some(path) => match ScenarioBindings::from_path(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("{e}");
                return 2;
            }
        },
        None => ScenarioBindings::empty(),
    };
    let seeds = match &args.seeds {
        None => vec![args.seed],
        Some(s) => match parse_seed_list(s) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("usage error: {e}");
                return 64;
            }
        },
    };
    let batch = seeds.len() > 1;
    let jobs = args.jobs.max(1);

    let run_one = |seed: u64| -> (u64, u8, String) {
        let cfg = RunConfig {
            seed,
            horizon: args.horizon,
            numeric: heb_core::ode::NumericConfig {
                dt_max: args.dt_max,
                sample_step: args.sample_step,
                ..Default::default()
            },
            asynch_policy: AsynchPolicy::parse(&args.asynch_policy).unwrap(),
            margin: args.margin,
            auto_plitrue: args.auto_plitrue,
            check_invariants: args.check_invariants,
        };
        let run = match Run::new(&project, &builtins, cfg, scenario.clone(), hash.clone()) {
            Ok(r) => r,
            Err(e) => return (seed, 64, format!("usage error: {e}")),
        };
        let outcome = run.run_to_horizon();
        let prefix = if batch {
            let mut p = args.out.as_os_str().to_owned();
            p.push(format!(".s{seed}"));
            PathBuf::from(p)
        } else {
            args.out.clone()
        };
        let (trace_path, payload) = match args.format.as_str() {
            "csv" => (with_suffix(&prefix, ".trace.csv"), outcome.trace.to_csv()),
            _ => (with_suffix(&prefix, ".trace.jsonl"), outcome.trace.to_jsonl()),
        };
        if let Err(e) = std::fs::write(&trace_path, payload) {
            return (seed, 2, format!("cannot write {}: {e}", trace_path.display()));
        }
        let mut vtext = String::new();
        for v in &outcome.violations {
            vtext.push_str(&v.to_json());
            vtext.push('\n');
        }
        let vpath = with_suffix(&prefix, ".violations.jsonl");
        if let Err(e) = std::fs::write(&vpath, vtext) {
            return (seed, 2, format!("cannot write {}: {e}", vpath.display()));
        }
        let mut log = format!(
            "seed {seed}: {} occurrences, {} violations",
            outcome.occurrences.len(),
            outcome.violations.len()
        );
        let code = if let Some(a) = &outcome.abort {
            log.push_str(&format!(
                "; aborted at t={} with {}: {}",
                a.time, a.code, a.message
            ));
            4
        } else if args.check_invariants && !outcome.violations.is_empty() {
            3
        } else {
            0
        };
        (seed, code, log)
    };

    let mut results: Vec<(u64, u8, String)> = Vec::new();
    if jobs <= 1 || seeds.len() == 1 {
        for &s in &seeds {
            results.push(run_one(s));
        }
    } else {
        std::thread::scope(|scope| {
            let chunks: Vec<Vec<u64>> = seeds
                .chunks(seeds.len().div_ceil(jobs))
                .map(|c| c.to_vec())
                .collect();
            let mut handles = Vec::new();
            for chunk in chunks {
                let run_one = &run_one;
                handles.push(scope.spawn(move || chunk.iter().map(|&s| run_one(s)).collect::<Vec<_>>()));
            }
            for h in handles {
                results.extend(h.join().expect("worker panicked"));
            }
        });
        results.sort_by_key(|(s, _, _)| *s);
    }
    let mut worst = 0u8;
    for (_, code, log) in &results {
        println!("{log}");
        worst = worst.max(*code);
    }
    worst
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_trace_validate(path: &Path) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return 2;
        }
    };
    match Trace::from_jsonl(&text) {
        Err(e) => {
            eprintln!("{}: invalid trace: {e}", path.display());
            1
        }
        Ok(tr) => {
            // time-ordering is enforced while parsing; re-serialize and
            // compare for self-consistency
            let again = tr.to_jsonl();
            match Trace::from_jsonl(&again) {
                Ok(tr2) if tr2 == tr => {
                    let machines: BTreeSet<&str> = tr
                        .records
                        .iter()
                        .flat_map(|r| r.machines.iter().map(|s| s.as_str()))
                        .collect();
                    println!(
                        "valid trace: {} records, {} machines, horizon {}",
                        tr.records.len(),
                        machines.len(),
                        tr.header.horizon
                    );
                    0
                }
                _ => {
                    eprintln!("{}: trace does not round-trip", path.display());
                    1
                }
            }
        }
    }
}
