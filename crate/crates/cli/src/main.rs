//! `proactive`: validate policies, check interference, run scenarios with or
//! without enforcement, and benchmark enforcement overhead.
//!
//! Exit status: 0 clean, 1 a finding (invalid policy, leak, interference),
//! 2 usage or I/O error.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use proactive_core::sim::ScenarioScript;
use proactive_core::{
    bench_scenario, load_policy_file, run_timed, ActionTime, BenchError, InterferenceReport, Outcome, PackError,
    PolicyPack, RunReport, DEFAULT_REPETITIONS,
};

#[derive(Parser)]
#[command(name = "proactive", version, about = "Runtime enforcement of API usage policies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate policy files (directories contribute their *.pol files)
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Replay scenarios and report leaks and interventions
    Run(RunArgs),
    /// Compare per-action median times with and without enforcement
    Bench(BenchArgs),
    /// Print the pairwise interference report of a pack
    Interference {
        #[command(flatten)]
        pack: PackArg,
        /// Extra policy files checked together with the pack
        extra: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct PackArg {
    /// Policy pack directory
    #[arg(long, env = "PROACTIVE_PACK")]
    pack: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file or directory of .scn files (repeatable)
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    #[command(flatten)]
    pack: PackArg,
    /// Run with the pack deployed (default)
    #[arg(long, overrides_with = "no_enforce")]
    enforce: bool,
    /// Run against the bare platform
    #[arg(long)]
    no_enforce: bool,
    /// Deploy this policy switched off (repeatable)
    #[arg(long, value_name = "POLICY")]
    disable: Vec<String>,
    /// Write the report as JSON
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Run scenarios on separate threads
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    #[command(flatten)]
    pack: PackArg,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    /// Synthetic app work per action, in milliseconds
    #[arg(long, value_name = "MS", default_value_t = 2.0)]
    app_work: f64,
    #[arg(long, value_name = "POLICY")]
    disable: Vec<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// A failure that ends the command with a given status.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Display) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn finding(message: impl Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

impl From<PackError> for Failure {
    fn from(e: PackError) -> Self {
        match e {
            PackError::Io { .. } | PackError::UnknownPolicy(_) => usage(e),
            _ => finding(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Validate { paths } => validate(&paths),
        Cmd::Run(args) => run(args),
        Cmd::Bench(args) => bench(args),
        Cmd::Interference { pack, extra } => interference(&pack, &extra),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("proactive: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn policy_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            files.extend(dir_entries(p, "pol")?);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn dir_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn validate(paths: &[PathBuf]) -> Result<u8, Failure> {
    let mut code = 0;
    for path in policy_files(paths)? {
        match load_policy_file(&path) {
            Ok(doc) => println!("ok {} ({})", path.display(), doc.name),
            Err(PackError::Io { path, message }) => return Err(usage(format!("{}: {message}", path.display()))),
            Err(e) => {
                eprintln!("{e}");
                code = 1;
            }
        }
    }
    Ok(code)
}

fn pack_dir(arg: &PackArg) -> Result<&Path, Failure> {
    arg.pack
        .as_deref()
        .ok_or_else(|| usage("no policy pack given (use --pack or PROACTIVE_PACK)"))
}

fn scenarios(paths: &[PathBuf]) -> Result<Vec<ScenarioScript>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            files.extend(dir_entries(p, "scn")?);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| ScenarioScript::load(f).map_err(usage))
        .collect()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(usage)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run_one(script: &ScenarioScript, pack: Option<&PolicyPack>, disabled: &[String]) -> Result<RunReport, Failure> {
    let enforcer = pack.map(|p| p.enforcer(disabled)).transpose()?;
    let (run, times) = run_timed(script, enforcer, Duration::ZERO).map_err(|e| usage(format!("{}: {e}", script.name)))?;
    let timing = script
        .steps
        .iter()
        .zip(times)
        .enumerate()
        .map(|(i, (s, t))| ActionTime {
            action: i + 1,
            command: s.command.to_string(),
            millis: t.as_secs_f64() * 1e3,
        })
        .collect();
    let expected = script
        .expected
        .or_else(|| pack.and_then(|p| p.expectations.get(&script.name).copied()));
    let disabled = if pack.is_some() { disabled.to_vec() } else { Vec::new() };
    Ok(RunReport::new(run, expected, disabled, timing))
}

fn run(args: RunArgs) -> Result<u8, Failure> {
    let scripts = scenarios(&args.scenario)?;
    let pack = if args.no_enforce {
        if !args.disable.is_empty() {
            return Err(usage("--disable needs enforcement"));
        }
        None
    } else {
        let p = PolicyPack::load(pack_dir(&args.pack)?)?;
        // reject unknown names before running anything
        p.enforcer(&args.disable)?;
        Some(p)
    };
    let reports: Vec<Result<RunReport, Failure>> = if args.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = scripts
                .iter()
                .map(|script| s.spawn(|| run_one(script, pack.as_ref(), &args.disable)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
        })
    } else {
        scripts
            .iter()
            .map(|s| run_one(s, pack.as_ref(), &args.disable))
            .collect()
    };
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            println!();
        }
        print!("{r}");
        if r.as_expected() == Some(false) && r.enforcement {
            println!("note          outcome differs from the expectation");
        }
    }
    if let Some(out) = &args.out {
        match &reports[..] {
            [one] => write_json(out, one)?,
            many => write_json(out, many)?,
        }
    }
    let leaked = reports.iter().any(|r| r.outcome == Outcome::Leaked);
    Ok(u8::from(leaked))
}

fn bench(args: BenchArgs) -> Result<u8, Failure> {
    let scripts = scenarios(&args.scenario)?;
    let pack = PolicyPack::load(pack_dir(&args.pack)?)?;
    if !(args.app_work.is_finite() && args.app_work >= 0.0) {
        return Err(usage("--app-work must be a non-negative number of milliseconds"));
    }
    let work = Duration::from_secs_f64(args.app_work / 1e3);
    let mut results = Vec::new();
    for script in &scripts {
        let r = bench_scenario(script, &pack, &args.disable, args.reps, work).map_err(|e| match e {
            BenchError::Pack(p) => Failure::from(p),
            e => usage(format!("{}: {e}", script.name)),
        })?;
        print!("{r}");
        if let Some(h) = r.highest() {
            println!(
                "highest overhead: action {} `{}` {}",
                h.action,
                h.command,
                proactive_core::format_overhead(h.overhead_percent)
            );
        }
        results.push(r);
    }
    if let Some(out) = &args.out {
        match &results[..] {
            [one] => write_json(out, one)?,
            many => write_json(out, many)?,
        }
    }
    Ok(0)
}

fn interference(pack: &PackArg, extra: &[PathBuf]) -> Result<u8, Failure> {
    let mut p = PolicyPack::load_unchecked(pack_dir(pack)?)?;
    for path in policy_files(extra)? {
        let doc = load_policy_file(&path)?;
        if p.policies.contains_key(&doc.name) {
            return Err(usage(format!("{}: policy `{}` is already in the pack", path.display(), doc.name)));
        }
        p.policies.insert(doc.name.clone(), doc);
    }
    let report: InterferenceReport = p.interference();
    let names: Vec<&str> = p.policies.keys().map(String::as_str).collect();
    println!("policies: {}", names.join(", "));
    println!("{report}");
    Ok(u8::from(!report.is_empty()))
}
