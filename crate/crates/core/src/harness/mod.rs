//! Command-line surface: config loading, subcommand dispatch, run
//! manifests and replay.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid config, 4 missing or
//! unreadable input, 5 runtime failure, 6 an invariant check failed,
//! 7 replay produced different outputs.

pub mod cli;
pub mod commands;
pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::Path;
use std::time::Instant;

use clap::Parser;

pub use cli::{Cli, Command};
pub use config::{config_entries, ConfigEntry, LabConfig, Provenance};
pub use run::{persist, sha256_hex, sig9, Artifact, Check, Outcome, RunManifest, MANIFEST};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;
pub const EXIT_INVARIANT: i32 = 6;
pub const EXIT_REPLAY_MISMATCH: i32 = 7;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Parse(_) => EXIT_INPUT,
        _ => EXIT_RUNTIME,
    }
}

/// Runs a subcommand without touching the output directory.
pub fn execute(cmd: &Command) -> crate::Result<Outcome> {
    match cmd {
        Command::Synth(a) => commands::synth(a),
        Command::Annotate(a) => commands::annotate(a),
        Command::Label(a) => commands::label(a),
        Command::Curate(a) => commands::curate(a),
        Command::TrainReward(a) => commands::train_reward(a),
        Command::EvalReward(a) => commands::eval_reward(a),
        Command::Theory(a) => commands::theory(a),
        Command::Riskclust(a) => commands::riskclust(a),
        Command::Grpo(a) => commands::grpo(a),
        Command::Report(a) => commands::report(a),
        Command::Replay(_) => Err(Error::InvalidParameter("replay cannot be nested".into())),
    }
}

fn out_dir(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Synth(a) => Some(&a.common.out),
        Command::Annotate(a) => Some(&a.common.out),
        Command::Label(a) => Some(&a.common.out),
        Command::Curate(a) => Some(&a.common.out),
        Command::TrainReward(a) => Some(&a.common.out),
        Command::EvalReward(a) => Some(&a.common.out),
        Command::Theory(a) => Some(&a.common.out),
        Command::Riskclust(a) => Some(&a.common.out),
        Command::Grpo(a) => Some(&a.common.out),
        Command::Report(a) => Some(&a.out),
        Command::Replay(a) => a.out.as_deref(),
    }
}

fn manifest_for(cmd: &Command, args: &[String], outcome: &Outcome, secs: f64) -> RunManifest {
    RunManifest {
        run_id: run::run_id(cmd.name(), args, &outcome.inputs, &outcome.config),
        command: cmd.name().to_string(),
        args: args.to_vec(),
        seed: outcome.seed,
        config: outcome.config.clone(),
        config_entries: config_entries(&outcome.config),
        inputs: outcome.inputs.clone(),
        outputs: outcome.output_artifacts(),
        checks: outcome.checks.clone(),
        duration_secs: secs,
    }
}

fn report_checks(outcome: &Outcome) -> i32 {
    let mut code = EXIT_OK;
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("invariant failed: {} {}", c.name, c.detail);
        code = EXIT_INVARIANT;
    }
    code
}

fn run_and_persist(cmd: &Command, args: &[String]) -> i32 {
    let start = Instant::now();
    let outcome = match execute(cmd) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let manifest = manifest_for(cmd, args, &outcome, start.elapsed().as_secs_f64());
    let dir = out_dir(cmd).expect("every producing command has --out");
    match persist(dir, &outcome, &manifest) {
        Ok(p) => {
            if !outcome.summary.is_empty() {
                println!("{}", outcome.summary.trim_end());
            }
            println!("manifest {}", p.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    }
    report_checks(&outcome)
}

/// Re-executes the command recorded in a manifest and compares every
/// declared output hash.
fn replay(args: &cli::ReplayArgs) -> i32 {
    let manifest = match RunManifest::load(&args.manifest) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    for input in &manifest.inputs {
        match run::read_bytes(Path::new(&input.path)) {
            Ok(b) if sha256_hex(&b) == input.sha256 => {}
            Ok(_) => {
                eprintln!("error: input {} changed since the run", input.path);
                return EXIT_INPUT;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT;
            }
        }
    }
    let argv = std::iter::once("arblab".to_string()).chain(manifest.args.iter().cloned());
    let cmd = match Cli::try_parse_from(argv) {
        Ok(c) => c.command,
        Err(e) => {
            eprintln!("error: manifest arguments do not parse: {e}");
            return EXIT_INPUT;
        }
    };
    let start = Instant::now();
    let outcome = match execute(&cmd) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let got = outcome.output_artifacts();
    let mut same = got.len() == manifest.outputs.len() && outcome.config == manifest.config;
    for want in &manifest.outputs {
        let status = match got.iter().find(|g| g.path == want.path) {
            Some(g) if g.sha256 == want.sha256 => "MATCH",
            Some(_) => {
                same = false;
                "DIFF"
            }
            None => {
                same = false;
                "MISSING"
            }
        };
        println!("{status}\t{}\t{}", want.path, want.sha256);
    }
    if let Some(dir) = &args.out {
        let m = manifest_for(&cmd, &manifest.args, &outcome, start.elapsed().as_secs_f64());
        if let Err(e) = persist(dir, &outcome, &m) {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    }
    if !same {
        eprintln!("replay differs from {}", args.manifest.display());
        return EXIT_REPLAY_MISMATCH;
    }
    println!("replay identical: {} outputs", got.len());
    report_checks(&outcome)
}

/// Parses `argv` (program name first) and runs the subcommand; returns
/// the process exit code.
pub fn main_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match &cli.command {
        Command::Replay(r) => replay(r),
        cmd => run_and_persist(cmd, &args),
    }
}
