//! `fedosov` command-line front end. All work happens in the core crate.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fedosov_core::pipeline::{self, Overrides, COMMANDS, EXIT_INPUT};
use fedosov_core::ring::parse_scalar;
use fedosov_core::spec::parse_spec_in;

#[derive(Parser, Debug)]
#[command(name = "fedosov", about = "Exact Fedosov star products on Lie algebroid duals")]
struct Args {
    /// Command to run; defaults to the spec's `command` entry.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(COMMANDS))]
    command: Option<String>,

    /// Extra `key=value` spec entries, e.g. f=p1 g=p2 (override the spec file).
    assignments: Vec<String>,

    /// Spec file; chart paths inside it resolve relative to its directory.
    #[arg(long)]
    spec: Option<PathBuf>,

    /// Ordering parameter, a rational such as 1/2.
    #[arg(long)]
    kappa: Option<String>,

    /// nu-order L.
    #[arg(long)]
    nu_order: Option<u32>,

    /// Total degree T (defaults to L + 2).
    #[arg(long)]
    total_degree: Option<u32>,

    #[arg(long)]
    trials: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Fibre degree bound for uea-check, gutt-compare, trace-check and assoc-check.
    #[arg(long)]
    max_degree: Option<u32>,

    /// Order bound for trace-check; selects one C_r for c-r.
    #[arg(long)]
    max_order: Option<u32>,
}

fn input_error(msg: String) -> ExitCode {
    println!("ERROR: {msg}\nRESULT: ERROR (input)");
    ExitCode::from(EXIT_INPUT as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (text, dir) = match &args.spec {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => (t, p.parent().map(|d| d.to_path_buf())),
            Err(e) => return input_error(format!("cannot read {}: {e}", p.display())),
        },
        None => (String::new(), None),
    };
    let text = match pipeline::merge_assignments(&text, &args.assignments) {
        Ok(t) => t,
        Err(e) => return input_error(e.to_string()),
    };
    let spec = match parse_spec_in(&text, dir.as_deref()) {
        Ok(s) => s,
        Err(e) => return input_error(e.to_string()),
    };
    let kappa = match args.kappa.as_deref().map(parse_scalar).transpose() {
        Ok(k) => k,
        Err(_) => return input_error("--kappa must be a rational number".into()),
    };
    let ov = Overrides {
        command: args.command,
        kappa,
        nu_order: args.nu_order,
        total_degree: args.total_degree,
        trials: args.trials,
        seed: args.seed,
        max_degree: args.max_degree,
        max_order: args.max_order,
    };
    let out = pipeline::run(&spec, &ov);
    print!("{}", out.text);
    ExitCode::from(out.code as u8)
}
