use std::path::PathBuf;
use std::process::ExitCode;

use bergman_cli::{run_experiment, validate_config, ConfigError, Experiment};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Weighted Bergman kernel experiments.
#[derive(Parser)]
#[command(name = "bergman", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel, metric and curvature at the probes.
    Kernel(Common),
    /// Minimum integrals and the Bergman–Fuks values.
    Minint(Common),
    /// Tian's sequence e^{-mφ} and the 1/m expansion fit.
    Tyz(Common),
    /// Kernels of det(g^KE)^{-(m-1)} against the Kähler–Einstein volume.
    TianKe(Common),
    /// Tsuji's dynamical sequence.
    Tsuji(Common),
    /// Numerical weighted ball kernels against the closed form.
    OracleCompare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Number of random probe points.
    #[arg(long)]
    probes: Option<usize>,
    /// Seed for probe sampling.
    #[arg(long)]
    seed: Option<u64>,
}

fn fail_config(errors: &[ConfigError]) -> ExitCode {
    println!("{}", json!({ "error": "invalid_config", "errors": errors }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Kernel(a) => (Experiment::Kernel, a),
        Command::Minint(a) => (Experiment::Minint, a),
        Command::Tyz(a) => (Experiment::Tyz, a),
        Command::TianKe(a) => (Experiment::TianKe, a),
        Command::Tsuji(a) => (Experiment::Tsuji, a),
        Command::OracleCompare(a) => (Experiment::OracleCompare, a),
    };

    if let Ok(v) = std::env::var("BERGMAN_THREADS") {
        match v.parse::<usize>() {
            Ok(t) if t > 0 => {
                // only fails if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => eprintln!("ignoring BERGMAN_THREADS={v:?}: expected a positive integer"),
        }
    }

    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                println!("{}", json!({ "error": "io", "message": format!("{}: {e}", path.display()) }));
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };
    let mut table: toml::Table = match text.parse() {
        Ok(t) => t,
        // let validation report the parse error
        Err(_) => return fail_config(&validate_config(&text, Some(experiment)).err().unwrap_or_default()),
    };
    if let Some(seed) = args.seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if let Some(n) = args.probes {
        let probes = table.entry("probes").or_insert_with(|| toml::Value::Table(Default::default()));
        if let Some(p) = probes.as_table_mut() {
            p.insert("random".into(), toml::Value::Integer(n as i64));
        }
    }
    let cfg = match validate_config(&table.to_string(), Some(experiment)) {
        Ok(c) => c,
        Err(errors) => return fail_config(&errors),
    };

    match run_experiment(&cfg, &args.out) {
        Ok(a) => {
            let status = if a.failed { "error" } else if a.pass { "pass" } else { "fail" };
            match &a.csv {
                Some(csv) => println!("{experiment}: {status} ({}, {})", csv.display(), a.json.display()),
                None => println!("{experiment}: {status} ({})", a.json.display()),
            }
            if a.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("{}", json!({ "error": "io", "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
