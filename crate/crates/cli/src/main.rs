//! `fint`: first integrals of linear ODE systems from a JSON spec.
//!
//! ```text
//! $ fint analyze specs/constant_simple4.json
//! $ fint basis specs/constant_simple4.json --mode autonomous
//! $ fint verify specs/constant_simple4.json --trajectories 20 --tol 1e-7
//! ```
//!
//! Exit codes: 0 success, 2 bad input, 3 unclassifiable system,
//! 4 failed construction, 5 failed verification.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fint_core::numerics::{verify_basis, VerificationReport, VerifyOptions};
use fint_core::{analyze, construct, BasisResult, FintError, Integral, Mode, Result, SystemSpec};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "fint",
    version,
    about = "Closed-form first integrals of linear ODE systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the system and print its spectral data.
    Analyze {
        spec: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Construct a basis of first integrals.
    Basis {
        #[command(flatten)]
        common: BasisArgs,
    },
    /// Construct a basis and check it along random trajectories.
    Verify {
        #[command(flatten)]
        common: BasisArgs,
        #[arg(long, default_value_t = 20)]
        trajectories: usize,
        /// Gate on the relative drift of each integral.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the first linear form of the basis by 1e-3 before checking.
        #[arg(long)]
        inject_test: bool,
    },
}

#[derive(Args)]
struct BasisArgs {
    spec: PathBuf,
    /// autonomous, full or forced; chosen from the system when omitted.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    json: bool,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: FintError| e.to_string())
}

fn load(path: &Path) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FintError::Input(format!("cannot read {}: {e}", path.display())))?;
    SystemSpec::from_json(&text)
}

fn print_json(v: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("json values serialize")
    );
}

fn print_basis(b: &BasisResult) {
    println!("class: {}", b.class);
    println!("mode: {}", b.mode);
    for (k, i) in b.integrals.iter().enumerate() {
        println!("F{} = {}", k + 1, i.expr);
        println!("    [{}]", i.theorem);
        if !i.singular.is_empty() {
            println!("    singular: {}", i.singular.describe());
        }
    }
    for note in &b.notes {
        println!("note: {note}");
    }
}

fn inject(b: &mut BasisResult) -> Result<()> {
    let slot = b
        .integrals
        .iter_mut()
        .find_map(|i| i.expr.perturb_first_linform(1e-3).map(|p| (i, p)));
    let Some((integral, perturbed)) = slot else {
        return Err(FintError::Input(
            "no linear form to perturb in this basis".into(),
        ));
    };
    *integral = Integral::new(perturbed, format!("{} (perturbed)", integral.theorem));
    Ok(())
}

fn print_report(r: &VerificationReport) {
    for i in &r.integrals {
        let status = if i.pass { "ok" } else { "FAIL" };
        println!(
            "F{}  drift {:.2e}  lie {:.2e}  {status}  [{}]",
            i.index, i.relative_drift, i.lie_residual, i.provenance
        );
        if i.skipped_trajectories > 0 {
            println!("    {} trajectories skipped", i.skipped_trajectories);
        }
    }
    println!("rank: {}/{}", r.rank, r.expected_rank);
    println!(
        "{} ({} trajectories on [{}, {}], tol {:e})",
        if r.pass { "PASS" } else { "FAIL" },
        r.trajectories,
        r.window.0,
        r.window.1,
        r.tol
    );
    for i in r.offenders() {
        println!("offender F{}: {}", i.index, i.expr);
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze { spec, json } => {
            let analysis = analyze(&load(&spec)?)?;
            if json {
                print_json(&analysis.to_json());
            } else {
                print!("{analysis}");
            }
            Ok(true)
        }
        Command::Basis { common } => {
            let b = construct(&load(&common.spec)?, common.mode)?;
            if common.json {
                print_json(&b.to_json());
            } else {
                print_basis(&b);
            }
            Ok(true)
        }
        Command::Verify {
            common,
            trajectories,
            tol,
            seed,
            inject_test,
        } => {
            let spec = load(&common.spec)?;
            let mut b = construct(&spec, common.mode)?;
            if inject_test {
                inject(&mut b)?;
            }
            let opts = VerifyOptions {
                trajectories,
                tol,
                seed,
                ..VerifyOptions::default()
            };
            let report = verify_basis(&spec, &b, &opts)?;
            if common.json {
                let mut v = serde_json::to_value(&report).expect("report serializes");
                v["basis"] = b.to_json();
                v["status"] = json!(if report.pass { "PASS" } else { "FAIL" });
                print_json(&v);
            } else {
                print_report(&report);
            }
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(5),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
