use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dirac_elliptic::config::RunConfig;
use dirac_elliptic::pipeline::{
    exit_code_for, run_estimate_kp, run_kstar, run_mountain_pass, run_pipeline, run_solve_minimal,
    run_stability, run_stability_sweep, run_sweep, run_verify, RunContext,
};

/// Radial solver for -Lap u = V u^p + k delta_0: minimal solutions,
/// threshold scans, stability spectra, mountain-pass second solutions.
#[derive(Parser)]
#[command(name = "dirac-elliptic", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply for every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides config and DIRAC_ELLIPTIC_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep rows.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the minimal-solution iteration and write the profile.
    SolveMinimal,
    /// Measure the barrier constant and the implied threshold.
    EstimateKp,
    /// Bracket the existence threshold in k.
    Kstar,
    /// First eigenvalue of the linearized problem at the minimal solution.
    Stability,
    /// Stability across a sweep of k up to the threshold.
    StabilitySweep,
    /// Second solution by the minimax search on the shifted functional.
    MountainPass,
    /// Residual, weak-formulation and singularity checks for a solution.
    Verify,
    /// All stages in order, feeding artifacts forward.
    Pipeline,
    /// One row per value of the configured sweep axis.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => match RunConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    let ctx = match RunContext::new(config, cli.out.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e) as u8);
        }
    };
    let outcome = match cli.command {
        Command::SolveMinimal => run_solve_minimal(&ctx).map(|a| {
            println!(
                "solve-minimal: verdict {:?} after {} steps (artifacts in {})",
                a.report.verdict,
                a.report.steps,
                ctx.out_dir.display()
            );
        }),
        Command::EstimateKp => run_estimate_kp(&ctx).map(|b| {
            println!(
                "estimate-kp: c2 = {:.9}, kp = {:.9}, tp = {:.3} (maximizer r = {:.4e})",
                b.c2, b.kp, b.tp, b.maximizer_radius
            );
        }),
        Command::Kstar => run_kstar(&ctx).map(|e| {
            match e.k_hi {
                Some(hi) => println!(
                    "kstar: bracket [{:.6}, {:.6}], kp = {:.6}, k_lo >= kp: {}",
                    e.k_lo, hi, e.kp, e.k_lo_at_least_kp
                ),
                None => println!("kstar: open above (convergent through k = {:.4e})", e.k_lo),
            };
        }),
        Command::Stability => run_stability(&ctx).map(|s| {
            println!(
                "stability: lambda1 = {:.6}, stable = {}, margin = {:.6}",
                s.lambda1, s.stable, s.margin
            );
        }),
        Command::StabilitySweep => run_stability_sweep(&ctx).map(|s| {
            println!(
                "stability-sweep: {} rows, lambda1 nonincreasing = {}, inf c3 = {:?}",
                s.rows.len(),
                s.lambda_nonincreasing,
                s.c3_inf
            );
        }),
        Command::MountainPass => run_mountain_pass(&ctx).map(|m| {
            println!(
                "mountain-pass: level = {:.6} >= beta = {:.6}, grad = {:.2e}, converged = {}",
                m.level_c, m.beta_floor, m.grad_norm, m.converged
            );
        }),
        Command::Verify => run_verify(&ctx).map(|v| {
            println!(
                "verify: residual {} ({}), weak {} checks {}, singular {} (target {}), decay finite {}",
                v.residual_sup,
                if v.residual_pass { "pass" } else { "FAIL" },
                v.weak_residuals.len(),
                if v.weak_pass { "pass" } else { "FAIL" },
                v.singular_coeff,
                v.singular_target,
                v.decay_finite
            );
        }),
        Command::Pipeline => run_pipeline(&ctx).map(|s| {
            println!(
                "pipeline: verdict {:?}, lambda1 {:?}, level_c {:?}, verified minimal {:?} second {:?}",
                s.solve_verdict, s.lambda1, s.level_c, s.minimal_verified, s.second_verified
            );
        }),
        Command::Sweep => run_sweep(&ctx, cli.workers).map(|rows| {
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("sweep: {} rows, {} with in-row errors", rows.len(), failed);
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
