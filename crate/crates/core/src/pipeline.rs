use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::barrier::{estimate_c2, BarrierConstants};
use crate::config::{RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::io;
use crate::minimal::{bisect_kstar, iterate_minimal, IterationReport, KStarEstimate, Verdict};
use crate::mountain::{
    mountain_pass, EnergyContext, MountainPassOptions, MountainPassReport,
};
use crate::problem::{validate_exponents, ProblemSpec, ValidationMode};
use crate::stability::{assemble_forms, lambda1, stability_margin, StabilityReport};
use crate::verify::{verify_solution, VerificationReport};

/// Everything a subcommand needs: the parsed config, the mesh, and the spec
/// with k resolved (a fractional k is tied to the measured threshold).
pub struct RunContext {
    pub config: RunConfig,
    pub grid: Arc<RadialGrid>,
    pub spec: ProblemSpec,
    pub constants: BarrierConstants,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(config: RunConfig, out_override: Option<&Path>) -> Result<Self> {
        let grid = Arc::new(RadialGrid::new(
            config.grid.r_min,
            config.grid.r_max,
            config.grid.nodes,
            config.spec.n,
        )?);
        let mut spec = config.spec.to_problem_spec();
        spec.check_basic()?;
        let constants = estimate_c2(&spec, &grid)?;
        if let Some(frac) = config.spec.k_fraction_of_kp {
            if !(frac.is_finite() && frac > 0.0) {
                return Err(Error::Config(format!(
                    "k_fraction_of_kp must be positive, got {frac}"
                )));
            }
            if !constants.kp.is_finite() {
                return Err(Error::Config(
                    "k_fraction_of_kp needs a finite threshold (p > 1)".into(),
                ));
            }
            spec.k = frac * constants.kp;
        }
        let out_dir = match out_override {
            Some(p) => p.to_path_buf(),
            None => match std::env::var("DIRAC_ELLIPTIC_OUT") {
                Ok(v) if !v.is_empty() => PathBuf::from(v),
                _ => PathBuf::from(&config.output_dir),
            },
        };
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self { config, grid, spec, constants, out_dir })
    }

    fn solve_minimal_inner(&self) -> Result<IterationReport> {
        let v = validate_exponents(&self.spec, ValidationMode::Minimal)?;
        iterate_minimal(&v, &self.grid, self.config.solve.max_iter, self.config.tolerances.iteration)
    }

    /// The solution field consumed by stability/mountain-pass/verify: either
    /// the CSV named in the config or a fresh minimal solve.
    fn input_solution(&self) -> Result<RadialField> {
        if let Some(path) = &self.config.inputs.solution_csv {
            return io::read_field_csv(Path::new(path), self.spec.n);
        }
        let rep = self.solve_minimal_inner()?;
        rep.solution.ok_or_else(|| {
            Error::Domain(format!("minimal iteration did not converge ({:?})", rep.verdict))
        })
    }
}

pub fn run_estimate_kp(ctx: &RunContext) -> Result<BarrierConstants> {
    io::write_json(&ctx.out_dir.join("barrier_constants.json"), &ctx.constants)?;
    Ok(ctx.constants.clone())
}

#[derive(Debug, Serialize)]
pub struct SolveArtifacts {
    pub report: IterationReport,
    pub solution_csv: Option<String>,
}

pub fn run_solve_minimal(ctx: &RunContext) -> Result<SolveArtifacts> {
    let report = ctx.solve_minimal_inner()?;
    io::write_json(&ctx.out_dir.join("iteration_report.json"), &report)?;
    let mut solution_csv = None;
    if let Some(sol) = &report.solution {
        let p = ctx.out_dir.join("minimal_solution.csv");
        io::write_field_csv(&p, sol)?;
        solution_csv = Some(p.display().to_string());
    }
    Ok(SolveArtifacts { report, solution_csv })
}

pub fn run_kstar(ctx: &RunContext) -> Result<KStarEstimate> {
    let v = validate_exponents(&ctx.spec, ValidationMode::Minimal)?;
    let seed = ctx.config.kstar.k_seed.unwrap_or({
        if ctx.constants.kp.is_finite() {
            ctx.constants.kp
        } else {
            ctx.spec.k
        }
    });
    let est = bisect_kstar(
        &v,
        &ctx.grid,
        seed,
        ctx.config.kstar.rel_tol,
        ctx.config.kstar.probe_max_iter,
        ctx.config.kstar.cap_factor,
    )?;
    io::write_json(&ctx.out_dir.join("kstar.json"), &est)?;
    Ok(est)
}

pub fn run_stability(ctx: &RunContext) -> Result<StabilityReport> {
    let u = ctx.input_solution()?;
    let forms = assemble_forms(&u, &ctx.spec, &ctx.grid)?;
    let report = lambda1(&forms)?;
    io::write_json(&ctx.out_dir.join("stability.json"), &report)?;
    if let Some(xi) = &report.eigenfunction {
        io::write_field_csv(&ctx.out_dir.join("eigenfunction.csv"), xi)?;
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct StabilitySweepRow {
    pub k: f64,
    pub lambda1: f64,
    pub margin: f64,
    pub c3: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Serialize)]
pub struct StabilitySweepSummary {
    pub rows: Vec<StabilitySweepRow>,
    pub kstar_hi: Option<f64>,
    /// Infimum of the empirical margin constant across the sweep.
    pub c3_inf: Option<f64>,
    pub lambda_nonincreasing: bool,
}

pub fn run_stability_sweep(ctx: &RunContext) -> Result<StabilitySweepSummary> {
    let cfg = &ctx.config.stability_sweep;
    if !(cfg.points >= 2 && cfg.k_lo_fraction > 0.0 && cfg.k_hi_fraction <= 1.0) {
        return Err(Error::Config("stability sweep needs points >= 2 and fractions in (0, 1]".into()));
    }
    if !ctx.constants.kp.is_finite() {
        return Err(Error::Config("stability sweep needs a finite threshold (p > 1)".into()));
    }
    let kstar_hi = {
        let v = validate_exponents(&ctx.spec, ValidationMode::Minimal)?;
        bisect_kstar(
            &v,
            &ctx.grid,
            ctx.constants.kp,
            ctx.config.kstar.rel_tol,
            ctx.config.kstar.probe_max_iter,
            ctx.config.kstar.cap_factor,
        )?
        .k_hi
    };
    let mut rows = Vec::new();
    for i in 0..cfg.points {
        let t = i as f64 / (cfg.points - 1) as f64;
        let k = (cfg.k_lo_fraction + t * (cfg.k_hi_fraction - cfg.k_lo_fraction)) * ctx.constants.kp;
        let spec_k = ctx.spec.clone().with_k(k);
        let v = validate_exponents(&spec_k, ValidationMode::Minimal)?;
        let rep = iterate_minimal(&v, &ctx.grid, ctx.config.solve.max_iter, ctx.config.tolerances.iteration)?;
        let Some(sol) = &rep.solution else {
            return Err(Error::Domain(format!("sweep run at k = {k} did not converge")));
        };
        let forms = assemble_forms(sol, &spec_k, &ctx.grid)?;
        let stab = lambda1(&forms)?;
        let c3 = match kstar_hi {
            Some(hi) if k < hi => Some(stability_margin(k, hi, spec_k.p, &stab)?.c3),
            _ => None,
        };
        rows.push(StabilitySweepRow { k, lambda1: stab.lambda1, margin: stab.margin, c3, steps: rep.steps });
    }
    let lambda_nonincreasing = rows.windows(2).all(|w| w[1].lambda1 <= w[0].lambda1 * (1.0 + 1e-9));
    let c3_inf = rows.iter().filter_map(|r| r.c3).fold(None, |acc: Option<f64>, v| {
        Some(acc.map_or(v, |a| a.min(v)))
    });
    let summary = StabilitySweepSummary { rows, kstar_hi, c3_inf, lambda_nonincreasing };

    let mut csv = String::from("k,lambda1,margin,c3\n");
    for r in &summary.rows {
        let c3s = r.c3.map_or(String::from(""), |v| format!("{v:e}"));
        csv.push_str(&format!("{:e},{:e},{:e},{}\n", r.k, r.lambda1, r.margin, c3s));
    }
    std::fs::write(ctx.out_dir.join("stability_sweep.csv"), csv)?;
    io::write_json(&ctx.out_dir.join("stability_sweep.json"), &summary)?;
    Ok(summary)
}

pub fn run_mountain_pass(ctx: &RunContext) -> Result<MountainPassReport> {
    let u = ctx.input_solution()?;
    validate_exponents(&ctx.spec, ValidationMode::MountainPassRadial)?;
    let ectx = EnergyContext::new(&u, &ctx.spec, &ctx.grid)?;
    // default direction: the first stability eigenfunction; fall back to a
    // log-Gaussian bump at the potential maximizer
    let forms = assemble_forms(&u, &ctx.spec, &ctx.grid)?;
    let dir = match lambda1(&forms) {
        Ok(rep) => match rep.eigenfunction {
            Some(xi) => xi.values().to_vec(),
            None => bump_at_potential_max(ctx)?,
        },
        Err(_) => bump_at_potential_max(ctx)?,
    };
    let opts = MountainPassOptions {
        path_size: ctx.config.mountain_pass.path_size,
        max_deform: ctx.config.mountain_pass.max_deform,
        grad_tol: ctx.config.tolerances.grad,
        switch_tol: ctx.config.mountain_pass.switch_tol,
        seed: ctx.config.mountain_pass.seed,
        ring_samples: ctx.config.mountain_pass.ring_samples,
    };
    let report = mountain_pass(&ectx, &dir, &opts)?;
    io::write_json(&ctx.out_dir.join("mountain_pass.json"), &report)?;
    std::fs::write(
        ctx.out_dir.join("path_energies.csv"),
        io::path_energies_csv(&report.path_energies),
    )?;
    std::fs::write(
        ctx.out_dir.join("solution_profiles.csv"),
        io::profiles_csv(ectx.u_min(), &report.second_solution),
    )?;
    io::write_field_csv(&ctx.out_dir.join("second_solution.csv"), &report.second_solution)?;
    Ok(report)
}

fn bump_at_potential_max(ctx: &RunContext) -> Result<Vec<f64>> {
    let v = ctx.spec.potential_on(&ctx.grid)?;
    let mut imax = 0;
    for (i, val) in v.iter().enumerate() {
        if *val > v[imax] {
            imax = i;
        }
    }
    let center = ctx.grid.nodes()[imax].ln();
    let mut out: Vec<f64> = ctx
        .grid
        .nodes()
        .iter()
        .map(|r| {
            let s = r.ln() - center;
            (-s * s).exp()
        })
        .collect();
    let m = out.len();
    out[m - 1] = 0.0;
    Ok(out)
}

pub fn run_verify(ctx: &RunContext) -> Result<VerificationReport> {
    let u = ctx.input_solution()?;
    let report = verify_solution(&u, &ctx.spec, &ctx.grid, &ctx.config.verify.to_tolerances())?;
    io::write_json(&ctx.out_dir.join("verification.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct PipelineSummary {
    pub constants: BarrierConstants,
    pub resolved_k: f64,
    pub solve_verdict: Verdict,
    pub kstar: Option<KStarEstimate>,
    pub lambda1: Option<f64>,
    pub stable: Option<bool>,
    pub mountain_pass_converged: Option<bool>,
    pub level_c: Option<f64>,
    /// Classical residual + singularity law + decay for the minimal solution.
    pub minimal_verified: Option<bool>,
    pub second_verified: Option<bool>,
    /// Weak-formulation budget (weak_factor * k); attaining the default
    /// 1e-6 budget needs a finer mesh than the default one.
    pub minimal_weak_ok: Option<bool>,
    pub second_weak_ok: Option<bool>,
}

/// Run every stage in order, feeding artifacts forward on disk and in
/// memory: constants, minimal solve, threshold scan, stability, mountain
/// pass, verification of both solutions.
pub fn run_pipeline(ctx: &RunContext) -> Result<PipelineSummary> {
    let constants = run_estimate_kp(ctx)?;
    let solve = run_solve_minimal(ctx)?;
    let mut summary = PipelineSummary {
        constants,
        resolved_k: ctx.spec.k,
        solve_verdict: solve.report.verdict,
        kstar: None,
        lambda1: None,
        stable: None,
        mountain_pass_converged: None,
        level_c: None,
        minimal_verified: None,
        second_verified: None,
        minimal_weak_ok: None,
        second_weak_ok: None,
    };
    if solve.report.verdict != Verdict::Converged {
        io::write_json(&ctx.out_dir.join("pipeline_summary.json"), &summary)?;
        return Ok(summary);
    }
    let u_min = solve.report.solution.clone().unwrap();

    summary.kstar = Some(run_kstar(ctx)?);
    let stab = run_stability(ctx)?;
    summary.lambda1 = Some(stab.lambda1);
    summary.stable = Some(stab.stable);

    let mp_applicable =
        validate_exponents(&ctx.spec, ValidationMode::MountainPassRadial).is_ok();
    let mut second: Option<RadialField> = None;
    if mp_applicable {
        let mp = run_mountain_pass(ctx)?;
        summary.mountain_pass_converged = Some(mp.converged);
        summary.level_c = Some(mp.level_c);
        second = Some(mp.second_solution.clone());
    }

    let tols = ctx.config.verify.to_tolerances();
    let rep_min = verify_solution(&u_min, &ctx.spec, &ctx.grid, &tols)?;
    io::write_json(&ctx.out_dir.join("verification_minimal.json"), &rep_min)?;
    summary.minimal_verified =
        Some(rep_min.residual_pass && rep_min.singular_pass && rep_min.decay_finite);
    summary.minimal_weak_ok = Some(rep_min.weak_pass);
    if let Some(second) = second {
        let rep_2 = verify_solution(&second, &ctx.spec, &ctx.grid, &tols)?;
        io::write_json(&ctx.out_dir.join("verification_second.json"), &rep_2)?;
        summary.second_verified =
            Some(rep_2.residual_pass && rep_2.singular_pass && rep_2.decay_finite);
        summary.second_weak_ok = Some(rep_2.weak_pass);
    }
    io::write_json(&ctx.out_dir.join("pipeline_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub verdict: Option<Verdict>,
    pub steps: Option<usize>,
    pub c2: Option<f64>,
    pub lambda1: Option<f64>,
    pub margin: Option<f64>,
    pub level_c: Option<f64>,
    pub error: Option<String>,
}

/// Sweep one axis, one independent solve per row, rows computed by a small
/// worker pool and written in input order.
pub fn run_sweep(ctx: &RunContext, workers: usize) -> Result<Vec<SweepRow>> {
    let cfg = &ctx.config.sweep;
    if cfg.values.is_empty() {
        return Err(Error::Config("sweep.values must not be empty".into()));
    }
    let rows: Vec<Mutex<Option<SweepRow>>> =
        cfg.values.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(cfg.values.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfg.values.len() {
                    break;
                }
                let row = sweep_row(ctx, cfg.axis, cfg.values[i], cfg.mountain_pass);
                *rows[i].lock().unwrap() = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> =
        rows.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect();

    let mut csv = String::from("value,verdict,steps,c2,lambda1,margin,level_c,error\n");
    for r in &rows {
        let verdict = r
            .verdict
            .map(|v| format!("{v:?}").to_lowercase())
            .unwrap_or_default();
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        let steps = r.steps.map(|s| s.to_string()).unwrap_or_default();
        let err = r.error.clone().unwrap_or_default().replace(',', ";");
        csv.push_str(&format!(
            "{:e},{},{},{},{},{},{},{}\n",
            r.value,
            verdict,
            steps,
            opt(r.c2),
            opt(r.lambda1),
            opt(r.margin),
            opt(r.level_c),
            err
        ));
    }
    std::fs::write(ctx.out_dir.join("sweep.csv"), csv)?;
    io::write_json(&ctx.out_dir.join("sweep.json"), &rows)?;
    Ok(rows)
}

fn sweep_row(ctx: &RunContext, axis: SweepAxis, value: f64, with_mp: bool) -> SweepRow {
    let mut row = SweepRow {
        value,
        verdict: None,
        steps: None,
        c2: None,
        lambda1: None,
        margin: None,
        level_c: None,
        error: None,
    };
    let mut spec = ctx.spec.clone();
    match axis {
        SweepAxis::K => spec.k = value,
        SweepAxis::P => spec.p = value,
        SweepAxis::C1 => spec.c1 = value,
    }
    let result = (|| -> Result<()> {
        let v = validate_exponents(&spec, ValidationMode::Minimal)?;
        row.c2 = Some(estimate_c2(&spec, &ctx.grid)?.c2);
        let rep = iterate_minimal(
            &v,
            &ctx.grid,
            ctx.config.solve.max_iter,
            ctx.config.tolerances.iteration,
        )?;
        row.verdict = Some(rep.verdict);
        row.steps = Some(rep.steps);
        let Some(sol) = &rep.solution else {
            return Ok(());
        };
        let forms = assemble_forms(sol, &spec, &ctx.grid)?;
        let stab = lambda1(&forms)?;
        row.lambda1 = Some(stab.lambda1);
        row.margin = Some(stab.margin);
        if with_mp && validate_exponents(&spec, ValidationMode::MountainPassRadial).is_ok() {
            let ectx = EnergyContext::new(sol, &spec, &ctx.grid)?;
            if let Some(xi) = lambda1(&forms)?.eigenfunction {
                let opts = MountainPassOptions {
                    path_size: ctx.config.mountain_pass.path_size,
                    max_deform: ctx.config.mountain_pass.max_deform,
                    grad_tol: ctx.config.tolerances.grad,
                    switch_tol: ctx.config.mountain_pass.switch_tol,
                    seed: ctx.config.mountain_pass.seed,
                    ring_samples: ctx.config.mountain_pass.ring_samples,
                };
                let mp = mountain_pass(&ectx, xi.values(), &opts)?;
                row.level_c = Some(mp.level_c);
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Exit-code policy: analysis outcomes are data (0), config and validation
/// problems are failures (2), numeric breakdowns are internal errors (3).
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::ValidationFailed { .. }
        | Error::InvalidDimension(_)
        | Error::InvalidGrid(_)
        | Error::PotentialOrdering { .. }
        | Error::TestFunctionSupport { .. }
        | Error::NoBarrier(_)
        | Error::Io(_) => 2,
        _ => 3,
    }
}
