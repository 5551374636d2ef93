use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{RadialField, Representation};
use crate::grid::RadialGrid;
use crate::problem::{unit_sphere_area, validate_exponents, ProblemSpec, ValidationMode};
use crate::stability::{assemble_forms, QuadraticForms};
use crate::tridiag::solve_tridiag;

/// Shifted nonlinearity F(s, t) = [(s+t_+)^(p+1) - s^(p+1) - (p+1) s^p t_+]/(p+1).
///
/// For t_+ small against s the bracket cancels catastrophically, so that
/// regime is evaluated by the binomial series in t_+/s.
pub fn f_big_eval(s: f64, t: f64, p: f64) -> f64 {
    let tp = t.max(0.0);
    if tp == 0.0 {
        return 0.0;
    }
    if s <= 0.0 {
        return tp.powf(p + 1.0) / (p + 1.0);
    }
    let x = tp / s;
    if x < 0.5 {
        // sum_{j>=2} binom(p+1, j) x^j
        let mut coeff = (p + 1.0) * p / 2.0;
        let mut term = coeff * x * x;
        let mut acc = term;
        let mut xp = x * x;
        let mut j = 2.0;
        for _ in 0..96 {
            coeff *= (p + 1.0 - j) / (j + 1.0);
            xp *= x;
            term = coeff * xp;
            acc += term;
            j += 1.0;
            if term.abs() <= 1e-17 * acc.abs() {
                break;
            }
        }
        s.powf(p + 1.0) * acc / (p + 1.0)
    } else {
        ((s + tp).powf(p + 1.0) - s.powf(p + 1.0) - (p + 1.0) * s.powf(p) * tp) / (p + 1.0)
    }
}

/// dF/dt = (s + t_+)^p - s^p for t > 0, else 0.
pub fn f_eval(s: f64, t: f64, p: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if s <= 0.0 {
        return t.powf(p);
    }
    let x = t / s;
    if x < 0.5 {
        s.powf(p) * f64::exp_m1(p * f64::ln_1p(x))
    } else {
        (s + t).powf(p) - s.powf(p)
    }
}

/// d2F/dt2 = p (s + t_+)^(p-1) for t > 0, else 0 (Jacobian diagonal).
fn f_t_eval(s: f64, t: f64, p: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    p * (s + t).powf(p - 1.0)
}

/// Everything an energy evaluation needs: the minimal solution, the active
/// potential and the assembled gradient form on the mesh.
pub struct EnergyContext {
    pub grid: Arc<RadialGrid>,
    pub spec: ProblemSpec,
    pub forms: QuadraticForms,
    u_min_raw: Vec<f64>,
    v_pot: Vec<f64>,
    /// sigma * quadrature weight per node (full-space measure).
    w_sigma: Vec<f64>,
    u_min: RadialField,
}

impl EnergyContext {
    pub fn new(u_min: &RadialField, spec: &ProblemSpec, grid: &Arc<RadialGrid>) -> Result<Self> {
        validate_exponents(spec, ValidationMode::MountainPassRadial)?;
        if !u_min.is_nonnegative(1e-12) {
            return Err(Error::Domain("minimal solution must be nonnegative".into()));
        }
        let forms = assemble_forms(u_min, spec, grid)?;
        let sigma = unit_sphere_area(spec.n);
        let w_sigma = grid.weights().iter().map(|w| sigma * w).collect();
        Ok(Self {
            grid: grid.clone(),
            spec: spec.clone(),
            forms,
            u_min_raw: u_min.to_raw(),
            v_pot: spec.potential_on(grid)?,
            w_sigma,
            u_min: u_min.clone(),
        })
    }

    pub fn u_min(&self) -> &RadialField {
        &self.u_min
    }

    pub fn a_norm(&self, v: &[f64]) -> f64 {
        self.forms.a_energy(v).sqrt()
    }
}

/// E(v) = 1/2 A(v) - int V F(u_min, v_+); overflow of the nonlinear term is
/// reported as a signal so line searches can back off.
pub fn energy(v: &[f64], ctx: &EnergyContext) -> Result<f64> {
    if v.len() != ctx.grid.len() {
        return Err(Error::LengthMismatch { expected: ctx.grid.len(), actual: v.len() });
    }
    let a = ctx.forms.a_energy(v);
    let mut nl = 0.0;
    let p = ctx.spec.p;
    for i in 0..v.len() {
        nl += ctx.w_sigma[i] * ctx.v_pot[i] * f_big_eval(ctx.u_min_raw[i], v[i], p);
    }
    let e = 0.5 * a - nl;
    if !e.is_finite() {
        return Err(Error::EnergyOverflow);
    }
    Ok(e)
}

/// Load vector of the nonlinear term against the nodal basis.
fn load_vector(v: &[f64], ctx: &EnergyContext) -> Vec<f64> {
    let p = ctx.spec.p;
    (0..v.len())
        .map(|i| ctx.w_sigma[i] * ctx.v_pot[i] * f_eval(ctx.u_min_raw[i], v[i], p))
        .collect()
}

/// Riesz representative g of E'(v) in the A inner product:
/// A(g, phi) = A(v, phi) - int V f(u_min, v_+) phi. Returns (g, ||g||_A).
pub fn energy_gradient(v: &[f64], ctx: &EnergyContext) -> Result<(Vec<f64>, f64)> {
    let m = ctx.grid.len();
    if v.len() != m {
        return Err(Error::LengthMismatch { expected: m, actual: v.len() });
    }
    let b = load_vector(v, ctx);
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::EnergyOverflow);
    }
    let sol = ctx.forms.solve_a(&b[..m - 1])?;
    let mut g = v.to_vec();
    for i in 0..m - 1 {
        g[i] -= sol[i];
    }
    g[m - 1] = 0.0;
    let gn = ctx.forms.a_energy(&g).sqrt();
    if !gn.is_finite() {
        return Err(Error::EnergyOverflow);
    }
    Ok((g, gn))
}

/// Scale the direction until the energy endpoint drops below zero.
pub fn find_endpoint(ctx: &EnergyContext, v_dir: &[f64]) -> Result<(f64, Vec<f64>)> {
    let norm = ctx.a_norm(v_dir);
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Domain("endpoint direction must be nonzero".into()));
    }
    if v_dir.iter().any(|v| *v < -1e-12 * norm) {
        return Err(Error::Domain("endpoint direction must be nonnegative".into()));
    }
    let dir: Vec<f64> = v_dir.iter().map(|v| v.max(0.0) / norm).collect();
    let mut t = 1.0;
    const CAP: f64 = 1e9;
    while t < CAP {
        let e: Vec<f64> = dir.iter().map(|v| t * v).collect();
        match energy(&e, ctx) {
            Ok(val) if val <= 0.0 => return Ok((t, e)),
            Ok(_) => t *= 2.0,
            Err(Error::EnergyOverflow) => {
                return Err(Error::EndpointNotFound(t));
            }
            Err(err) => return Err(err),
        }
    }
    Err(Error::EndpointNotFound(CAP))
}

/// Deformed path with fixed endpoints 0 and e.
#[derive(Debug, Clone)]
pub struct Path {
    pub states: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassOptions {
    pub path_size: usize,
    pub max_deform: usize,
    pub grad_tol: f64,
    /// Deformation hands over to the critical-point polish below this
    /// gradient norm.
    pub switch_tol: f64,
    pub seed: u64,
    /// Directions sampled on the small sphere for the ring floor.
    pub ring_samples: usize,
}

impl Default for MountainPassOptions {
    fn default() -> Self {
        Self {
            path_size: 41,
            max_deform: 400,
            grad_tol: 1e-6,
            switch_tol: 5e-2,
            seed: 42,
            ring_samples: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassReport {
    pub level_c: f64,
    pub beta_floor: f64,
    /// Radius of the sampled mountain ring.
    pub t0: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub deform_rounds: usize,
    pub polish_iterations: usize,
    /// Largest negative excursion removed from the reported critical point.
    pub clamp_size: f64,
    /// Running minimax estimate per deformation round (nonincreasing).
    pub level_history: Vec<f64>,
    /// Largest A(v) seen along the deformation iterates.
    pub max_a_energy: f64,
    pub endpoint_scale: f64,
    /// Energies along the final path.
    pub path_energies: Vec<f64>,
    #[serde(skip)]
    pub v_k: RadialField,
    #[serde(skip)]
    pub second_solution: RadialField,
    #[serde(skip)]
    pub final_path: Option<Path>,
}

struct GoldenResult {
    theta: f64,
    value: f64,
}

fn golden_max(
    mut eval: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> GoldenResult {
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..80 {
        if (b - a).abs() < tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = eval(d);
        }
    }
    let theta = 0.5 * (a + b);
    let value = eval(theta);
    GoldenResult { theta, value }
}

fn lerp(a: &[f64], b: &[f64], th: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + th * (y - x)).collect()
}

/// Newton polish of the Euler-Lagrange system A v = load(v), tridiagonal
/// Jacobian. Runs from the deformation's best point down to the target
/// residual; the deformation alone stalls near the saddle because descent
/// directions keep sliding off the unstable manifold.
fn polish_critical_point(
    start: &[f64],
    ctx: &EnergyContext,
    target: f64,
    max_newton: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let m = ctx.grid.len();
    let n = m - 1;
    let (diag, off) = ctx.forms.a_tridiag();
    let p = ctx.spec.p;

    let residual = |v: &[f64]| -> Result<(Vec<f64>, f64)> {
        let b = load_vector(v, ctx);
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::EnergyOverflow);
        }
        let av = crate::tridiag::apply_tridiag(&diag, &off, &v[..n]);
        let fv: Vec<f64> = av.iter().zip(&b[..n]).map(|(a, bb)| a - bb).collect();
        let g = solve_tridiag(&diag, &off, &fv)?;
        let gn2: f64 = g.iter().zip(&fv).map(|(a, b)| a * b).sum();
        Ok((fv, gn2.max(0.0).sqrt()))
    };

    let mut v = start.to_vec();
    v[m - 1] = 0.0;
    let (mut fv, mut gn) = residual(&v)?;
    let mut iterations = 0;
    for _ in 0..max_newton {
        if gn <= target {
            break;
        }
        iterations += 1;
        let mut jd = diag.clone();
        for i in 0..n {
            jd[i] -= ctx.w_sigma[i] * ctx.v_pot[i] * f_t_eval(ctx.u_min_raw[i], v[i], p);
        }
        let dv = solve_tridiag(&jd, &off, &fv)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let mut vn = v.clone();
            for i in 0..n {
                vn[i] -= step * dv[i];
            }
            match residual(&vn) {
                Ok((fn_, gnn)) if gnn.is_finite() && gnn < gn => {
                    v = vn;
                    fv = fn_;
                    gn = gnn;
                    accepted = true;
                    break;
                }
                _ => step /= 2.0,
            }
        }
        if !accepted {
            break;
        }
    }
    Ok((v, gn, iterations))
}

/// Fit the two-power lower envelope a t^2 - b t^(p+1) to energies sampled on
/// the unit A-sphere and place the ring radius inside the rising zone. The
/// radius starts at a quarter of the envelope maximizer, capped so the ring
/// stays below the minimax level, and backs off until the sampled floor is
/// strictly positive.
fn ring_floor(ctx: &EnergyContext, dirs: &[Vec<f64>], level_c: f64) -> Result<(f64, f64)> {
    let p = ctx.spec.p;
    let t_samples = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0];
    let mut a_min = f64::INFINITY;
    let mut b_max = 1e-12f64;
    for dir in dirs {
        let mut a_dir = f64::INFINITY;
        for (j, &t) in t_samples.iter().enumerate() {
            let vt: Vec<f64> = dir.iter().map(|v| t * v).collect();
            let e = energy(&vt, ctx)?;
            if j == 0 {
                a_dir = e / (t * t);
            }
            let b_req = (a_dir * t * t - e) / t.powf(p + 1.0);
            b_max = b_max.max(b_req);
        }
        a_min = a_min.min(a_dir);
    }
    if !(a_min.is_finite() && a_min > 0.0) {
        return Err(Error::Domain(format!(
            "quadratic coefficient on the sphere is not positive (a = {a_min}); no mountain ring"
        )));
    }
    // envelope max sits at (2a/((p+1)b))^(1/(p-1)); every path from 0 to the
    // endpoint crosses the sphere, so the reported floor must also sit at or
    // below the level for the pair to be coherent
    let t_star = (2.0 * a_min / ((p + 1.0) * b_max)).powf(1.0 / (p - 1.0));
    let mut t0 = 0.25 * t_star;
    if level_c.is_finite() && level_c > 0.0 {
        t0 = t0.min((2.0 * level_c).sqrt());
    }
    for _ in 0..60 {
        let mut beta = f64::INFINITY;
        for dir in dirs {
            let vt: Vec<f64> = dir.iter().map(|v| t0 * v).collect();
            beta = beta.min(energy(&vt, ctx)?);
        }
        if beta > 0.0 && (!level_c.is_finite() || beta <= level_c) {
            return Ok((t0, beta));
        }
        t0 /= 2.0;
    }
    Err(Error::Domain("no positive ring floor found on the sampled sphere".into()))
}

fn random_direction(ctx: &EnergyContext, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = ctx.grid.len();
    let ln_lo = ctx.grid.r_min().ln();
    let ln_hi = ctx.grid.r_max().ln();
    let mut v = vec![0.0; m];
    for _ in 0..3 {
        let center = rng.gen_range(ln_lo * 0.5..ln_hi * 0.5);
        let width = rng.gen_range(0.5..2.0);
        let amp: f64 = rng.gen_range(-1.0..1.0);
        for (i, r) in ctx.grid.nodes().iter().enumerate() {
            let s = (r.ln() - center) / width;
            v[i] += amp * (-s * s).exp();
        }
    }
    v[m - 1] = 0.0;
    let n = ctx.a_norm(&v);
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

/// Minimax search for a second critical point of the shifted functional.
///
/// Phase one deforms the segment path t -> t e: the maximal-energy point of
/// the polyline (nodes and segment interiors) takes an Armijo step along the
/// negative Riesz gradient and the path is locally reknotted around it.
/// Phase two hands the best point to the Euler-Lagrange polish. The level
/// reported per round is the running minimax estimate (best path bound seen
/// so far), which is nonincreasing by construction.
pub fn mountain_pass(
    ctx: &EnergyContext,
    v_dir: &[f64],
    opts: &MountainPassOptions,
) -> Result<MountainPassReport> {
    if opts.path_size < 5 {
        return Err(Error::Domain("path_size must be at least 5".into()));
    }
    let m = ctx.grid.len();
    let (endpoint_scale, e_state) = find_endpoint(ctx, v_dir)?;

    // sphere directions for the ring floor: the search direction plus
    // seeded random bumps
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let norm_dir = {
        let n = ctx.a_norm(v_dir);
        let mut d: Vec<f64> = v_dir.iter().map(|v| v / n).collect();
        d[m - 1] = 0.0;
        d
    };
    let mut dirs = vec![norm_dir];
    for _ in 0..opts.ring_samples.saturating_sub(1) {
        dirs.push(random_direction(ctx, &mut rng));
    }

    // initial segment path
    let mut states: Vec<Vec<f64>> = (0..opts.path_size)
        .map(|i| {
            let t = i as f64 / (opts.path_size - 1) as f64;
            e_state.iter().map(|v| t * v).collect()
        })
        .collect();
    let mut energies: Vec<f64> = Vec::with_capacity(states.len());
    for s in &states {
        energies.push(energy(s, ctx)?);
    }

    let mut level_history: Vec<f64> = Vec::new();
    let mut best_level = f64::INFINITY;
    let mut max_a_energy = 0.0f64;
    let mut alpha = 1.0f64;
    let mut best_point: Vec<f64> = states[states.len() / 2].clone();
    let mut best_gn = f64::INFINITY;
    let mut rounds = 0;

    let energy_or_neg_inf = |v: &[f64], ctx: &EnergyContext| -> f64 {
        energy(v, ctx).unwrap_or(f64::NEG_INFINITY)
    };

    for round in 0..opts.max_deform {
        rounds = round + 1;
        // locate the polyline maximum: nodes plus segment midpoints, then a
        // golden refinement on the winning segment
        let mut best_val = f64::NEG_INFINITY;
        let mut best_seg = 0usize;
        let mut best_th = 0.0f64;
        for j in 0..states.len() - 1 {
            let mid = lerp(&states[j], &states[j + 1], 0.5);
            let em = energy_or_neg_inf(&mid, ctx);
            for (val, th) in [(energies[j], 0.0), (em, 0.5), (energies[j + 1], 1.0)] {
                if val > best_val {
                    best_val = val;
                    best_seg = j;
                    best_th = th;
                }
            }
        }
        let j = best_seg;
        let lo = (best_th - 0.45).max(0.0);
        let hi = (best_th + 0.45).min(1.0);
        let refined = golden_max(
            |th| energy_or_neg_inf(&lerp(&states[j], &states[j + 1], th), ctx),
            lo,
            hi,
            1e-3,
        );
        let (theta, e_z) = if refined.value >= best_val {
            (refined.theta, refined.value)
        } else {
            (best_th, best_val)
        };
        let z = lerp(&states[j], &states[j + 1], theta);

        best_level = best_level.min(e_z);
        level_history.push(best_level);
        max_a_energy = max_a_energy.max(ctx.forms.a_energy(&z));

        let (g, gn) = energy_gradient(&z, ctx)?;
        if gn < best_gn {
            best_gn = gn;
            best_point = z.clone();
        }
        if gn <= opts.switch_tol || gn <= opts.grad_tol {
            break;
        }

        // Armijo backtracking with factor 1/2
        let gn2 = gn * gn;
        let mut step = (alpha * 2.0).min(1e3);
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..60 {
            let cand: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            match energy(&cand, ctx) {
                Ok(ec) if ec <= e_z - 1e-4 * step * gn2 => {
                    accepted = Some((cand, ec));
                    break;
                }
                _ => step /= 2.0,
            }
        }
        let Some((cand, ec)) = accepted else {
            break; // descent exhausted; polish takes over
        };
        alpha = step;

        // local reknot: a node-like max is replaced in place, an interior
        // max is split into the path and a redundant node elsewhere is merged
        let node_like = theta < 1e-3 || theta > 1.0 - 1e-3;
        if node_like {
            let mut tgt = if theta < 0.5 { j } else { j + 1 };
            tgt = tgt.clamp(1, states.len() - 2);
            states[tgt] = cand;
            energies[tgt] = ec;
        } else {
            states.insert(j + 1, cand);
            energies.insert(j + 1, ec);
            if states.len() > opts.path_size {
                let mut prune = 0usize;
                let mut prune_dev = f64::INFINITY;
                for kk in 1..states.len() - 1 {
                    if kk.abs_diff(j + 1) <= 1 {
                        continue;
                    }
                    let mid = lerp(&states[kk - 1], &states[kk + 1], 0.5);
                    let dev: f64 = ctx
                        .forms
                        .a_energy(&states[kk].iter().zip(&mid).map(|(a, b)| a - b).collect::<Vec<_>>());
                    if dev < prune_dev {
                        prune_dev = dev;
                        prune = kk;
                    }
                }
                if prune > 0 {
                    states.remove(prune);
                    energies.remove(prune);
                }
            }
        }
    }

    let (v_polished, grad_norm, polish_iterations) =
        polish_critical_point(&best_point, ctx, (opts.grad_tol * 0.01).max(1e-13), 80)?;
    let e_crit = energy(&v_polished, ctx)?;
    let converged = grad_norm <= opts.grad_tol && e_crit > 0.0;

    // the ring is placed once the level is known so the reported pair
    // beta_floor <= level_c is coherent on every mesh and exponent set
    let (t0, beta_floor) = ring_floor(ctx, &dirs, e_crit)?;

    // reported critical point is clamped at zero; the clamp size is the
    // convergence diagnostic for the positive-part structure
    let mut clamp_size = 0.0f64;
    let clamped: Vec<f64> = v_polished
        .iter()
        .map(|v| {
            if *v < 0.0 {
                clamp_size = clamp_size.max(-*v);
                0.0
            } else {
                *v
            }
        })
        .collect();
    let v_k = RadialField::new(ctx.grid.clone(), clamped.clone(), Representation::Raw)?;

    // final path: reinsert the critical point at the max position
    let mut max_idx = 1;
    let mut max_val = f64::NEG_INFINITY;
    for (i, e_i) in energies.iter().enumerate().skip(1).take(energies.len() - 2) {
        if *e_i > max_val {
            max_val = *e_i;
            max_idx = i;
        }
    }
    states[max_idx] = v_polished;
    energies[max_idx] = e_crit;
    let level_c = e_crit;
    best_level = best_level.min(level_c);
    level_history.push(best_level);

    // second solution u_min + v_k in scaled storage
    let u_scaled = ctx.u_min().to_scaled();
    let e_dim = ctx.spec.n as i32 - 2;
    let mut second = Vec::with_capacity(m);
    for i in 0..m {
        second.push(u_scaled[i] + clamped[i] * ctx.grid.nodes()[i].powi(e_dim));
    }
    let second_solution = RadialField::new(ctx.grid.clone(), second, Representation::Scaled)?;

    Ok(MountainPassReport {
        level_c,
        beta_floor,
        t0,
        grad_norm,
        converged,
        deform_rounds: rounds,
        polish_iterations,
        clamp_size,
        level_history,
        max_a_energy,
        endpoint_scale,
        path_energies: energies.clone(),
        v_k,
        second_solution,
        final_path: Some(Path { states, energies }),
    })
}

/// Sampled embedding ratios into the weighted Lebesgue spaces.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    /// Per sample: ||xi||_(L^(p+1), V0 dx) / ||xi||_A.
    pub lebesgue_ratios: Vec<f64>,
    /// Per sample: ||xi||_(L^2, V0 u^(p-1) dx) / ||xi||_A.
    pub weighted_l2_ratios: Vec<f64>,
    pub max_lebesgue: f64,
    pub max_weighted_l2: f64,
}

/// Compute both embedding ratios for each sample field; boundedness across
/// the sample set is the numerical proxy for continuity.
pub fn embedding_check(ctx: &EnergyContext, samples: &[Vec<f64>]) -> Result<EmbeddingReport> {
    let p = ctx.spec.p;
    let mut lr = Vec::with_capacity(samples.len());
    let mut wr = Vec::with_capacity(samples.len());
    for xi in samples {
        if xi.len() != ctx.grid.len() {
            return Err(Error::LengthMismatch { expected: ctx.grid.len(), actual: xi.len() });
        }
        let a = ctx.a_norm(xi);
        if a == 0.0 {
            lr.push(0.0);
            wr.push(0.0);
            continue;
        }
        let mut lp = 0.0;
        let mut l2 = 0.0;
        for i in 0..xi.len() {
            let v0 = ctx.spec.envelope_v0(ctx.grid.nodes()[i])?;
            lp += ctx.w_sigma[i] * v0 * xi[i].abs().powf(p + 1.0);
            let upw =
                if ctx.u_min_raw[i] == 0.0 { 0.0 } else { ctx.u_min_raw[i].powf(p - 1.0) };
            l2 += ctx.w_sigma[i] * v0 * upw * xi[i] * xi[i];
        }
        lr.push(lp.powf(1.0 / (p + 1.0)) / a);
        wr.push(l2.sqrt() / a);
    }
    let max_l = lr.iter().cloned().fold(0.0f64, f64::max);
    let max_w = wr.iter().cloned().fold(0.0f64, f64::max);
    Ok(EmbeddingReport {
        lebesgue_ratios: lr,
        weighted_l2_ratios: wr,
        max_lebesgue: max_l,
        max_weighted_l2: max_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimal::iterate_minimal;
    use crate::problem::Potential;
    use crate::stability::lambda1;

    const KP_DEFAULT: f64 = 2.0 * std::f64::consts::SQRT_2;

    fn setup() -> (Arc<RadialGrid>, EnergyContext, Vec<f64>) {
        let grid = Arc::new(RadialGrid::default_for_dim(3).unwrap());
        let spec = ProblemSpec::new(3, 2.0, KP_DEFAULT / 2.0, 0.0, 4.0, 1.0);
        let v = validate_exponents(&spec, ValidationMode::Minimal).unwrap();
        let u = iterate_minimal(&v, &grid, 500, 1e-10).unwrap().solution.unwrap();
        let ctx = EnergyContext::new(&u, &spec, &grid).unwrap();
        let forms = assemble_forms(&u, &spec, &grid).unwrap();
        let eig = lambda1(&forms).unwrap();
        let dir = eig.eigenfunction.unwrap().values().to_vec();
        (grid, ctx, dir)
    }

    #[test]
    fn f_values() {
        // F(s, 0) = 0; F(0, t) = t^(p+1)/(p+1); F(1,1) at p=2 is 4/3
        for s in [0.0, 0.5, 3.0] {
            assert_eq!(f_big_eval(s, 0.0, 2.0), 0.0);
            assert_eq!(f_big_eval(s, -1.0, 2.0), 0.0);
        }
        assert!((f_big_eval(0.0, 2.0, 2.0) - 8.0 / 3.0).abs() < 1e-14);
        assert!((f_big_eval(1.0, 1.0, 2.0) - 4.0 / 3.0).abs() < 1e-14);
        // derivative values
        assert_eq!(f_eval(1.0, 0.0, 2.0), 0.0);
        assert!((f_eval(0.0, 2.0, 2.0) - 4.0).abs() < 1e-14);
        // series regime agrees with the direct bracket at moderate x
        for p in [1.5f64, 2.0, 2.7] {
            for x in [0.49f64, 0.51] {
                let s = 2.0f64;
                let t = x * s;
                let direct = ((s + t).powf(p + 1.0)
                    - s.powf(p + 1.0)
                    - (p + 1.0) * s.powf(p) * t)
                    / (p + 1.0);
                let got = f_big_eval(s, t, p);
                assert!(((got - direct) / direct).abs() < 1e-12, "p={p} x={x}");
            }
        }
        // cancellation regime stays accurate: compare against the exact
        // p = 2 expansion F = (3 s t^2 + t^3)/3
        let s = 1e8;
        let t = 1.0;
        let exact = (3.0 * s * t * t + t * t * t) / 3.0;
        assert!(((f_big_eval(s, t, 2.0) - exact) / exact).abs() < 1e-13);
    }

    #[test]
    fn f_matches_f_big_derivative_at_second_order() {
        // central differences of F in t converge to f at O(h^2)
        let (p, s, t) = (2.3, 1.7, 0.9);
        let exact = f_eval(s, t, p);
        let err_at = |h: f64| {
            let d = (f_big_eval(s, t + h, p) - f_big_eval(s, t - h, p)) / (2.0 * h);
            (d - exact).abs()
        };
        let (e1, e2) = (err_at(1e-3), err_at(5e-4));
        let factor = e1 / e2;
        assert!((3.5..=4.5).contains(&factor), "factor {factor}");
    }

    #[test]
    fn energy_at_zero_and_endpoint() {
        let (grid, ctx, dir) = setup();
        let zero = vec![0.0; grid.len()];
        assert_eq!(energy(&zero, &ctx).unwrap(), 0.0);
        let (t, e) = find_endpoint(&ctx, &dir).unwrap();
        assert!(t >= 1.0);
        assert!(energy(&e, &ctx).unwrap() <= 0.0);
        // gradient at zero vanishes
        let (_, gn) = energy_gradient(&zero, &ctx).unwrap();
        assert!(gn <= 1e-14);
    }

    #[test]
    fn endpoint_requires_potential_mass() {
        let grid = Arc::new(RadialGrid::default_for_dim(3).unwrap());
        let spec = ProblemSpec::new(3, 2.0, KP_DEFAULT / 2.0, 0.0, 4.0, 1.0);
        let v = validate_exponents(&spec, ValidationMode::Minimal).unwrap();
        let u = iterate_minimal(&v, &grid, 500, 1e-10).unwrap().solution.unwrap();
        let spec_zero = spec.clone().with_potential(Potential::ScaledV0 { factor: 0.0 });
        let ctx = EnergyContext::new(&u, &spec_zero, &grid).unwrap();
        let dir: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|r| {
                let s = r.ln();
                (-s * s).exp()
            })
            .collect();
        assert!(matches!(find_endpoint(&ctx, &dir), Err(Error::EndpointNotFound(_))));
    }

    #[test]
    fn integrand_overflow_is_signalled() {
        let (grid, ctx, dir) = setup();
        let huge: Vec<f64> = dir.iter().map(|v| v * 1e160).collect();
        assert!(matches!(energy(&huge, &ctx), Err(Error::EnergyOverflow)));
        let _ = grid;
    }

    #[test]
    fn endpoint_scale_weakly_decreases_in_c1() {
        // more potential mass pulls the energy down sooner along the ray
        let grid = Arc::new(RadialGrid::default_for_dim(3).unwrap());
        let mut scales = Vec::new();
        for c1 in [1.0, 2.0] {
            let spec_ref = ProblemSpec::new(3, 2.0, 1.0, 0.0, 4.0, c1);
            let kp = crate::barrier::estimate_c2(&spec_ref, &grid).unwrap().kp;
            let spec = spec_ref.with_k(kp / 2.0);
            let v = validate_exponents(&spec, ValidationMode::Minimal).unwrap();
            let u = iterate_minimal(&v, &grid, 500, 1e-10).unwrap().solution.unwrap();
            let ctx = EnergyContext::new(&u, &spec, &grid).unwrap();
            let forms = assemble_forms(&u, &spec, &grid).unwrap();
            let dir = lambda1(&forms).unwrap().eigenfunction.unwrap().values().to_vec();
            let (t, e) = find_endpoint(&ctx, &dir).unwrap();
            assert!(energy(&e, &ctx).unwrap() <= 0.0);
            scales.push(t);
        }
        assert!(scales[1] <= scales[0], "T = {scales:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (grid, ctx, dir) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for trial in 0..20 {
            let scale = if trial % 2 == 0 { 0.5 } else { 3.0 };
            let mut v: Vec<f64> = dir.iter().map(|x| scale * x).collect();
            let bump = random_direction(&ctx, &mut rng);
            for (vi, bi) in v.iter_mut().zip(&bump) {
                *vi += 0.3 * bi;
            }
            v[grid.len() - 1] = 0.0;
            let phi = random_direction(&ctx, &mut rng);
            let (g, _) = energy_gradient(&v, &ctx).unwrap();
            let a_g_phi = ctx.forms.a_inner(&g, &phi);
            let h = 1e-5;
            let vp: Vec<f64> = v.iter().zip(&phi).map(|(a, b)| a + h * b).collect();
            let vm: Vec<f64> = v.iter().zip(&phi).map(|(a, b)| a - h * b).collect();
            let fd = (energy(&vp, &ctx).unwrap() - energy(&vm, &ctx).unwrap()) / (2.0 * h);
            let rel = ((a_g_phi - fd) / fd.abs().max(1e-12)).abs();
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst rel {worst}");
    }

    #[test]
    fn mountain_pass_default_case() {
        let (grid, ctx, dir) = setup();
        let opts = MountainPassOptions { grad_tol: 1e-7, ..Default::default() };
        let rep = mountain_pass(&ctx, &dir, &opts).unwrap();
        assert!(rep.converged);
        assert!(rep.grad_norm <= 1e-7);
        assert!(rep.beta_floor > 0.0);
        assert!(rep.level_c >= rep.beta_floor);
        // pinned by the deformation study before the build
        assert!(
            ((rep.level_c - 4.56018780) / 4.56018780).abs() < 1e-3,
            "level {}",
            rep.level_c
        );
        // running minimax estimate never increases
        for w in rep.level_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // final path keeps its endpoint contract
        let path = rep.final_path.as_ref().unwrap();
        assert!(path.states[0].iter().all(|v| *v == 0.0));
        assert_eq!(path.energies[0], 0.0);
        assert!(*path.energies.last().unwrap() <= 0.0);
        assert_eq!(path.states.len(), path.energies.len());
        // nonnegative critical point, strictly positive where V > 0 away
        // from the truncation boundary
        let vk = rep.v_k.values();
        assert!(vk.iter().all(|v| *v >= 0.0));
        assert!(vk[..grid.len() - 1].iter().all(|v| *v > 0.0));
        assert!(rep.clamp_size <= 1e-10 * rep.v_k.max_value());
        // second solution strictly dominates the minimal one there
        let second = rep.second_solution.values();
        let umin = ctx.u_min().values();
        assert!(second[..grid.len() - 1]
            .iter()
            .zip(&umin[..grid.len() - 1])
            .all(|(s, u)| s > u));
        // PS proxy: A stays bounded along the deformation
        assert!(rep.max_a_energy <= 100.0 * (1.0 + rep.level_c));

        // weak criticality against random test fields
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vk_full = rep.v_k.values().to_vec();
        let n_a = ctx.a_norm(&vk_full);
        let load = super::load_vector(&vk_full, &ctx);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let phi = random_direction(&ctx, &mut rng);
            let lhs = ctx.forms.a_inner(&vk_full, &phi);
            let rhs: f64 = load.iter().zip(&phi).map(|(a, b)| a * b).sum();
            let rel = (lhs - rhs).abs() / (n_a * ctx.a_norm(&phi));
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "criticality rel {worst}");
    }

    #[test]
    fn embedding_ratios_bounded_and_homogeneous() {
        let (grid, ctx, dir) = setup();
        let mut samples = vec![dir.clone()];
        // concentration family: bumps squeezing toward the origin
        for scale in [1.0f64, 0.1, 0.01] {
            let xi: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|r| {
                    let s = (r / scale).ln();
                    (-s * s).exp()
                })
                .collect();
            samples.push(xi);
        }
        let zero = vec![0.0; grid.len()];
        samples.push(zero);
        let rep = embedding_check(&ctx, &samples).unwrap();
        assert_eq!(rep.lebesgue_ratios.last().copied().unwrap(), 0.0);
        assert!(rep.max_lebesgue.is_finite() && rep.max_weighted_l2.is_finite());
        // concentration keeps the ratios bounded in the valid window
        assert!(rep.max_lebesgue < 10.0 * rep.lebesgue_ratios[0].max(1e-300));
        // degree-one homogeneity: doubling the field leaves ratios unchanged
        let doubled: Vec<f64> = samples[0].iter().map(|v| 2.0 * v).collect();
        let rep2 = embedding_check(&ctx, &[samples[0].clone(), doubled]).unwrap();
        assert!(
            (rep2.lebesgue_ratios[0] - rep2.lebesgue_ratios[1]).abs()
                <= 1e-12 * rep2.lebesgue_ratios[0]
        );
    }
}
