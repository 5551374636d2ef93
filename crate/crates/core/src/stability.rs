use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{RadialField, Representation};
use crate::grid::RadialGrid;
use crate::problem::{unit_sphere_area, ProblemSpec};
use crate::tridiag::{apply_tridiag, solve_tridiag};

/// Discretized quadratic forms of the linearization at a solution u:
/// A(xi) = int |grad xi|^2, B(xi) = int V u^(p-1) xi^2, both as full-space
/// integrals over the radial mesh.
///
/// Piecewise-linear elements in log r; Dirichlet at r_max, natural at r_min.
/// A is tridiagonal, B is lumped diagonal.
#[derive(Debug, Clone)]
pub struct QuadraticForms {
    grid: Arc<RadialGrid>,
    /// Per-element stiffness coefficients (length m-1).
    elem: Vec<f64>,
    /// Lumped diagonal of B (length m).
    b_diag: Vec<f64>,
    p: f64,
}

impl QuadraticForms {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn b_diag(&self) -> &[f64] {
        &self.b_diag
    }

    /// A(xi, xi): sum over elements of k_j (xi_(j+1) - xi_j)^2.
    pub fn a_energy(&self, xi: &[f64]) -> f64 {
        self.elem
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let d = xi[j + 1] - xi[j];
                k * d * d
            })
            .sum()
    }

    /// A(xi, phi) bilinear form.
    pub fn a_inner(&self, xi: &[f64], phi: &[f64]) -> f64 {
        self.elem
            .iter()
            .enumerate()
            .map(|(j, k)| k * (xi[j + 1] - xi[j]) * (phi[j + 1] - phi[j]))
            .sum()
    }

    /// B(xi, xi) with the lumped diagonal.
    pub fn b_energy(&self, xi: &[f64]) -> f64 {
        self.b_diag.iter().zip(xi).map(|(b, x)| b * x * x).sum()
    }

    /// Assembled tridiagonal of A on the reduced system (last node removed
    /// by the Dirichlet condition).
    pub fn a_tridiag(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.grid.len();
        let n = m - 1;
        let mut diag = vec![0.0; n];
        diag[0] = self.elem[0];
        for i in 1..n {
            diag[i] = self.elem[i - 1] + self.elem[i];
        }
        let off: Vec<f64> = (0..n - 1).map(|i| -self.elem[i]).collect();
        (diag, off)
    }

    /// Solve A x = rhs on the reduced system.
    pub fn solve_a(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (diag, off) = self.a_tridiag();
        solve_tridiag(&diag, &off, rhs)
    }
}

/// Assemble A and B at the solution u (scaled storage expected, any
/// representation accepted).
pub fn assemble_forms(
    u: &RadialField,
    spec: &ProblemSpec,
    grid: &Arc<RadialGrid>,
) -> Result<QuadraticForms> {
    if u.grid().len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), actual: u.grid().len() });
    }
    let sigma = unit_sphere_area(spec.n);
    let n_dim = spec.n as f64;
    let h = grid.log_step();
    let nodes = grid.nodes();
    let m = grid.len();
    let e = spec.n as i32 - 2;

    // element stiffness: sigma * (r_(j+1)^(N-2) - r_j^(N-2)) / ((N-2) h^2)
    let mut elem = Vec::with_capacity(m - 1);
    for j in 0..m - 1 {
        let k = sigma * (nodes[j + 1].powi(e) - nodes[j].powi(e)) / ((n_dim - 2.0) * h * h);
        elem.push(k);
    }

    let v_pot = spec.potential_on(grid)?;
    let u_raw = u.to_raw();
    let mut b_diag = Vec::with_capacity(m);
    for i in 0..m {
        let ui = u_raw[i];
        if ui < 0.0 {
            return Err(Error::Assembly(format!(
                "solution must be nonnegative, got {ui} at r = {}",
                nodes[i]
            )));
        }
        let weight = if ui == 0.0 && spec.p < 1.0 {
            0.0
        } else {
            v_pot[i] * ui.powf(spec.p - 1.0)
        };
        let val = sigma * grid.weights()[i] * weight;
        if !val.is_finite() {
            return Err(Error::Assembly(format!(
                "V u^(p-1) not integrable on the grid at r = {}",
                nodes[i]
            )));
        }
        if val < 0.0 {
            return Err(Error::Assembly(format!(
                "V u^(p-1) must be nonnegative for the form pencil, got {weight} at r = {}",
                nodes[i]
            )));
        }
        b_diag.push(val);
    }
    Ok(QuadraticForms { grid: grid.clone(), elem, b_diag, p: spec.p })
}

/// First generalized eigenvalue and the stability verdict.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// inf A(xi) / (p B(xi)); infinite when B vanishes.
    pub lambda1: f64,
    pub stable: bool,
    pub semi_stable: bool,
    /// 1 - 1/lambda1, the relative gap of the quadratic form.
    pub margin: f64,
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub eigenfunction: Option<RadialField>,
}

const EIGEN_TOL: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 400;

/// Smallest eigenpair of A xi = lambda (p B) xi by inverse iteration with
/// late Rayleigh shifts; tridiagonal solves throughout.
pub fn lambda1(forms: &QuadraticForms) -> Result<StabilityReport> {
    let m = forms.grid.len();
    let n = m - 1;
    let p = forms.p;
    let b_total: f64 = forms.b_diag.iter().sum();
    if b_total == 0.0 {
        return Ok(StabilityReport {
            lambda1: f64::INFINITY,
            stable: true,
            semi_stable: true,
            margin: 1.0,
            residual: 0.0,
            iterations: 0,
            eigenfunction: None,
        });
    }
    let (diag, off) = forms.a_tridiag();
    let pb: Vec<f64> = forms.b_diag[..n].iter().map(|b| p * b).collect();

    let norm_pb = |x: &[f64]| -> f64 {
        x.iter().zip(&pb).map(|(v, b)| b * v * v).sum::<f64>().sqrt()
    };

    let mut x = vec![1.0; n];
    let nx = norm_pb(&x);
    for v in &mut x {
        *v /= nx;
    }
    let mut lam = 0.0;
    let mut lam_prev = f64::NAN;
    let mut shift = 0.0;
    let mut residual = f64::INFINITY;
    let mut settled = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..EIGEN_MAX_ITER {
        iterations = it + 1;
        let rhs: Vec<f64> = x.iter().zip(&pb).map(|(v, b)| v * b).collect();
        let shifted: Vec<f64> = diag.iter().zip(&pb).map(|(d, b)| d - shift * b).collect();
        let y = solve_tridiag(&shifted, &off, &rhs)?;
        let ny = norm_pb(&y);
        if !(ny.is_finite() && ny > 0.0) {
            return Err(Error::EigenSolve { residual, iterations });
        }
        x = y.iter().map(|v| v / ny).collect();
        let ax = apply_tridiag(&diag, &off, &x);
        // Rayleigh quotient through the all-positive element sum; the nodal
        // product x . Ax cancels catastrophically where the stiffness is huge
        lam = {
            let mut acc = 0.0;
            for j in 0..n {
                let right = if j + 1 < n { x[j + 1] } else { 0.0 };
                let d = right - x[j];
                acc += forms.elem[j] * d * d;
            }
            acc
        };
        let mut rnorm = 0.0f64;
        let mut anorm = 0.0f64;
        for i in 0..n {
            let r = ax[i] - lam * pb[i] * x[i];
            rnorm += r * r;
            anorm += ax[i] * ax[i];
        }
        residual = (rnorm / anorm.max(1e-300)).sqrt();
        if residual <= EIGEN_TOL {
            converged = true;
            break;
        }
        // the relative residual floors out above the target on fine meshes
        // (stiffness entries spread with r/h); the Rayleigh value converges
        // quadratically in the eigenvector error, so a settled eigenvalue
        // with a stagnant residual is the secondary stop
        if (lam - lam_prev).abs() <= 1e-10 * lam.abs() && residual <= 1e-6 {
            settled += 1;
            if settled >= 6 {
                converged = true;
                break;
            }
        } else {
            settled = 0;
        }
        lam_prev = lam;
        if it >= 4 {
            // shifted inverse iteration accelerates the endgame; keeping the
            // shift strictly below lambda preserves the sign structure
            shift = lam * 0.99;
        }
    }
    if !converged {
        return Err(Error::EigenSolve { residual, iterations });
    }

    // extend to the full mesh with the Dirichlet zero, fix the sign, and
    // A-normalize
    let mut xi = vec![0.0; m];
    xi[..n].copy_from_slice(&x);
    let (mut max_abs, mut max_val) = (0.0f64, 0.0f64);
    for v in &xi {
        if v.abs() > max_abs {
            max_abs = v.abs();
            max_val = *v;
        }
    }
    if max_val < 0.0 {
        for v in &mut xi {
            *v = -*v;
        }
    }
    let na = forms.a_energy(&xi).sqrt();
    for v in &mut xi {
        *v /= na;
    }
    let eigenfunction =
        RadialField::new(forms.grid.clone(), xi, Representation::Raw)?;
    Ok(StabilityReport {
        lambda1: lam,
        stable: lam > 1.0,
        semi_stable: lam >= 1.0,
        margin: 1.0 - 1.0 / lam,
        residual,
        iterations,
        eigenfunction: Some(eigenfunction),
    })
}

/// Pointwise Hardy-type domination check at a solution field.
#[derive(Debug, Clone, Serialize)]
pub struct HardyReport {
    /// sup_r r^2 V(r) u(r)^(p-1) over the grid.
    pub sup_ratio: f64,
    /// sup_ratio normalized by k^(p-1).
    pub c_normalized: f64,
    /// sup_ratio * p * (2/(N-2))^2; below one the form inequality follows.
    pub hardy_product: f64,
    /// Per test field: (A(xi), p B(xi)).
    pub family: Vec<(f64, f64)>,
    /// True when hardy_product <= 1 and every sampled field satisfied
    /// p B(xi) <= A(xi).
    pub family_ok: bool,
}

/// Measure sup_r r^2 V u^(p-1) and, when the implied Hardy product is below
/// one, verify p B(xi) <= A(xi) on a family of sampled test fields.
pub fn hardy_bound_check(
    u: &RadialField,
    spec: &ProblemSpec,
    grid: &Arc<RadialGrid>,
) -> Result<HardyReport> {
    let v_pot = spec.potential_on(grid)?;
    let u_raw = u.to_raw();
    let mut sup_ratio = 0.0f64;
    for ((&r, &v), &ui) in grid.nodes().iter().zip(&v_pot).zip(&u_raw) {
        if ui < 0.0 {
            return Err(Error::Assembly("solution must be nonnegative".into()));
        }
        let val = if ui == 0.0 && spec.p < 1.0 { 0.0 } else { v * ui.powf(spec.p - 1.0) };
        sup_ratio = sup_ratio.max(r * r * val);
    }
    let n_dim = spec.n as f64;
    let hardy_product = sup_ratio * spec.p * (2.0 / (n_dim - 2.0)).powi(2);
    let forms = assemble_forms(u, spec, grid)?;
    let mut family = Vec::new();
    let mut family_ok = true;
    for width in [0.5, 1.0, 2.0] {
        for center in [-4.0f64, -1.0, 0.0, 1.0, 4.0] {
            let xi: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|r| {
                    let s = (r.ln() - center) / width;
                    (-s * s).exp()
                })
                .collect();
            let mut xi = xi;
            let mlast = xi.len() - 1;
            xi[mlast] = 0.0;
            let a = forms.a_energy(&xi);
            let pb = spec.p * forms.b_energy(&xi);
            if hardy_product <= 1.0 && pb > a * (1.0 + 1e-10) {
                family_ok = false;
            }
            family.push((a, pb));
        }
    }
    Ok(HardyReport {
        sup_ratio,
        c_normalized: sup_ratio / spec.k.powf(spec.p - 1.0),
        hardy_product,
        family,
        family_ok,
    })
}

/// Margin data m(k) = 1 - 1/lambda1 tied to the empirical threshold.
#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    pub k: f64,
    pub kstar_hi: f64,
    pub margin: f64,
    /// Empirical constant m(k) / (kstar_hi^((p-1)/p) - k^((p-1)/p)).
    pub c3: f64,
}

/// Form the margin m = 1 - 1/lambda1 and the implied empirical constant
/// against the bisection upper endpoint (a proxy for the true threshold,
/// recorded as such).
pub fn stability_margin(
    k: f64,
    kstar_hi: f64,
    p: f64,
    report: &StabilityReport,
) -> Result<MarginReport> {
    if !(k > 0.0 && kstar_hi.is_finite() && k < kstar_hi) {
        return Err(Error::Domain(format!(
            "need 0 < k < kstar_hi, got k = {k}, kstar_hi = {kstar_hi}"
        )));
    }
    let margin = 1.0 - 1.0 / report.lambda1;
    let denom = kstar_hi.powf((p - 1.0) / p) - k.powf((p - 1.0) / p);
    Ok(MarginReport { k, kstar_hi, margin, c3: margin / denom })
}
