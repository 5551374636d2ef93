use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// The weight in front of the power nonlinearity.
///
/// `V0` is the closed-form envelope c1 / (r^a0 (1 + r^(a_inf - a0))).
/// `ScaledV0` is alpha * V0 with alpha in [0, 1] (alpha = 0 switches the
/// nonlinearity off). `Tabulated` carries (r, V(r)) samples, interpolated
/// log-linearly in r and required to sit below V0 at every grid node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    #[default]
    V0,
    ScaledV0 { factor: f64 },
    Tabulated { points: Vec<(f64, f64)> },
}

/// Problem data: -Lap u = V u^p + k delta_0 in dimension N, radial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: u32,
    pub p: f64,
    pub k: f64,
    pub a0: f64,
    pub a_inf: f64,
    pub c1: f64,
    #[serde(default)]
    pub potential: Potential,
}

impl ProblemSpec {
    pub fn new(n: u32, p: f64, k: f64, a0: f64, a_inf: f64, c1: f64) -> Self {
        Self { n, p, k, a0, a_inf, c1, potential: Potential::V0 }
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    /// Structural invariants that hold for every run mode.
    pub fn check_basic(&self) -> Result<()> {
        let fail = |condition: &str| Err(Error::ValidationFailed { condition: condition.into() });
        if self.n < 3 {
            return fail("N >= 3");
        }
        if !(self.c1.is_finite() && self.c1 > 0.0) {
            return fail("c1 > 0");
        }
        if !(self.p.is_finite() && self.p > 0.0) {
            return fail("p > 0");
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return fail("k > 0");
        }
        if !(self.a0.is_finite() && self.a0 < self.n as f64) {
            return fail("a0 < N");
        }
        if !(self.a_inf.is_finite() && self.a_inf > self.a0) {
            return fail("a_inf > a0");
        }
        if let Potential::ScaledV0 { factor } = self.potential {
            if !(factor.is_finite() && (0.0..=1.0).contains(&factor)) {
                return fail("scaled potential factor in [0, 1]");
            }
        }
        Ok(())
    }

    /// V0(r) = c1 / (r^a0 (1 + r^(a_inf - a0))).
    pub fn envelope_v0(&self, r: f64) -> Result<f64> {
        potential_v0(r, self)
    }

    /// Evaluate the active potential at one radius.
    pub fn potential_at(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
        match &self.potential {
            Potential::V0 => potential_v0(r, self),
            Potential::ScaledV0 { factor } => Ok(factor * potential_v0(r, self)?),
            Potential::Tabulated { points } => Ok(interp_log(points, r)),
        }
    }

    /// Sample the active potential on the grid, enforcing V <= V0 nodewise
    /// for tabulated data (condition on the envelope).
    pub fn potential_on(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let tabulated = matches!(self.potential, Potential::Tabulated { .. });
        for &r in grid.nodes() {
            let v = self.potential_at(r)?;
            if tabulated {
                let cap = potential_v0(r, self)?;
                if v > cap * (1.0 + 1e-12) + 1e-300 {
                    return Err(Error::PotentialOrdering { radius: r, v1: cap, v2: v });
                }
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Closed-form envelope potential.
pub fn potential_v0(r: f64, spec: &ProblemSpec) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    Ok(spec.c1 / (r.powf(spec.a0) * (1.0 + r.powf(spec.a_inf - spec.a0))))
}

fn interp_log(points: &[(f64, f64)], r: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let x = r.ln();
    if r <= points[0].0 {
        return points[0].1;
    }
    if r >= points[points.len() - 1].0 {
        return points[points.len() - 1].1;
    }
    let mut lo = 0;
    let mut hi = points.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if points[mid].0 <= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x0, y0) = (points[lo].0.ln(), points[lo].1);
    let (x1, y1) = (points[hi].0.ln(), points[hi].1);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Area of the unit sphere S^(n-1) in R^n.
pub fn unit_sphere_area(n: u32) -> f64 {
    // 2 pi^(n/2) / Gamma(n/2), with the Gamma factor unrolled over integers
    // and half-integers so no special-function dependency is needed.
    let pi = std::f64::consts::PI;
    if n % 2 == 0 {
        let mut gamma = 1.0; // Gamma(n/2) = (n/2 - 1)!
        for i in 1..(n / 2) {
            gamma *= i as f64;
        }
        2.0 * pi.powi((n / 2) as i32) / gamma
    } else {
        let m = (n - 1) / 2; // Gamma(m + 1/2) = sqrt(pi) prod_{j=1..m} (j - 1/2)
        let mut gamma = pi.sqrt();
        for j in 1..=m {
            gamma *= j as f64 - 0.5;
        }
        2.0 * pi.powf(n as f64 / 2.0) / gamma
    }
}

/// Normalization c_N of the decaying kernel c_N |x|^(2-N) for -Lap.
pub fn newton_constant(n: u32) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidDimension(n));
    }
    Ok(1.0 / ((n as f64 - 2.0) * unit_sphere_area(n)))
}

/// Which inequality set a run must satisfy before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    Minimal,
    MountainPassRadial,
}

/// A spec that passed `validate_exponents`, annotated with the verified
/// exponent window.
#[derive(Debug, Clone, Serialize)]
pub struct ValidatedSpec {
    pub spec: ProblemSpec,
    pub mode: ValidationMode,
    /// Open interval for p implied by the decay exponents.
    pub p_window: (f64, f64),
}

impl std::ops::Deref for ValidatedSpec {
    type Target = ProblemSpec;
    fn deref(&self) -> &ProblemSpec {
        &self.spec
    }
}

/// Weighted critical exponent 2*(t) = (2N - 2t)/(N - 2).
pub fn critical_exponent(n: u32, t: f64) -> f64 {
    (2.0 * n as f64 - 2.0 * t) / (n as f64 - 2.0)
}

/// Check the exponent windows for the requested mode and return the spec
/// annotated with the verified window. Every failure names its condition.
pub fn validate_exponents(spec: &ProblemSpec, mode: ValidationMode) -> Result<ValidatedSpec> {
    spec.check_basic()?;
    let n = spec.n as f64;
    let p_lo = (n - spec.a_inf) / (n - 2.0);
    let p_hi = (n - spec.a0) / (n - 2.0);
    let fail = |condition: String| Err(Error::ValidationFailed { condition });
    // mode-specific structural conditions come first so a broken mountain
    // run is named by its own precondition, not the generic window
    if mode == ValidationMode::MountainPassRadial {
        if spec.a0 >= 2.0 {
            return fail(format!("a0 < 2, got a0 = {}", spec.a0));
        }
        let a_inf_floor = f64::max(0.0, 1.0 + spec.a0 / 2.0);
        if spec.a_inf <= a_inf_floor {
            return fail(format!(
                "a_inf > max(0, 1 + a0/2) = {a_inf_floor}, got a_inf = {}",
                spec.a_inf
            ));
        }
        if spec.p <= 1.0 {
            return fail(format!("p > 1, got p = {}", spec.p));
        }
    }
    if !(spec.p > p_lo && spec.p < p_hi) {
        return fail(format!(
            "p in ((N-a_inf)/(N-2), (N-a0)/(N-2)) = ({p_lo}, {p_hi}), got p = {}",
            spec.p
        ));
    }
    if mode == ValidationMode::MountainPassRadial {
        let lo = critical_exponent(spec.n, spec.a_inf);
        let hi = critical_exponent(spec.n, spec.a0);
        let q = spec.p + 1.0;
        if !(q > lo && q < hi) {
            return fail(format!(
                "p + 1 in (2*(a_inf), 2*(a0)) = ({lo}, {hi}), got p + 1 = {q}"
            ));
        }
    }
    Ok(ValidatedSpec { spec: spec.clone(), mode, p_window: (p_lo, p_hi) })
}
