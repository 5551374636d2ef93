use crate::error::{Error, Result};

/// Log-spaced radial mesh on [r_min, r_max] with quadrature weights for
/// integrals of the form `int f(r) r^(N-1) dr`.
///
/// Nodes are geometric: uniform in x = ln r. Weights treat the integrand as
/// piecewise linear in x and fold the exact r^(N-1) Jacobian into each
/// element, so pure powers of r at the element scale integrate exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: u32,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_step: f64,
}

/// Per-element integrals of the two linear hat functions against e^(a x):
/// `i0 = int_0^h (1 - s/h) e^(a s) ds`, `i1 = int_0^h (s/h) e^(a s) ds`.
pub(crate) fn hat_coeffs(a: f64, h: f64) -> (f64, f64) {
    if a.abs() * h < 1e-12 {
        return (h / 2.0, h / 2.0);
    }
    let e = f64::exp_m1(a * h);
    let i0 = e / (a * a * h) - 1.0 / a;
    let i1 = (e + 1.0) / a - e / (a * a * h);
    (i0, i1)
}

impl RadialGrid {
    /// Defaults from the problem's natural scales: both endpoints carry
    /// power-law asymptotics, so decades are resolved evenly.
    pub const DEFAULT_R_MIN: f64 = 1e-6;
    pub const DEFAULT_R_MAX: f64 = 1e6;
    pub const DEFAULT_NODES: usize = 4096;

    pub fn new(r_min: f64, r_max: f64, node_count: usize, dim: u32) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(r_min.is_finite() && r_min > 0.0) {
            return Err(Error::InvalidGrid(format!("r_min must be positive, got {r_min}")));
        }
        if !(r_max.is_finite() && r_max > r_min) {
            return Err(Error::InvalidGrid(format!(
                "r_max must exceed r_min, got r_min={r_min}, r_max={r_max}"
            )));
        }
        if node_count < 16 {
            return Err(Error::InvalidGrid(format!(
                "need at least 16 nodes, got {node_count}"
            )));
        }
        let m = node_count;
        let x0 = r_min.ln();
        let x1 = r_max.ln();
        let h = (x1 - x0) / (m - 1) as f64;
        let mut nodes = Vec::with_capacity(m);
        for i in 0..m {
            nodes.push((x0 + h * i as f64).exp());
        }
        // pin the endpoints so the stated interval is exact
        nodes[0] = r_min;
        nodes[m - 1] = r_max;
        for i in 1..m {
            if nodes[i] <= nodes[i - 1] {
                return Err(Error::InvalidGrid("nodes are not strictly increasing".into()));
            }
        }
        let n = dim as f64;
        let (i0, i1) = hat_coeffs(n, h);
        let mut weights = vec![0.0; m];
        for j in 0..m - 1 {
            let rn = nodes[j].powi(dim as i32);
            weights[j] += rn * i0;
            weights[j + 1] += rn * i1;
        }
        Ok(Self { dim, nodes, weights, log_step: h })
    }

    pub fn default_for_dim(dim: u32) -> Result<Self> {
        Self::new(Self::DEFAULT_R_MIN, Self::DEFAULT_R_MAX, Self::DEFAULT_NODES, dim)
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    /// Short identifier used in reports to tie results to the mesh.
    pub fn id(&self) -> String {
        format!("log[{:e},{:e}]x{}d{}", self.r_min(), self.r_max(), self.len(), self.dim)
    }

    /// Quadrature of `int f(r) r^(N-1) dr` over [r_min, r_max].
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), actual: values.len() });
        }
        Ok(self.weights.iter().zip(values).map(|(w, f)| w * f).sum())
    }
}
