use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Storage convention for a sampled radial function.
///
/// `Scaled` holds w(r) = u(r) * r^(N-2). Solution fields are kept scaled:
/// near the origin u blows up like the point-source kernel while w stays
/// bounded with a finite limit, so sup-norms and interpolation behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Raw,
    Scaled,
}

impl Representation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Scaled => "scaled",
        }
    }
}

/// A radial function sampled on a shared grid.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    repr: Representation,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, repr: Representation) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), actual: values.len() });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { index: i, radius: grid.nodes()[i] });
            }
        }
        Ok(Self { grid, values, repr })
    }

    pub fn zeros(grid: Arc<RadialGrid>, repr: Representation) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], repr }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn scale_exponent(&self) -> i32 {
        self.grid.dim() as i32 - 2
    }

    /// Raw samples u(r), converting if stored scaled.
    pub fn to_raw(&self) -> Vec<f64> {
        match self.repr {
            Representation::Raw => self.values.clone(),
            Representation::Scaled => {
                let e = self.scale_exponent();
                self.grid
                    .nodes()
                    .iter()
                    .zip(&self.values)
                    .map(|(r, w)| w / r.powi(e))
                    .collect()
            }
        }
    }

    /// Scaled samples w(r) = u(r) r^(N-2), converting if stored raw.
    pub fn to_scaled(&self) -> Vec<f64> {
        match self.repr {
            Representation::Scaled => self.values.clone(),
            Representation::Raw => {
                let e = self.scale_exponent();
                self.grid
                    .nodes()
                    .iter()
                    .zip(&self.values)
                    .map(|(r, u)| u * r.powi(e))
                    .collect()
            }
        }
    }

    pub fn into_representation(self, repr: Representation) -> Self {
        if self.repr == repr {
            return self;
        }
        let values = match repr {
            Representation::Raw => self.to_raw(),
            Representation::Scaled => self.to_scaled(),
        };
        Self { grid: self.grid, values, repr }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonnegative(&self, slack: f64) -> bool {
        let floor = -slack * self.max_value().abs().max(1.0);
        self.values.iter().all(|v| *v >= floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(1e-4, 1e4, 256, 3).unwrap())
    }

    #[test]
    fn roundtrip_is_exact_to_machine_precision() {
        let g = grid();
        let vals: Vec<f64> = g.nodes().iter().map(|r| (1.0 + r).recip()).collect();
        let f = RadialField::new(g.clone(), vals.clone(), Representation::Raw).unwrap();
        let back = f
            .clone()
            .into_representation(Representation::Scaled)
            .into_representation(Representation::Raw);
        for (a, b) in vals.iter().zip(back.values()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(1e-300));
        }
    }

    #[test]
    fn rejects_non_finite_and_length_mismatch() {
        let g = grid();
        let mut vals = vec![1.0; g.len()];
        vals[3] = f64::NAN;
        assert!(RadialField::new(g.clone(), vals, Representation::Raw).is_err());
        assert!(RadialField::new(g, vec![1.0; 7], Representation::Raw).is_err());
    }
}
