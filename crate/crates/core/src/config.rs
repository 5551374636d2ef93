use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Potential, ProblemSpec};
use crate::verify::VerifyTolerances;

/// One JSON document drives every subcommand; every field has a default and
/// unknown keys are rejected so a typo cannot silently fall back.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spec: SpecConfig,
    pub grid: GridConfig,
    pub tolerances: ToleranceConfig,
    pub solve: SolveConfig,
    pub kstar: KStarConfig,
    pub stability_sweep: StabilitySweepConfig,
    pub mountain_pass: MountainPassConfig,
    pub verify: VerifyConfig,
    pub sweep: SweepConfig,
    pub inputs: InputConfig,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: SpecConfig::default(),
            grid: GridConfig::default(),
            tolerances: ToleranceConfig::default(),
            solve: SolveConfig::default(),
            kstar: KStarConfig::default(),
            stability_sweep: StabilitySweepConfig::default(),
            mountain_pass: MountainPassConfig::default(),
            verify: VerifyConfig::default(),
            sweep: SweepConfig::default(),
            inputs: InputConfig::default(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecConfig {
    pub n: u32,
    pub p: f64,
    /// Absolute source strength; ignored when `k_fraction_of_kp` is set.
    pub k: f64,
    /// When set, k is resolved as this fraction of the measured threshold.
    pub k_fraction_of_kp: Option<f64>,
    pub a0: f64,
    pub a_inf: f64,
    pub c1: f64,
    pub potential: Potential,
}

impl Default for SpecConfig {
    fn default() -> Self {
        Self {
            n: 3,
            p: 2.0,
            k: 1.0,
            k_fraction_of_kp: None,
            a0: 0.0,
            a_inf: 4.0,
            c1: 1.0,
            potential: Potential::V0,
        }
    }
}

impl SpecConfig {
    pub fn to_problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            n: self.n,
            p: self.p,
            k: self.k,
            a0: self.a0,
            a_inf: self.a_inf,
            c1: self.c1,
            potential: self.potential.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { r_min: 1e-6, r_max: 1e6, nodes: 4096 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Scaled sup-norm delta declaring the iteration converged.
    pub iteration: f64,
    /// Gradient norm target of the mountain-pass search.
    pub grad: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { iteration: 1e-10, grad: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { max_iter: 500 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KStarConfig {
    /// Starting strength for the doubling scan; defaults to the measured kp
    /// when p > 1, else to the spec's k.
    pub k_seed: Option<f64>,
    pub rel_tol: f64,
    pub probe_max_iter: usize,
    /// The scan gives up (open-above) past cap_factor times the seed.
    pub cap_factor: f64,
}

impl Default for KStarConfig {
    fn default() -> Self {
        Self { k_seed: None, rel_tol: 0.01, probe_max_iter: 500, cap_factor: 1e6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySweepConfig {
    pub points: usize,
    /// Sweep covers [k_lo_fraction, k_hi_fraction] times the threshold kp.
    pub k_lo_fraction: f64,
    pub k_hi_fraction: f64,
}

impl Default for StabilitySweepConfig {
    fn default() -> Self {
        Self { points: 10, k_lo_fraction: 0.1, k_hi_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountainPassConfig {
    pub path_size: usize,
    pub max_deform: usize,
    pub switch_tol: f64,
    pub seed: u64,
    pub ring_samples: usize,
}

impl Default for MountainPassConfig {
    fn default() -> Self {
        Self { path_size: 41, max_deform: 400, switch_tol: 5e-2, seed: 42, ring_samples: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub residual_sup: f64,
    pub weak_factor: f64,
    pub singular_rel: f64,
    pub annulus: (f64, f64),
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let t = VerifyTolerances::default();
        Self {
            residual_sup: t.residual_sup,
            weak_factor: t.weak_factor,
            singular_rel: t.singular_rel,
            annulus: t.annulus,
        }
    }
}

impl VerifyConfig {
    pub fn to_tolerances(&self) -> VerifyTolerances {
        VerifyTolerances {
            residual_sup: self.residual_sup,
            weak_factor: self.weak_factor,
            singular_rel: self.singular_rel,
            annulus: self.annulus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    P,
    C1,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Run the mountain-pass search per row (adds a level_c column).
    pub mountain_pass: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { axis: SweepAxis::K, values: Vec::new(), mountain_pass: false }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Solution CSV consumed by `stability`, `mountain-pass` and `verify`;
    /// when absent those subcommands solve the minimal problem themselves.
    pub solution_csv: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.grid.nodes, 4096);
        assert_eq!(cfg.spec.n, 3);
        assert_eq!(cfg.solve.max_iter, 500);
        assert_eq!(cfg.tolerances.iteration, 1e-10);
        assert_eq!(cfg.output_dir, "out");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"grid": {"nodes": 128, "typo": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"unknown_section": {}}"#).is_err());
    }

    #[test]
    fn partial_overrides_merge_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"spec": {"p": 0.5, "k_fraction_of_kp": 0.5}, "grid": {"nodes": 1024}}"#,
        )
        .unwrap();
        assert_eq!(cfg.spec.p, 0.5);
        assert_eq!(cfg.spec.k_fraction_of_kp, Some(0.5));
        assert_eq!(cfg.grid.nodes, 1024);
        assert_eq!(cfg.grid.r_min, 1e-6);
    }

    #[test]
    fn potential_variants_parse() {
        let c1 = RunConfig::from_json(r#"{"spec": {"potential": "v0"}}"#).unwrap();
        assert_eq!(c1.spec.potential, Potential::V0);
        let c2 = RunConfig::from_json(
            r#"{"spec": {"potential": {"scaled_v0": {"factor": 0.0}}}}"#,
        )
        .unwrap();
        assert_eq!(c2.spec.potential, Potential::ScaledV0 { factor: 0.0 });
        let c3 = RunConfig::from_json(
            r#"{"spec": {"potential": {"tabulated": {"points": [[0.1, 1.0], [10.0, 0.001]]}}}}"#,
        )
        .unwrap();
        assert!(matches!(c3.spec.potential, Potential::Tabulated { .. }));
    }
}
