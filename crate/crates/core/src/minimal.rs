use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::barrier::{estimate_c2, supersolution_t, BarrierConstants};
use crate::error::{Error, Result};
use crate::field::{RadialField, Representation};
use crate::green::{fundamental_solution, green_apply_values};
use crate::grid::RadialGrid;
use crate::problem::{ProblemSpec, ValidatedSpec, ValidationMode};

/// Scaled sup-norm beyond which an unbarriered run is declared blown up.
pub const BLOWUP_CAP: f64 = 1e12;
/// Relative slack on barrier and monotonicity comparisons; covers quadrature
/// rounding without masking genuine violations.
const COMPARISON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    Diverged,
    MaxIter,
}

/// Trace of one monotone-iteration run.
#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub verdict: Verdict,
    pub steps: usize,
    /// Sup-norm of scaled differences per step.
    pub deltas: Vec<f64>,
    /// True when every step stayed below the supersolution (when one exists).
    pub barrier_ok: bool,
    /// True when every step increased nodewise (up to rounding slack).
    pub monotone_ok: bool,
    pub barrier_available: bool,
    pub constants: Option<BarrierConstants>,
    #[serde(skip)]
    pub solution: Option<RadialField>,
    #[serde(skip)]
    pub barrier: Option<RadialField>,
}

impl IterationReport {
    pub fn converged(&self) -> bool {
        self.verdict == Verdict::Converged
    }
}

/// Run the monotone source iteration from the point-source seed:
/// v_0 = k G[delta], v_n = G[V v_(n-1)^p] + v_0, in scaled storage.
///
/// Convergence: scaled sup-norm delta <= tol. Divergence: the barrier
/// comparison fails (when a supersolution exists), or the scaled sup-norm
/// passes the blow-up cap (when none does). Hitting max_iter is a verdict,
/// not an error.
pub fn iterate_minimal(
    vspec: &ValidatedSpec,
    grid: &Arc<RadialGrid>,
    max_iter: usize,
    tol: f64,
) -> Result<IterationReport> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tol must be positive, got {tol}")));
    }
    let spec = &vspec.spec;
    let v_pot = spec.potential_on(grid)?;
    let seed = fundamental_solution(spec, grid)?;
    let w0 = seed.values().to_vec();

    // for p = 1 this already refuses when the measured c2 reaches 1
    let constants = estimate_c2(spec, grid)?;
    let barrier_scale = match supersolution_t(spec, constants.c2) {
        Ok(t) => Some(t),
        Err(Error::NoBarrier(_)) => None,
        Err(e) => return Err(e),
    };

    let nodes = grid.nodes();
    let e = spec.n as i32 - 2;
    let apply_step = |w: &[f64]| -> Result<Vec<f64>> {
        let mut f = Vec::with_capacity(w.len());
        for ((&wi, &r), &v) in w.iter().zip(nodes).zip(&v_pot) {
            let u = wi / r.powi(e);
            f.push(v * u.powf(spec.p));
        }
        let g = green_apply_values(&f, grid, spec.n)?;
        Ok(g.values().iter().zip(&w0).map(|(a, b)| a + b).collect())
    };

    // w_t = t (v1 - v0) + v0 with the actual potential
    let barrier: Option<Vec<f64>> = match barrier_scale {
        Some(t) => {
            let w1 = apply_step(&w0)?;
            Some(w1.iter().zip(&w0).map(|(a, b)| t * (a - b) + b).collect())
        }
        None => None,
    };

    let mut w = w0.clone();
    let mut deltas = Vec::new();
    let mut monotone_ok = true;
    let mut barrier_ok = true;
    let mut verdict = Verdict::MaxIter;
    let mut steps = max_iter;

    for n in 1..=max_iter {
        let w_new = apply_step(&w)?;
        let mut delta = 0.0f64;
        let mut min_diff = 0.0f64;
        let mut sup = 0.0f64;
        for (a, b) in w_new.iter().zip(&w) {
            let d = a - b;
            delta = delta.max(d.abs());
            min_diff = min_diff.min(d);
            sup = sup.max(a.abs());
        }
        let scale = sup.max(1.0);
        if min_diff < -COMPARISON_SLACK * scale {
            monotone_ok = false;
        }
        deltas.push(delta);
        w = w_new;

        if let Some(bar) = &barrier {
            let violated = w
                .iter()
                .zip(bar)
                .any(|(wi, bi)| *wi > bi * (1.0 + COMPARISON_SLACK) + 1e-300);
            if violated {
                barrier_ok = false;
                verdict = Verdict::Diverged;
                steps = n;
                break;
            }
        } else if sup > BLOWUP_CAP {
            verdict = Verdict::Diverged;
            steps = n;
            break;
        }
        if delta <= tol {
            verdict = Verdict::Converged;
            steps = n;
            break;
        }
    }

    let solution = if verdict == Verdict::Converged {
        Some(RadialField::new(grid.clone(), w, Representation::Scaled)?)
    } else {
        None
    };
    let barrier_field = match barrier {
        Some(b) => Some(RadialField::new(grid.clone(), b, Representation::Scaled)?),
        None => None,
    };
    Ok(IterationReport {
        verdict,
        steps,
        deltas,
        barrier_ok,
        monotone_ok,
        barrier_available: barrier_scale.is_some(),
        constants: Some(constants),
        solution,
        barrier: barrier_field,
    })
}

/// Result of probing the existence threshold.
#[derive(Debug, Clone, Serialize)]
pub struct KStarEstimate {
    /// Largest source strength observed convergent.
    pub k_lo: f64,
    /// Smallest source strength observed divergent; None when every probe up
    /// to the cap converged (threshold open above).
    pub k_hi: Option<f64>,
    pub open_above: bool,
    pub iterations_per_probe: usize,
    pub grid_id: String,
    /// kp from the measured barrier constants, for the k_lo >= kp check.
    pub kp: f64,
    pub k_lo_at_least_kp: bool,
    /// Probes that hit the iteration budget are counted divergent and flagged.
    pub max_iter_probes: usize,
}

/// Probe k upward from the seed by doubling until divergence, then bisect
/// the bracket down to the requested relative width.
///
/// For p <= 1 every probe converges; the scan stops at cap_factor times the
/// seed and reports the threshold as open above.
pub fn bisect_kstar(
    vspec: &ValidatedSpec,
    grid: &Arc<RadialGrid>,
    k_seed: f64,
    rel_tol: f64,
    probe_max_iter: usize,
    cap_factor: f64,
) -> Result<KStarEstimate> {
    if !(k_seed.is_finite() && k_seed > 0.0) {
        return Err(Error::Domain(format!("k_seed must be positive, got {k_seed}")));
    }
    if !(rel_tol.is_finite() && rel_tol > 0.0) {
        return Err(Error::Domain(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let constants = estimate_c2(&vspec.spec, grid)?;
    let mut max_iter_probes = 0usize;
    let mut probe = |k: f64| -> Result<bool> {
        let spec_k = vspec.spec.clone().with_k(k);
        let v = ValidatedSpec { spec: spec_k, mode: vspec.mode, p_window: vspec.p_window };
        let rep = iterate_minimal(&v, grid, probe_max_iter, 1e-10)?;
        if rep.verdict == Verdict::MaxIter {
            max_iter_probes += 1;
        }
        Ok(rep.verdict == Verdict::Converged)
    };

    // the seed itself must converge to anchor the bracket
    let mut k_lo = k_seed;
    if !probe(k_lo)? {
        let mut shrunk = k_seed;
        let mut found = false;
        for _ in 0..60 {
            shrunk /= 2.0;
            if probe(shrunk)? {
                k_lo = shrunk;
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::Domain(
                "no convergent probe found below the seed; seed far above threshold".into(),
            ));
        }
    }

    let cap = k_seed * cap_factor;
    let mut k_hi = None;
    let mut k = k_lo;
    while k < cap {
        let next = (2.0 * k).min(cap);
        if probe(next)? {
            k_lo = next;
        } else {
            k_hi = Some(next);
            break;
        }
        if next >= cap {
            break;
        }
        k = next;
    }

    if let Some(mut hi) = k_hi {
        while (hi - k_lo) / k_lo > rel_tol {
            let mid = 0.5 * (k_lo + hi);
            if probe(mid)? {
                k_lo = mid;
            } else {
                hi = mid;
            }
        }
        k_hi = Some(hi);
    }

    Ok(KStarEstimate {
        k_lo,
        k_hi,
        open_above: k_hi.is_none(),
        iterations_per_probe: probe_max_iter,
        grid_id: grid.id(),
        kp: constants.kp,
        k_lo_at_least_kp: k_lo >= constants.kp * (1.0 - 1e-12),
        max_iter_probes,
    })
}

/// Nodewise comparison of minimal solutions for ordered potentials.
#[derive(Debug, Clone, Serialize)]
pub struct MonotoneComparison {
    pub max_violation: f64,
    pub ordered: bool,
    pub steps_1: usize,
    pub steps_2: usize,
}

/// Check that V2 <= V1 implies u_(k,V2) <= u_(k,V1) nodewise up to
/// quadrature slack. The potential ordering is a precondition and is
/// verified first.
pub fn check_monotone_in_v(
    spec1: &ProblemSpec,
    spec2: &ProblemSpec,
    grid: &Arc<RadialGrid>,
    max_iter: usize,
    tol: f64,
) -> Result<MonotoneComparison> {
    let v1 = spec1.potential_on(grid)?;
    let v2 = spec2.potential_on(grid)?;
    for ((&a, &b), &r) in v1.iter().zip(&v2).zip(grid.nodes()) {
        if b > a * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::PotentialOrdering { radius: r, v1: a, v2: b });
        }
    }
    let run = |spec: &ProblemSpec| -> Result<IterationReport> {
        let v = crate::problem::validate_exponents(spec, ValidationMode::Minimal)?;
        iterate_minimal(&v, grid, max_iter, tol)
    };
    let rep1 = run(spec1)?;
    let rep2 = run(spec2)?;
    let (Some(u1), Some(u2)) = (&rep1.solution, &rep2.solution) else {
        return Err(Error::Domain("both runs must converge for the comparison".into()));
    };
    let w1 = u1.values();
    let w2 = u2.values();
    let scale = w1.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut max_violation = 0.0f64;
    for (a, b) in w2.iter().zip(w1) {
        max_violation = max_violation.max((a - b) / scale);
    }
    Ok(MonotoneComparison {
        max_violation,
        ordered: max_violation <= 1e-8,
        steps_1: rep1.steps,
        steps_2: rep2.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{newton_constant, validate_exponents, Potential};

    fn grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::default_for_dim(3).unwrap())
    }

    fn vspec(p: f64, k: f64) -> ValidatedSpec {
        let spec = ProblemSpec::new(3, p, k, 0.0, 4.0, 1.0);
        validate_exponents(&spec, ValidationMode::Minimal).unwrap()
    }

    const KP_DEFAULT: f64 = 2.0 * std::f64::consts::SQRT_2;

    #[test]
    fn zero_potential_converges_in_one_step_exactly() {
        let spec = ProblemSpec::new(3, 2.0, 1.0, 0.0, 4.0, 1.0)
            .with_potential(Potential::ScaledV0 { factor: 0.0 });
        let v = validate_exponents(&spec, ValidationMode::Minimal).unwrap();
        let g = grid();
        let rep = iterate_minimal(&v, &g, 100, 1e-10).unwrap();
        assert_eq!(rep.verdict, Verdict::Converged);
        assert_eq!(rep.steps, 1);
        let c = newton_constant(3).unwrap();
        let sol = rep.solution.unwrap();
        assert!(sol.values().iter().all(|w| (*w - c).abs() == 0.0));
    }

    #[test]
    fn below_threshold_converges_under_barrier() {
        let g = grid();
        // k up to the measured threshold sits under the barrier
        let kp = crate::barrier::estimate_c2(&vspec(2.0, 1.0).spec, &g).unwrap().kp;
        for frac in [0.25, 1.0] {
            let rep = iterate_minimal(&vspec(2.0, frac * kp), &g, 500, 1e-10).unwrap();
            assert_eq!(rep.verdict, Verdict::Converged, "frac {frac}");
            assert!(rep.barrier_ok);
            assert!(rep.monotone_ok);
            assert!(rep.barrier_available);
            assert!(rep.steps <= 60);
            // every converged solution dominates the seed
            let sol = rep.solution.unwrap();
            let c = newton_constant(3).unwrap();
            let k = frac * kp;
            assert!(sol.values().iter().all(|w| *w >= c * k * (1.0 - 1e-12)));
            // and the supersolution itself sits under (c2 tp k^p + k) G[delta]
            let bc = rep.constants.as_ref().unwrap();
            let cap = (bc.c2 * bc.tp * k.powi(2) + k) * c;
            let barrier = rep.barrier.as_ref().unwrap();
            assert!(barrier.values().iter().all(|w| *w <= cap * (1.0 + 1e-9)));
        }
    }

    #[test]
    fn far_above_threshold_diverges() {
        let g = grid();
        let rep = iterate_minimal(&vspec(2.0, 100.0 * KP_DEFAULT), &g, 500, 1e-10).unwrap();
        assert_eq!(rep.verdict, Verdict::Diverged);
    }

    #[test]
    fn exhausted_budget_is_a_verdict_not_an_error() {
        let g = grid();
        let rep = iterate_minimal(&vspec(2.0, 0.5 * KP_DEFAULT), &g, 3, 1e-10).unwrap();
        assert_eq!(rep.verdict, Verdict::MaxIter);
        assert_eq!(rep.steps, 3);
        assert!(rep.solution.is_none());
    }

    #[test]
    fn kstar_bracket_for_p2() {
        let g = grid();
        let est = bisect_kstar(&vspec(2.0, KP_DEFAULT), &g, KP_DEFAULT, 0.01, 500, 1e6).unwrap();
        assert!(!est.open_above);
        let hi = est.k_hi.unwrap();
        assert!(est.k_lo < hi);
        assert!((hi - est.k_lo) / est.k_lo <= 0.01 * (1.0 + 1e-12));
        assert!(est.k_lo_at_least_kp, "k_lo {} < kp {}", est.k_lo, est.kp);
        // measured bracket sits in (kp, 2 kp) on the default grid
        assert!(est.k_lo > est.kp && hi < 2.0 * est.kp);
    }

    #[test]
    fn kstar_open_above_for_small_p() {
        let g = grid();
        let est = bisect_kstar(&vspec(0.5, 1.0), &g, 1.0, 0.01, 400, 1e4).unwrap();
        assert!(est.open_above);
        assert!(est.k_hi.is_none());
        assert!(est.k_lo >= 1e4 * (1.0 - 1e-12));
    }

    #[test]
    fn bisection_contract_tightens_bracket() {
        let g = grid();
        let wide = bisect_kstar(&vspec(2.0, KP_DEFAULT), &g, KP_DEFAULT, 0.02, 300, 1e6).unwrap();
        let tight = bisect_kstar(&vspec(2.0, KP_DEFAULT), &g, KP_DEFAULT, 0.002, 300, 1e6).unwrap();
        let w_wide = wide.k_hi.unwrap() - wide.k_lo;
        let w_tight = tight.k_hi.unwrap() - tight.k_lo;
        assert!(w_wide >= 5.0 * w_tight, "wide {w_wide} tight {w_tight}");
    }

    #[test]
    fn monotone_in_potential() {
        let g = grid();
        let full = ProblemSpec::new(3, 2.0, 1.0, 0.0, 4.0, 1.0);
        let half = full.clone().with_potential(Potential::ScaledV0 { factor: 0.5 });
        let zero = full.clone().with_potential(Potential::ScaledV0 { factor: 0.0 });

        let cmp_same = check_monotone_in_v(&full, &full, &g, 500, 1e-10).unwrap();
        assert!(cmp_same.ordered);
        assert!(cmp_same.max_violation.abs() <= 1e-12);

        let cmp_half = check_monotone_in_v(&full, &half, &g, 500, 1e-10).unwrap();
        assert!(cmp_half.ordered);

        let cmp_zero = check_monotone_in_v(&full, &zero, &g, 500, 1e-10).unwrap();
        assert!(cmp_zero.ordered);

        // ordering precondition violated
        assert!(matches!(
            check_monotone_in_v(&half, &full, &g, 500, 1e-10),
            Err(Error::PotentialOrdering { .. })
        ));
    }

    #[test]
    fn k_monotone_and_scaling_supersolution() {
        let g = grid();
        let k_small = 0.25 * KP_DEFAULT;
        let k_big = 0.5 * KP_DEFAULT;
        let u_small = iterate_minimal(&vspec(2.0, k_small), &g, 500, 1e-10)
            .unwrap()
            .solution
            .unwrap();
        let u_big =
            iterate_minimal(&vspec(2.0, k_big), &g, 500, 1e-10).unwrap().solution.unwrap();
        let scale = u_big.max_value();
        // k -> u increasing
        assert!(u_small
            .values()
            .iter()
            .zip(u_big.values())
            .all(|(a, b)| a <= &(b + 1e-9 * scale)));
        // l0 u_(k') dominates u_k with l0 = (k/k')^(1/p)
        let l0 = (k_small / k_big).powf(1.0 / 2.0);
        assert!(u_big
            .values()
            .iter()
            .zip(u_small.values())
            .all(|(b, a)| l0 * b >= a - 1e-9 * scale));
    }

    #[test]
    fn p_equal_one_requires_small_c2() {
        // a_inf = 2.5 puts p = 1 inside the window; the measured constant
        // scales linearly in c1, so c1 = 1 already exceeds the c2 < 1 bound
        let g = grid();
        let big = ProblemSpec::new(3, 1.0, 1.0, 0.0, 2.5, 1.0);
        let v = validate_exponents(&big, ValidationMode::Minimal).unwrap();
        assert!(matches!(iterate_minimal(&v, &g, 100, 1e-10), Err(Error::NoBarrier(_))));
        // small c1 admits the barrier and converges for every k
        let small = ProblemSpec::new(3, 1.0, 5.0, 0.0, 2.5, 0.2);
        let c2_small = crate::barrier::estimate_c2(&small, &g).unwrap().c2;
        assert!(c2_small < 1.0, "test premise: c2 = {c2_small}");
        let v2 = validate_exponents(&small, ValidationMode::Minimal).unwrap();
        let rep = iterate_minimal(&v2, &g, 500, 1e-10).unwrap();
        assert_eq!(rep.verdict, Verdict::Converged);
        assert!(rep.barrier_ok);
    }
}
