//! Contraction factor, disturbance estimation, and the ultimate bound on
//! the local Wasserstein distance.
//!
//! The closed loop contracts the weighted horizon error by `I - P` each
//! step while barycenter jitter and reference drift pump energy in. With
//! `lambda = ||I - P||_2 < 1` the error settles under
//! `(lambda zeta + 1/2 ||P|| delta) / (1 - lambda)` and the Wasserstein
//! distance under the root of that squared plus the local variance ceiling.
//! The bound inputs are estimated empirically from a recorded run.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrix is not symmetric: max asymmetry {asymmetry}")]
    NotSymmetric { asymmetry: f64 },
    #[error("no contraction: lambda = {lambda} >= 1, the ultimate bound is undefined")]
    NoContraction { lambda: f64 },
}

/// Spectral norms `(||I - P||_2, ||P||_2)` of a symmetric projection-like
/// matrix, via its eigendecomposition.
pub fn contraction_factor(p: &DMatrix<f64>) -> Result<(f64, f64), AnalysisError> {
    let asymmetry = (p - p.transpose()).amax();
    if asymmetry > 1e-9 * (1.0 + p.amax()) {
        return Err(AnalysisError::NotSymmetric { asymmetry });
    }
    let symmetrized = (p + p.transpose()) * 0.5;
    let eigs = symmetrized.symmetric_eigen().eigenvalues;
    let p_norm = eigs.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));
    let lambda = eigs.iter().fold(0.0f64, |acc, &e| acc.max((1.0 - e).abs()));
    Ok((lambda, p_norm))
}

/// Stacked-norm factor of a drift ramp: block `h` of the horizon reference
/// carries `(h+1) * dqbar`, so the stack norm is `sqrt(sum (h+1)^2) * ||dqbar||`.
pub fn ramp_norm_factor(horizon: usize) -> f64 {
    (1..=horizon).map(|h| (h * h) as f64).sum::<f64>().sqrt()
}

/// Empirical disturbance bounds from realized per-step barycenters and
/// predicted drifts of one agent.
///
/// The per-step barycenter surprise is
/// `h(k) = (qbar(k+1) - qbar(k)) - dqbar(k)`; it vanishes for a uniform
/// field with a frozen assignment and captures re-selection jitter
/// otherwise. `zeta` bounds the surprise repeated across the horizon
/// (`sqrt(H) * max ||h||`), `delta` bounds the drift ramp the controller
/// injects (`ramp_norm_factor(H) * max ||dqbar||`). Both assume the
/// identity horizon weighting produced by per-step-normalized transport
/// weights.
pub fn estimate_disturbances(
    qbars: &[Vector2<f64>],
    drifts: &[Vector2<f64>],
    horizon: usize,
) -> (f64, f64) {
    assert_eq!(qbars.len(), drifts.len());
    assert!(qbars.len() >= 2, "need at least two recorded steps");
    let max_surprise = qbars
        .windows(2)
        .zip(drifts)
        .map(|(w, d)| ((w[1] - w[0]) - d).norm())
        .fold(0.0f64, f64::max);
    let max_drift = drifts.iter().map(|d| d.norm()).fold(0.0f64, f64::max);
    (
        (horizon as f64).sqrt() * max_surprise,
        ramp_norm_factor(horizon) * max_drift,
    )
}

/// Inputs of the ultimate bound; all estimated from a run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundInputs {
    pub lambda: f64,
    pub p_norm: f64,
    /// Supremum of the stacked barycenter surprise, meters.
    pub zeta: f64,
    /// Supremum of the stacked predicted drift, meters.
    pub delta: f64,
    /// Supremum of the local weighted variance, square meters.
    pub c_bar: f64,
}

/// Ultimate bound on the local Wasserstein distance,
/// `sqrt(((lambda zeta + 1/2 p_norm delta) / (1 - lambda))^2 + c_bar)`.
/// Defined only under contraction (`lambda < 1`).
pub fn ultimate_bound(inputs: &BoundInputs) -> Result<f64, AnalysisError> {
    assert!(
        inputs.zeta >= 0.0 && inputs.delta >= 0.0 && inputs.c_bar >= 0.0 && inputs.lambda >= 0.0,
        "bound inputs must be non-negative"
    );
    if inputs.lambda >= 1.0 {
        return Err(AnalysisError::NoContraction {
            lambda: inputs.lambda,
        });
    }
    let steady = (inputs.lambda * inputs.zeta + 0.5 * inputs.p_norm * inputs.delta)
        / (1.0 - inputs.lambda);
    Ok((steady * steady + inputs.c_bar).sqrt())
}

/// Outcome of checking a recorded Wasserstein series against a bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    /// First step at which the series is at or below the bound.
    pub entry_step: Option<usize>,
    /// First post-settle step above the bound, if any.
    pub first_violation: Option<usize>,
    /// Largest post-settle overshoot above the bound (0 when passing).
    pub max_excess: f64,
}

/// Asserts `w(k) <= bound` for every step after the settle point
/// (`settle_fraction` of the series is treated as transient).
pub fn verify_bound(w_series: &[f64], bound: f64, settle_fraction: f64) -> BoundCheck {
    assert!(
        settle_fraction > 0.0 && settle_fraction < 1.0,
        "settle fraction must lie in (0, 1)"
    );
    let settle = (w_series.len() as f64 * settle_fraction).floor() as usize;
    let entry_step = w_series.iter().position(|&w| w <= bound);
    let mut first_violation = None;
    let mut max_excess = 0.0f64;
    for (k, &w) in w_series.iter().enumerate().skip(settle) {
        if w > bound {
            first_violation.get_or_insert(k);
            max_excess = max_excess.max(w - bound);
        }
    }
    BoundCheck {
        pass: first_violation.is_none(),
        entry_step,
        first_violation,
        max_excess,
    }
}

/// Fraction of a run discarded as transient before the bound is enforced.
pub const DEFAULT_SETTLE_FRACTION: f64 = 0.2;

/// Per-event residuals of the recursive error model
/// `e(t+1) = (I - P)(e(t) - Omega h(t)) + 1/2 P Omega d(t)`
/// against recorded errors. Meaningful on frozen-assignment segments; steps
/// that switch assignments belong to the surprise term instead.
pub fn recursion_residuals(
    projection: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    errors: &[DVector<f64>],
    surprises: &[DVector<f64>],
    drifts: &[DVector<f64>],
) -> Vec<f64> {
    assert!(errors.len() >= 2);
    assert!(surprises.len() >= errors.len() - 1);
    assert!(drifts.len() >= errors.len() - 1);
    let identity = DMatrix::identity(projection.nrows(), projection.ncols());
    let shrink = &identity - projection;
    errors
        .windows(2)
        .enumerate()
        .map(|(t, pair)| {
            let predicted =
                &shrink * (&pair[0] - omega * &surprises[t]) + 0.5 * projection * omega * &drifts[t];
            (&pair[1] - predicted).norm()
        })
        .collect()
}

/// Final per-agent bound verdict, serialized next to the metrics CSV.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub agent: usize,
    pub controller: String,
    pub lambda: f64,
    pub p_norm: f64,
    pub zeta: f64,
    pub delta: f64,
    pub c_bar: f64,
    /// `None` when `lambda >= 1` (no contraction).
    pub bound: Option<f64>,
    pub pass: bool,
    pub entry_step: Option<usize>,
}
