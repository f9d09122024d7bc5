//! Closed-form horizon controllers over the lifted dynamics.
//!
//! The tracking objective `||Omega (Y - Qbar)||^2 + U' R U` with
//! `Y = theta U + phi x` collapses to an unconstrained quadratic program
//! with Hessian `H = 2((Omega theta)'(Omega theta) + R)`. The nominal
//! controller solves it as-is; the feedforward controller adds
//! `H^-1 (Omega theta)' Omega dQbar`, steering at the predicted barycenter
//! drift. `error_decomposition` evaluates both closed-loop horizon errors
//! from one state, which is what the 50% lag-reduction claim is measured on.

use nalgebra::{DMatrix, DVector, Dyn};
use nalgebra::linalg::Cholesky;
use thiserror::Error;

use crate::analysis::contraction_factor;
use crate::dynamics::LiftedSystem;
use crate::reference::{FlowCtx, VelocityField};
use crate::transport::LocalAssignment;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("QP hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: &'static str },
    #[error("input penalty matrix is not symmetric")]
    PenaltyNotSymmetric,
    #[error("closed-loop error identity residual {residual} exceeds 1e-9")]
    IdentityResidual { residual: f64 },
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

/// Block-diagonal horizon weighting: block `h` is
/// `sqrt(pi_sums[h]) * I_d`. With per-step-normalized transport weights all
/// sums are one and this is the identity.
pub fn build_omega(pi_sums: &[f64], d: usize) -> DMatrix<f64> {
    assert!(pi_sums.iter().all(|&s| s >= 0.0));
    let horizon = pi_sums.len();
    let mut omega = DMatrix::zeros(d * horizon, d * horizon);
    for (h, &sum) in pi_sums.iter().enumerate() {
        let w = sum.sqrt();
        for i in 0..d {
            omega[(h * d + i, h * d + i)] = w;
        }
    }
    omega
}

/// One-step barycenter drift predicted from the reference velocity field
/// under a frozen transport plan:
/// `dqbar = dt * sum(pi_j v(q_j, k)) / sum(pi_j)`.
pub fn predict_drift(
    assignment: &LocalAssignment,
    positions: &[nalgebra::Vector2<f64>],
    field: &VelocityField,
    ctx: &FlowCtx,
    k: usize,
    dt: f64,
) -> nalgebra::Vector2<f64> {
    let mut weighted = nalgebra::Vector2::zeros();
    for (&j, &pi) in assignment.indices.iter().zip(&assignment.pi) {
        weighted += pi * field.velocity_at(positions[j], k, ctx);
    }
    dt * weighted / assignment.pi_sum()
}

/// Reference stacks over the horizon: the barycenter repeated in every
/// block, plus a drift ramp (block `h` carries `(h+1) * dqbar`; all zero in
/// nominal mode).
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonReference {
    pub qbar_stack: DVector<f64>,
    pub drift_stack: DVector<f64>,
}

impl HorizonReference {
    pub fn nominal(qbar: &DVector<f64>, horizon: usize) -> Self {
        Self {
            qbar_stack: tile(qbar, horizon),
            drift_stack: DVector::zeros(qbar.len() * horizon),
        }
    }

    pub fn feedforward(qbar: &DVector<f64>, drift: &DVector<f64>, horizon: usize) -> Self {
        assert_eq!(qbar.len(), drift.len());
        Self {
            qbar_stack: tile(qbar, horizon),
            drift_stack: ramp(drift, horizon),
        }
    }
}

fn tile(block: &DVector<f64>, copies: usize) -> DVector<f64> {
    let d = block.len();
    let mut out = DVector::zeros(d * copies);
    for h in 0..copies {
        out.rows_mut(h * d, d).copy_from(block);
    }
    out
}

fn ramp(block: &DVector<f64>, copies: usize) -> DVector<f64> {
    let d = block.len();
    let mut out = DVector::zeros(d * copies);
    for h in 0..copies {
        out.rows_mut(h * d, d).copy_from(&((h + 1) as f64 * block));
    }
    out
}

/// Assembled quadratic program `min 1/2 U' H U + f' U` with its Cholesky
/// factor. The feedforward target enters separately at solve time.
#[derive(Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub omega: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for QpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QpProblem")
            .field("dim", &self.hessian.nrows())
            .finish()
    }
}

/// Builds `H = 2((Omega theta)'(Omega theta) + R)` and
/// `f = 2 (Omega theta)' Omega (phi x - qbar_stack)`, factoring `H` once.
pub fn assemble_qp(
    lifted: &LiftedSystem,
    omega: &DMatrix<f64>,
    x: &DVector<f64>,
    reference: &HorizonReference,
    r_penalty: &DMatrix<f64>,
) -> Result<QpProblem, ControlError> {
    let dh = lifted.theta.nrows();
    let mh = lifted.theta.ncols();
    if omega.nrows() != dh || omega.ncols() != dh {
        return Err(ControlError::DimensionMismatch {
            context: "omega must be (dH)x(dH)",
        });
    }
    if r_penalty.nrows() != mh || r_penalty.ncols() != mh {
        return Err(ControlError::DimensionMismatch {
            context: "input penalty must be (mH)x(mH)",
        });
    }
    if x.len() != lifted.phi.ncols() || reference.qbar_stack.len() != dh {
        return Err(ControlError::DimensionMismatch {
            context: "state or reference stack does not match the lifted system",
        });
    }
    if (r_penalty - r_penalty.transpose()).amax() > 1e-9 * (1.0 + r_penalty.amax()) {
        return Err(ControlError::PenaltyNotSymmetric);
    }

    let weighted_theta = omega * &lifted.theta;
    let hessian = 2.0 * (weighted_theta.transpose() * &weighted_theta + r_penalty);
    let tracking_gap = &lifted.phi * x - &reference.qbar_stack;
    let gradient = 2.0 * weighted_theta.transpose() * omega * tracking_gap;
    let factor =
        Cholesky::new(hessian.clone()).ok_or(ControlError::NotPositiveDefinite)?;
    Ok(QpProblem {
        hessian,
        gradient,
        omega: omega.clone(),
        factor,
    })
}

/// Unique minimizer of the nominal cost, `U* = -H^-1 f`.
pub fn solve_nominal(qp: &QpProblem) -> DVector<f64> {
    qp.factor.solve(&(-&qp.gradient))
}

/// Feedforward-augmented input
/// `U_ff = -H^-1 f + H^-1 (Omega theta)' Omega dQbar`. Collapses to the
/// nominal input for a zero drift stack.
pub fn solve_feedforward(
    qp: &QpProblem,
    lifted: &LiftedSystem,
    drift_stack: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    if drift_stack.len() != lifted.theta.nrows() {
        return Err(ControlError::DimensionMismatch {
            context: "drift stack must be dH long",
        });
    }
    let weighted_theta = &qp.omega * &lifted.theta;
    let rhs = -&qp.gradient + weighted_theta.transpose() * &qp.omega * drift_stack;
    Ok(qp.factor.solve(&rhs))
}

/// Horizon error split of the feedforward closed loop at one state.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// Weighted horizon error left by the feedforward law.
    pub e_w: DVector<f64>,
    /// Total uncompensated error the nominal law would leave.
    pub e0_total: DVector<f64>,
    /// `||e_w|| / ||e0_total||`; `None` when the denominator vanishes.
    pub ratio: Option<f64>,
    /// `||I - P||_2`, the contraction factor.
    pub lambda: f64,
    /// `||P||_2`.
    pub p_norm: f64,
    /// The projection-like matrix `P = 2 Omega theta H^-1 (Omega theta)'`.
    pub projection: DMatrix<f64>,
}

/// Norm threshold below which the error ratio is reported undefined.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Evaluates the closed-loop horizon errors of the feedforward law and the
/// nominal baseline from the same state:
/// `e_w = (I - P) Omega Gamma + 1/2 P Omega dQ`,
/// `E0 = (I - P) Omega Gamma - Omega dQ`, with `Gamma = phi x - qbar_stack`.
/// The identity `e_w = E0 + (I + P/2) Omega dQ` is checked to 1e-9 before
/// returning.
pub fn error_decomposition(
    lifted: &LiftedSystem,
    omega: &DMatrix<f64>,
    x: &DVector<f64>,
    qbar_stack: &DVector<f64>,
    drift_stack: &DVector<f64>,
    r_penalty: &DMatrix<f64>,
) -> Result<ErrorReport, ControlError> {
    let reference = HorizonReference {
        qbar_stack: qbar_stack.clone(),
        drift_stack: drift_stack.clone(),
    };
    let qp = assemble_qp(lifted, omega, x, &reference, r_penalty)?;
    let projection = projection_matrix(lifted, &qp);

    let dh = lifted.theta.nrows();
    let identity = DMatrix::identity(dh, dh);
    let shrink = &identity - &projection;
    let weighted_gap = omega * (&lifted.phi * x - qbar_stack);
    let weighted_drift = omega * drift_stack;

    let e_w = &shrink * &weighted_gap + 0.5 * &projection * &weighted_drift;
    let e0_total = &shrink * &weighted_gap - &weighted_drift;

    let reconstructed = &e0_total + (&identity + 0.5 * &projection) * &weighted_drift;
    let residual = (&e_w - reconstructed).amax();
    if residual > 1e-9 {
        return Err(ControlError::IdentityResidual { residual });
    }

    let e0_norm = e0_total.norm();
    let ratio = (e0_norm >= RATIO_FLOOR).then(|| e_w.norm() / e0_norm);
    let (lambda, p_norm) = contraction_factor(&projection)?;

    Ok(ErrorReport {
        e_w,
        e0_total,
        ratio,
        lambda,
        p_norm,
        projection,
    })
}

/// `P = 2 Omega theta H^-1 (Omega theta)'`; maps weighted reference error to
/// the output correction the QP can actually apply.
pub fn projection_matrix(lifted: &LiftedSystem, qp: &QpProblem) -> DMatrix<f64> {
    let weighted_theta = &qp.omega * &lifted.theta;
    let solved = qp.factor.solve(&weighted_theta.transpose());
    2.0 * weighted_theta * solved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_lifted, LtiModel};
    use crate::transport::LocalAssignment;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_lifted(horizon: usize) -> LiftedSystem {
        let model = LtiModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
        )
        .unwrap();
        build_lifted(&model, horizon).unwrap()
    }

    fn scalar_qp(x: f64, qbar: f64, rho: f64) -> (LiftedSystem, QpProblem) {
        let lifted = scalar_lifted(1);
        let omega = DMatrix::identity(1, 1);
        let reference = HorizonReference::nominal(&DVector::from_element(1, qbar), 1);
        let qp = assemble_qp(
            &lifted,
            &omega,
            &DVector::from_element(1, x),
            &reference,
            &DMatrix::from_element(1, 1, rho),
        )
        .unwrap();
        (lifted, qp)
    }

    #[test]
    fn omega_identity_for_normalized_sums() {
        assert_eq!(build_omega(&[1.0, 1.0], 2), DMatrix::identity(4, 4));
    }

    #[test]
    fn omega_square_roots_the_sums() {
        assert_eq!(build_omega(&[4.0], 1), DMatrix::from_element(1, 1, 2.0));
        let two = build_omega(&[1.0, 0.25], 1);
        assert_eq!(two, DMatrix::from_partial_diagonal(2, 2, &[1.0, 0.5]));
    }

    #[test]
    fn drift_is_weight_independent_under_uniform_field() {
        let field = VelocityField::Constant {
            velocity: Vector2::new(1.0, 0.0),
        };
        let asn = LocalAssignment {
            indices: vec![0, 1],
            pi: vec![0.9, 0.1],
        };
        let positions = vec![Vector2::new(1.0, 2.0), Vector2::new(-4.0, 0.0)];
        let drift = predict_drift(&asn, &positions, &field, &FlowCtx::default(), 0, 0.1);
        assert_relative_eq!(drift.x, 0.1, epsilon = 1e-15);
        assert_relative_eq!(drift.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn drift_averages_per_sample_velocities() {
        // pi = [0.25, 0.75], v(q1) = (1,0), v(q2) = (0,1), dt = 0.5.
        let field = VelocityField::Vortex {
            center: Vector2::zeros(),
            gain: 1.0,
        };
        // Vortex gives (-y, x): put q1 at (0,-1) -> (1,0); q2 at (1,0) -> (0,1).
        let positions = vec![Vector2::new(0.0, -1.0), Vector2::new(1.0, 0.0)];
        let asn = LocalAssignment {
            indices: vec![0, 1],
            pi: vec![0.25, 0.75],
        };
        let drift = predict_drift(&asn, &positions, &field, &FlowCtx::default(), 0, 0.5);
        assert_relative_eq!(drift.x, 0.125, epsilon = 1e-15);
        assert_relative_eq!(drift.y, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn zero_field_collapses_feedforward_to_nominal() {
        let field = VelocityField::Constant {
            velocity: Vector2::zeros(),
        };
        let asn = LocalAssignment {
            indices: vec![0],
            pi: vec![1.0],
        };
        let positions = vec![Vector2::new(3.0, 3.0)];
        let drift = predict_drift(&asn, &positions, &field, &FlowCtx::default(), 0, 0.1);
        assert_eq!(drift, Vector2::zeros());
    }

    #[test]
    fn scalar_qp_matches_hand_expansion() {
        let (_, qp) = scalar_qp(2.0, 0.5, 0.25);
        assert_relative_eq!(qp.hessian[(0, 0)], 2.0 * (1.0 + 0.25), epsilon = 1e-15);
        assert_relative_eq!(qp.gradient[0], 2.0 * (2.0 - 0.5), epsilon = 1e-15);
    }

    #[test]
    fn zero_tracking_gap_zeroes_the_gradient() {
        let (_, qp) = scalar_qp(0.7, 0.7, 1.0);
        assert_relative_eq!(qp.gradient[0], 0.0, epsilon = 1e-15);
        assert_eq!(solve_nominal(&qp), DVector::from_element(1, 0.0));
    }

    #[test]
    fn zero_omega_leaves_pure_penalty() {
        let lifted = scalar_lifted(1);
        let omega = build_omega(&[0.0], 1);
        let reference = HorizonReference::nominal(&DVector::from_element(1, 5.0), 1);
        let rho = DMatrix::from_element(1, 1, 3.0);
        let qp = assemble_qp(&lifted, &omega, &DVector::from_element(1, 9.0), &reference, &rho)
            .unwrap();
        assert_relative_eq!(qp.hessian[(0, 0)], 6.0, epsilon = 1e-15);
        assert_relative_eq!(qp.gradient[0], 0.0, epsilon = 1e-15);
        assert_eq!(solve_nominal(&qp), DVector::from_element(1, 0.0));
    }

    #[test]
    fn scalar_deadbeat_solution() {
        let (lifted, qp) = scalar_qp(2.0, 0.0, 0.0);
        let u = solve_nominal(&qp);
        assert_relative_eq!(u[0], -2.0, epsilon = 1e-12);
        let y = lifted.predict(&u, &DVector::from_element(1, 2.0));
        assert_relative_eq!(y[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_penalty_is_rejected() {
        let lifted = scalar_lifted(1);
        let omega = DMatrix::identity(1, 1);
        let reference = HorizonReference::nominal(&DVector::zeros(1), 1);
        let err = assemble_qp(
            &lifted,
            &omega,
            &DVector::zeros(1),
            &reference,
            &DMatrix::from_element(1, 1, -2.0),
        )
        .unwrap_err();
        assert!(matches!(err, ControlError::NotPositiveDefinite));
    }

    #[test]
    fn zero_drift_feedforward_equals_nominal_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lifted, omega, r) = random_instance(&mut rng, 4, 2, 2, 5, 0.5);
        let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let qbar = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let reference = HorizonReference::nominal(&qbar, 5);
        let qp = assemble_qp(&lifted, &omega, &x, &reference, &r).unwrap();
        let nominal = solve_nominal(&qp);
        let ff = solve_feedforward(&qp, &lifted, &DVector::zeros(10)).unwrap();
        assert_eq!(nominal, ff);
    }

    #[test]
    fn scalar_feedforward_hits_the_midpoint() {
        // rho = 0, x = qbar: reactive part vanishes, U_ff = d/2 and the
        // achieved output sits halfway along the anticipated drift.
        let (lifted, qp) = scalar_qp(1.0, 1.0, 0.0);
        let d = 0.8;
        let u = solve_feedforward(&qp, &lifted, &DVector::from_element(1, d)).unwrap();
        assert_relative_eq!(u[0], d / 2.0, epsilon = 1e-12);
        let y = lifted.predict(&u, &DVector::from_element(1, 1.0));
        assert_relative_eq!(y[0], 1.0 + d / 2.0, epsilon = 1e-12);
    }

    /// Lag-compensated cost of the feedforward law; targets the midpoint of
    /// the predicted drift.
    fn ff_cost(
        lifted: &LiftedSystem,
        omega: &DMatrix<f64>,
        x: &DVector<f64>,
        qbar_stack: &DVector<f64>,
        drift_stack: &DVector<f64>,
        r: &DMatrix<f64>,
        u: &DVector<f64>,
    ) -> f64 {
        let target = qbar_stack + 0.5 * drift_stack;
        let err = omega * (lifted.predict(u, x) - target);
        err.norm_squared() + (u.transpose() * r * u)[0]
    }

    #[test]
    fn feedforward_gradient_vanishes_by_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (lifted, omega, r) = random_instance(&mut rng, 3, 2, 2, 4, 0.3);
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let qbar = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let drift = DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5));
            let reference = HorizonReference::feedforward(&qbar, &drift, 4);
            let qp = assemble_qp(&lifted, &omega, &x, &reference, &r).unwrap();
            let u = solve_feedforward(&qp, &lifted, &reference.drift_stack).unwrap();
            let h = 1e-4;
            for i in 0..u.len() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let grad = (ff_cost(&lifted, &omega, &x, &reference.qbar_stack, &reference.drift_stack, &r, &up)
                    - ff_cost(&lifted, &omega, &x, &reference.qbar_stack, &reference.drift_stack, &r, &dn))
                    / (2.0 * h);
                assert!(grad.abs() <= 1e-9, "coordinate {i}: fd gradient {grad}");
            }
        }
    }

    #[test]
    fn scalar_error_decomposition_control_dominant() {
        let lifted = scalar_lifted(1);
        let omega = DMatrix::identity(1, 1);
        let d = 0.6;
        let report = error_decomposition(
            &lifted,
            &omega,
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, d),
            &DMatrix::from_element(1, 1, 0.0),
        )
        .unwrap();
        assert_relative_eq!(report.projection[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.e_w[0], d / 2.0, epsilon = 1e-12);
        assert_relative_eq!(report.e0_total[0], -d, epsilon = 1e-12);
        assert_relative_eq!(report.ratio.unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn scalar_error_decomposition_unit_penalty() {
        let lifted = scalar_lifted(1);
        let omega = DMatrix::identity(1, 1);
        let report = error_decomposition(
            &lifted,
            &omega,
            &DVector::from_element(1, 2.0),
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, 0.3),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        // P = 2 / (2 (1 + 1)) = 0.5, so both spectral norms are 0.5.
        assert_relative_eq!(report.p_norm, 0.5, epsilon = 1e-12);
        assert_relative_eq!(report.lambda, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn perfect_tracking_has_undefined_ratio() {
        let lifted = scalar_lifted(1);
        let omega = DMatrix::identity(1, 1);
        let report = error_decomposition(
            &lifted,
            &omega,
            &DVector::from_element(1, 0.4),
            &DVector::from_element(1, 0.4),
            &DVector::zeros(1),
            &DMatrix::from_element(1, 1, 0.1),
        )
        .unwrap();
        assert!(report.e_w.norm() <= 1e-14);
        assert!(report.e0_total.norm() <= 1e-14);
        assert_eq!(report.ratio, None);
    }

    /// Random reachable instance: square input/output blocks with relative
    /// degree 1, strictly positive omega weights, and penalty `rho * I`.
    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
        d: usize,
        horizon: usize,
        rho: f64,
    ) -> (LiftedSystem, DMatrix<f64>, DMatrix<f64>) {
        assert_eq!(m, d, "reachable instances pair inputs with outputs");
        loop {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) * 0.5;
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
            let Ok(model) = LtiModel::new(a, b, c, 0.1) else {
                continue;
            };
            if model.relative_degree() != 1 {
                continue;
            }
            let lifted = build_lifted(&model, horizon).unwrap();
            let sums: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.2..2.0)).collect();
            let omega = build_omega(&sums, d);
            let r = DMatrix::identity(m * horizon, m * horizon) * rho;
            return (lifted, omega, r);
        }
    }

    #[test]
    fn minimizer_is_unique_against_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (lifted, omega, r) = random_instance(&mut rng, 5, 2, 2, 4, 0.4);
        let x = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
        let qbar = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let reference = HorizonReference::nominal(&qbar, 4);
        let qp = assemble_qp(&lifted, &omega, &x, &reference, &r).unwrap();
        let star = solve_nominal(&qp);
        let cost = |u: &DVector<f64>| {
            let err = &omega * (lifted.predict(u, &x) - &reference.qbar_stack);
            err.norm_squared() + (u.transpose() * &r * u)[0]
        };
        let base = cost(&star);
        for _ in 0..20 {
            let dir = DVector::from_fn(star.len(), |_, _| rng.random_range(-1.0..1.0)).normalize();
            assert!(cost(&(&star + 0.1 * dir)) > base);
        }
    }

    #[test]
    fn closed_loop_identity_holds_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let (lifted, omega, r) = random_instance(&mut rng, 4, 2, 2, 5, 0.2);
            let x = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let qbar = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let drift = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let reference = HorizonReference::feedforward(&qbar, &drift, 5);
            // error_decomposition verifies the identity internally to 1e-9.
            let report = error_decomposition(
                &lifted,
                &omega,
                &x,
                &reference.qbar_stack,
                &reference.drift_stack,
                &r,
            )
            .unwrap();
            assert!(report.lambda >= 0.0);
        }
    }

    #[test]
    fn projection_is_symmetric_with_unit_interval_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let (lifted, omega, r) = random_instance(&mut rng, 4, 2, 2, 4, 0.3);
            let x = DVector::zeros(4);
            let reference = HorizonReference::nominal(&DVector::zeros(2), 4);
            let qp = assemble_qp(&lifted, &omega, &x, &reference, &r).unwrap();
            let p = projection_matrix(&lifted, &qp);
            assert!((&p - p.transpose()).amax() <= 1e-9);
            let eigs = p.clone().symmetric_eigen().eigenvalues;
            for &e in eigs.iter() {
                assert!((-1e-10..=1.0 + 1e-10).contains(&e), "eigenvalue {e}");
            }
        }
    }

    #[test]
    fn ratio_approaches_one_half_in_the_control_dominant_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let (lifted, omega, _) = random_instance(&mut rng, 4, 2, 2, 4, 1.0);
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let qbar = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let drift = DVector::from_fn(2, |_, _| rng.random_range(0.2..1.0));
            let reference = HorizonReference::feedforward(&qbar, &drift, 4);
            let mh = lifted.theta.ncols();
            let mut deviations = Vec::new();
            for eps in [1e-2, 1e-4, 1e-6] {
                let r = DMatrix::identity(mh, mh) * eps;
                let report = error_decomposition(
                    &lifted,
                    &omega,
                    &x,
                    &reference.qbar_stack,
                    &reference.drift_stack,
                    &r,
                )
                .unwrap();
                deviations.push((report.ratio.unwrap() - 0.5).abs());
            }
            assert!(deviations[0] + 1e-12 >= deviations[1]);
            assert!(deviations[1] + 1e-12 >= deviations[2]);
            assert!(deviations[2] <= 0.02, "final deviation {}", deviations[2]);
        }
    }
}
