//! Discrete-time LTI agent models, output relative degree, and the lifted
//! horizon prediction matrices.
//!
//! The lifted form expresses the stacked future outputs
//! `Y = [y(k+r), ..., y(k+r+H-1)]` as `theta * U + phi * x(k)`, where `r` is
//! the output relative degree and `U` stacks the next `H` inputs.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("inconsistent dimensions: A {a_rows}x{a_cols}, B {b_rows}x{b_cols}, C {c_rows}x{c_cols}")]
    DimensionMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
        c_rows: usize,
        c_cols: usize,
    },
    #[error("no relative degree <= {max_probe}: the input never reaches the output")]
    NoRelativeDegree { max_probe: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
}

/// Discrete-time LTI plant `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)` with a
/// cached output relative degree. Immutable after construction.
#[derive(Debug, Clone)]
pub struct LtiModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    dt: f64,
    relative_degree: usize,
}

impl LtiModel {
    /// Builds the model and caches its relative degree, probing up to the
    /// state dimension (sufficient by Cayley-Hamilton).
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self, DynamicsError> {
        if dt <= 0.0 {
            return Err(DynamicsError::NonPositiveParameter {
                name: "dt",
                value: dt,
            });
        }
        check_dimensions(&a, &b, &c)?;
        let r = relative_degree(&a, &b, &c, a.nrows())?;
        Ok(Self {
            a,
            b,
            c,
            dt,
            relative_degree: r,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn relative_degree(&self) -> usize {
        self.relative_degree
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// One simulation step `x(k+1) = A x + B u`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }
}

fn check_dimensions(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(), DynamicsError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || b.ncols() == 0 || c.nrows() == 0 {
        return Err(DynamicsError::DimensionMismatch {
            a_rows: a.nrows(),
            a_cols: a.ncols(),
            b_rows: b.nrows(),
            b_cols: b.ncols(),
            c_rows: c.nrows(),
            c_cols: c.ncols(),
        });
    }
    Ok(())
}

/// Induced infinity norm (max absolute row sum).
fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Threshold below which a Markov-parameter block `C A^(l-1) B` counts as a
/// structural zero. Scaled so that discretization round-off does not fake a
/// nonzero block.
fn zero_block_tolerance(b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + inf_norm(c) * inf_norm(b))
}

/// Smallest positive `r <= max_probe` with `C A^(r-1) B != 0`, all lower
/// powers giving zero blocks.
pub fn relative_degree(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    max_probe: usize,
) -> Result<usize, DynamicsError> {
    check_dimensions(a, b, c)?;
    assert!(max_probe >= 1, "max_probe must be at least 1");
    let tol = zero_block_tolerance(b, c);
    // ca = C * A^(l-1), starting at l = 1.
    let mut ca = c.clone();
    for l in 1..=max_probe {
        let block = &ca * b;
        if block.amax() > tol {
            return Ok(l);
        }
        ca *= a;
    }
    Err(DynamicsError::NoRelativeDegree { max_probe })
}

/// Horizon prediction matrices `theta` ((dH)x(mH), lower block triangular) and
/// `phi` ((dH)xn) for a model with cached relative degree `r`:
/// block (h, l) of theta is `C A^(r+h-l-1) B` for `l <= h`, zero above the
/// diagonal; row block `h` of phi is `C A^(r+h)`.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub theta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub horizon: usize,
    pub relative_degree: usize,
}

impl LiftedSystem {
    pub fn output_dim(&self) -> usize {
        self.phi.nrows() / self.horizon
    }

    pub fn input_dim(&self) -> usize {
        self.theta.ncols() / self.horizon
    }

    /// Stacked prediction `Y = theta * U + phi * x`.
    pub fn predict(&self, u_seq: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        &self.theta * u_seq + &self.phi * x
    }
}

pub fn build_lifted(model: &LtiModel, horizon: usize) -> Result<LiftedSystem, DynamicsError> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let (n, m, d) = (model.state_dim(), model.input_dim(), model.output_dim());
    let r = model.relative_degree();

    // kernels[t] = C A^(r-1+t) B for t = 0..H-1; rows[t] = C A^(r+t).
    let mut kernels = Vec::with_capacity(horizon);
    let mut rows = Vec::with_capacity(horizon);
    // ca = C * A^(r-1)
    let mut ca = model.c.clone();
    for _ in 0..r - 1 {
        ca *= &model.a;
    }
    for _ in 0..horizon {
        kernels.push(&ca * &model.b);
        ca *= &model.a;
        rows.push(ca.clone());
    }

    let mut theta = DMatrix::zeros(d * horizon, m * horizon);
    let mut phi = DMatrix::zeros(d * horizon, n);
    for h in 0..horizon {
        phi.view_mut((h * d, 0), (d, n)).copy_from(&rows[h]);
        for l in 0..=h {
            theta
                .view_mut((h * d, l * m), (d, m))
                .copy_from(&kernels[h - l]);
        }
    }
    Ok(LiftedSystem {
        theta,
        phi,
        horizon,
        relative_degree: r,
    })
}

/// Linearized planar quadcopter: two decoupled 4-state chains
/// `p -> v -> pitch/roll angle -> angle rate`, forward-Euler discretized.
///
/// Per axis, with attitude time constant `tau`:
/// `p += dt v`, `v += dt g angle`, `angle += dt rate`,
/// `rate += dt (u - rate) / tau`. State ordering is
/// `[p_x, v_x, theta, theta_dot, p_y, v_y, phi, phi_dot]`; the output picks
/// the planar position `(p_x, p_y)`. The relative degree of the result is 4.
pub fn make_quadcopter_model(dt: f64, g: f64, tau: f64) -> Result<LtiModel, DynamicsError> {
    for (name, value) in [("dt", dt), ("g", g), ("tau", tau)] {
        if value <= 0.0 {
            return Err(DynamicsError::NonPositiveParameter { name, value });
        }
    }
    let axis_a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0,
            dt,
            0.0,
            0.0,
            0.0,
            1.0,
            g * dt,
            0.0,
            0.0,
            0.0,
            1.0,
            dt,
            0.0,
            0.0,
            0.0,
            1.0 - dt / tau,
        ],
    );
    let axis_b = DVector::from_column_slice(&[0.0, 0.0, 0.0, dt / tau]);

    let mut a = DMatrix::zeros(8, 8);
    let mut b = DMatrix::zeros(8, 2);
    for axis in 0..2 {
        let off = 4 * axis;
        a.view_mut((off, off), (4, 4)).copy_from(&axis_a);
        b.view_mut((off, axis), (4, 1)).copy_from(&axis_b);
    }
    let mut c = DMatrix::zeros(2, 8);
    c[(0, 0)] = 1.0;
    c[(1, 4)] = 1.0;

    LtiModel::new(a, b, c, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Impulse-response oracle: feed a unit impulse on each input channel at
    /// k = 0 and report the first step with a nonzero output. Independent of
    /// the matrix-power route used by `relative_degree`.
    fn impulse_relative_degree(model: &LtiModel, max_steps: usize) -> Option<usize> {
        let tol = zero_block_tolerance(&model.b, &model.c);
        for s in 0..model.input_dim() {
            let mut u = DVector::zeros(model.input_dim());
            u[s] = 1.0;
            let mut x = model.step(&DVector::zeros(model.state_dim()), &u);
            for k in 1..=max_steps {
                if model.output(&x).amax() > tol {
                    return Some(k);
                }
                x = model.step(&x, &DVector::zeros(model.input_dim()));
            }
        }
        None
    }

    fn double_integrator(dt: f64) -> LtiModel {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, dt]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        LtiModel::new(a, b, c, dt).unwrap()
    }

    fn scalar_unit() -> LtiModel {
        LtiModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn double_integrator_relative_degree_matches_impulse_oracle() {
        let model = double_integrator(0.1);
        assert_eq!(model.relative_degree(), 2);
        assert_eq!(impulse_relative_degree(&model, 8), Some(2));
    }

    #[test]
    fn direct_feedthrough_chain_has_degree_one() {
        // C B = 1 != 0.
        let model = LtiModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            1.0,
        )
        .unwrap();
        assert_eq!(model.relative_degree(), 1);
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let err = LtiModel::new(
            DMatrix::identity(3, 3),
            DMatrix::zeros(2, 1), // B must have 3 rows
            DMatrix::zeros(1, 3),
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, DynamicsError::DimensionMismatch { .. }));
    }

    #[test]
    fn unreachable_output_reports_no_relative_degree() {
        // Input drives state 1, output reads state 0, no coupling.
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let err = relative_degree(&a, &b, &c, 6).unwrap_err();
        assert!(matches!(err, DynamicsError::NoRelativeDegree { max_probe: 6 }));
    }

    #[test]
    fn minimality_all_lower_powers_are_zero_blocks() {
        let model = make_quadcopter_model(0.1, 9.81, 0.5).unwrap();
        let r = model.relative_degree();
        let tol = zero_block_tolerance(&model.b, &model.c);
        let mut ca = model.c.clone();
        for _ in 1..r {
            assert!((&ca * &model.b).amax() <= tol);
            ca *= &model.a;
        }
        assert!((&ca * &model.b).amax() > tol);
    }

    #[test]
    fn lifted_scalar_single_step() {
        let lifted = build_lifted(&scalar_unit(), 1).unwrap();
        assert_eq!(lifted.theta, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(lifted.phi, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn lifted_scalar_two_steps() {
        // Unrolled: y(k+1) = x + u0, y(k+2) = x + u0 + u1.
        let lifted = build_lifted(&scalar_unit(), 2).unwrap();
        assert_eq!(
            lifted.theta,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])
        );
        assert_eq!(lifted.phi, DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
    }

    /// Simulation oracle: run the plant forward and stack
    /// y(k+r) .. y(k+r+H-1) directly.
    fn stacked_simulation(model: &LtiModel, x0: &DVector<f64>, u_seq: &DVector<f64>, horizon: usize) -> DVector<f64> {
        let (m, d, r) = (model.input_dim(), model.output_dim(), model.relative_degree());
        let mut x = x0.clone();
        let mut stacked = DVector::zeros(d * horizon);
        let total = r + horizon - 1;
        for k in 0..total {
            let u = if k < horizon {
                u_seq.rows(k * m, m).into_owned()
            } else {
                DVector::zeros(m)
            };
            x = model.step(&x, &u);
            let step_ahead = k + 1;
            if step_ahead >= r {
                let h = step_ahead - r;
                if h < horizon {
                    stacked.rows_mut(h * d, d).copy_from(&model.output(&x));
                }
            }
        }
        stacked
    }

    #[test]
    fn double_integrator_lifted_matches_simulation() {
        let model = double_integrator(0.1);
        let lifted = build_lifted(&model, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let err = (lifted.predict(&u, &x) - stacked_simulation(&model, &x, &u, 2)).amax();
            assert!(err <= 1e-12, "prediction error {err}");
        }
    }

    #[test]
    fn random_models_lifted_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let n = rng.random_range(1..=8usize);
            let m = rng.random_range(1..=3usize);
            let d = rng.random_range(1..=3usize);
            let horizon = rng.random_range(1..=15usize);
            // Mildly contractive A keeps powers bounded over the window.
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) * 0.6;
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
            let Ok(model) = LtiModel::new(a, b, c, 0.1) else {
                continue; // astronomically unlikely zero C A^l B chain
            };
            let lifted = build_lifted(&model, horizon).unwrap();
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let u = DVector::from_fn(m * horizon, |_, _| rng.random_range(-3.0..3.0));
            let err = (lifted.predict(&u, &x) - stacked_simulation(&model, &x, &u, horizon)).amax();
            assert!(err <= 1e-10, "case {case}: prediction error {err}");
        }
    }

    #[test]
    fn theta_zero_pattern_is_exact() {
        let model = make_quadcopter_model(0.1, 9.81, 0.5).unwrap();
        let lifted = build_lifted(&model, 5).unwrap();
        let (d, m) = (model.output_dim(), model.input_dim());
        for h in 0..5 {
            for l in (h + 1)..5 {
                let block = lifted.theta.view((h * d, l * m), (d, m));
                assert!(block.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn quadcopter_structure() {
        let model = make_quadcopter_model(0.1, 9.81, 0.5).unwrap();
        assert_eq!(model.state_dim(), 8);
        assert_eq!(model.input_dim(), 2);
        assert_eq!(model.output_dim(), 2);
        // Two identical decoupled 4x4 axis blocks.
        let top = model.a().view((0, 0), (4, 4)).into_owned();
        let bottom = model.a().view((4, 4), (4, 4)).into_owned();
        assert_eq!(top, bottom);
        assert!(model.a().view((0, 4), (4, 4)).iter().all(|&v| v == 0.0));
        assert!(model.a().view((4, 0), (4, 4)).iter().all(|&v| v == 0.0));
        // No direct feedthrough to position.
        assert!((model.c() * model.b()).amax() == 0.0);
        assert_eq!(model.relative_degree(), 4);
        assert_eq!(impulse_relative_degree(&model, 10), Some(4));
    }

    #[test]
    fn quadcopter_pure_drift() {
        // Zero input, zero attitude: position advances by v dt each step.
        let dt = 0.1;
        let model = make_quadcopter_model(dt, 9.81, 0.5).unwrap();
        let mut x = DVector::zeros(8);
        x[1] = 1.0; // v_x = 1 m/s
        for k in 1..=5 {
            x = model.step(&x, &DVector::zeros(2));
            assert_relative_eq!(x[0], k as f64 * dt, epsilon = 1e-12);
            assert_relative_eq!(x[4], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn quadcopter_is_controllable() {
        let model = make_quadcopter_model(0.1, 9.81, 0.5).unwrap();
        let n = model.state_dim();
        // Controllability matrix [B, AB, ..., A^(n-1) B].
        let mut blocks = DMatrix::zeros(n, n * model.input_dim());
        let mut ab = model.b().clone();
        for i in 0..n {
            blocks
                .view_mut((0, i * model.input_dim()), (n, model.input_dim()))
                .copy_from(&ab);
            ab = model.a() * ab;
        }
        assert_eq!(blocks.rank(1e-10), n);
    }
}
