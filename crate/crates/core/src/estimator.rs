//! Kalman filter: unbiased state estimates from applied inputs and noisy
//! measurements. States are values; every step returns a new state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore;
use crate::model::StateSpaceModel;

/// Absolute floor applied to innovation covariances whose norm has fully
/// collapsed. With exactly zero process and measurement noise the covariance
/// recursion reaches rank zero in finitely many steps; the floor keeps the
/// gain solves defined without measurably perturbing regular runs.
pub(crate) const COVARIANCE_FLOOR: f64 = 1e-12;

/// Condition-number limit beyond which an innovation covariance is treated
/// as collapsed and gets a relative ridge. Exactly-zero measurement noise
/// drives the covariance recursion through rank-deficient states; flattening
/// the dead directions keeps those runs defined while leaving positive
/// definite cases untouched.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// Process/measurement covariance pair plus the RNG seed policy for
/// simulations that draw from them.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    seed: u64,
}

impl NoiseSpec {
    /// Validates symmetry and positive semidefiniteness of both covariances.
    /// Zero covariances are allowed; they make runs deterministic.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, seed: u64) -> Result<Self> {
        check_covariance(&q, "Q")?;
        check_covariance(&r, "R")?;
        Ok(NoiseSpec { q, r, seed })
    }

    /// Isotropic shorthand: `Q = q_var * I_n`, `R = r_var * I_l`.
    pub fn isotropic(model: &StateSpaceModel, q_var: f64, r_var: f64, seed: u64) -> Result<Self> {
        NoiseSpec::new(
            DMatrix::identity(model.state_dim(), model.state_dim()) * q_var,
            DMatrix::identity(model.output_dim(), model.output_dim()) * r_var,
            seed,
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn check_covariance(m: &DMatrix<f64>, name: &str) -> Result<()> {
    matcore::check_finite(m, name)?;
    if !m.is_square() {
        return Err(Error::InvalidInput(format!("{name} must be square")));
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-9 * (1.0 + m.norm()) {
        return Err(Error::InvalidInput(format!("{name} is not symmetric")));
    }
    let min_eig = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-9 * (1.0 + m.norm()) {
        return Err(Error::InvalidInput(format!(
            "{name} is not positive semidefinite (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn apply_floor(mut s: DMatrix<f64>) -> DMatrix<f64> {
    if s.amax() < COVARIANCE_FLOOR {
        let n = s.nrows();
        s += DMatrix::identity(n, n) * COVARIANCE_FLOOR;
    }
    s
}

/// Returns `RHS * S^{-1}` for a symmetric covariance-like `S`, with
/// eigenvalues clamped at `lam_max / MAX_CONDITION` so collapsed directions
/// (rank-deficient recursions under exactly zero noise) stay solvable
/// instead of failing. Positive definite inputs are inverted exactly.
pub(crate) fn spd_right_solve(
    rhs: &DMatrix<f64>,
    s: &DMatrix<f64>,
    what: &str,
) -> Result<DMatrix<f64>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "{what} has non-finite entries"
        )));
    }
    let eig = s.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.max().max(COVARIANCE_FLOOR);
    let ridge = lam_max / MAX_CONDITION;
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..s.nrows() {
        let lam = eig.eigenvalues[j].max(ridge);
        scaled.column_mut(j).scale_mut(1.0 / lam);
    }
    let inverse = scaled * eig.eigenvectors.transpose();
    Ok(rhs * inverse)
}

/// Filter recursion state: the estimate `x_hat`, its covariance, and the
/// most recent gain/innovation covariance for inspection.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub last_gain: Option<DMatrix<f64>>,
    pub last_innovation_cov: Option<DMatrix<f64>>,
}

impl KalmanState {
    pub fn new(x_hat: DVector<f64>, p: DMatrix<f64>) -> Self {
        KalmanState {
            x_hat,
            p,
            last_gain: None,
            last_innovation_cov: None,
        }
    }

    /// Default initialization `x_hat = 0`, `P = I`.
    pub fn default_for(model: &StateSpaceModel) -> Self {
        let n = model.state_dim();
        KalmanState::new(DVector::zeros(n), DMatrix::identity(n, n))
    }

    /// Time update: `x_hat <- A x_hat + B u`, `P <- A P A^T + Q`.
    pub fn predict(
        &self,
        model: &StateSpaceModel,
        noise: &NoiseSpec,
        u_applied: &DVector<f64>,
    ) -> Result<KalmanState> {
        model.check_state(&self.x_hat)?;
        model.check_input(u_applied)?;
        let x = model.a() * &self.x_hat + model.b() * u_applied;
        let p = symmetrize(&(model.a() * &self.p * model.a().transpose() + noise.q()));
        Ok(KalmanState {
            x_hat: x,
            p,
            last_gain: self.last_gain.clone(),
            last_innovation_cov: self.last_innovation_cov.clone(),
        })
    }

    /// Measurement update from a predicted `(k|k-1)` state:
    /// `S = C P C^T + R`, `K = P C^T S^{-1}`, then the standard correction
    /// with the covariance re-symmetrized.
    pub fn update(
        &self,
        model: &StateSpaceModel,
        noise: &NoiseSpec,
        y_meas: &DVector<f64>,
    ) -> Result<KalmanState> {
        model.check_output(y_meas)?;
        let c = model.c();
        let s = apply_floor(symmetrize(&(c * &self.p * c.transpose() + noise.r())));
        let pct = &self.p * c.transpose();
        let gain = spd_right_solve(&pct, &s, "innovation covariance")?;
        let innovation = y_meas - c * &self.x_hat;
        let x = &self.x_hat + &gain * innovation;
        let n = model.state_dim();
        let p = symmetrize(&((DMatrix::identity(n, n) - &gain * c) * &self.p));
        Ok(KalmanState {
            x_hat: x,
            p,
            last_gain: Some(gain),
            last_innovation_cov: Some(s),
        })
    }
}
