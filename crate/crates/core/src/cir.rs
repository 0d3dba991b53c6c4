//! The command-following controller: a Kalman estimate feeds a one-step
//! output prediction, and the constrained reconstruction gain turns the
//! previewed reference minus that prediction into the control input.
//!
//! Two covariance recursions run side by side: the Kalman covariance serves
//! the state estimate, while a separate covariance drives the constrained
//! gain. The state estimate comes exclusively from the Kalman branch and the
//! gain exclusively from the reconstruction branch.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::estimator::{symmetrize, KalmanState, NoiseSpec};
use crate::matcore;
use crate::model::StateSpaceModel;
use crate::reconstructor::umv_gain;

/// Controller state for one closed loop. A value type: `step` consumes
/// nothing and returns the advanced state plus the input to apply.
#[derive(Debug, Clone)]
pub struct CirState {
    pub kalman: KalmanState,
    /// Covariance driving the constrained-gain recursion.
    pub umv_cov: DMatrix<f64>,
    /// Input applied at the previous step (zero at k = 0).
    pub u_prev: DVector<f64>,
    /// One-step output prediction from the most recent step.
    pub y_pred: DVector<f64>,
    /// Constrained gain used by the most recent step.
    pub last_gain: Option<DMatrix<f64>>,
    b_pinv: DMatrix<f64>,
}

impl CirState {
    pub fn new(model: &StateSpaceModel, x0_hat: DVector<f64>, p0: DMatrix<f64>) -> Result<Self> {
        model.check_state(&x0_hat)?;
        Ok(CirState {
            kalman: KalmanState::new(x0_hat, p0.clone()),
            umv_cov: p0,
            u_prev: DVector::zeros(model.input_dim()),
            y_pred: DVector::zeros(model.output_dim()),
            last_gain: None,
            b_pinv: matcore::pinv(model.b(), 0.0)?,
        })
    }

    pub fn default_for(model: &StateSpaceModel) -> Result<Self> {
        let n = model.state_dim();
        CirState::new(model, DVector::zeros(n), DMatrix::identity(n, n))
    }

    /// One control decision: consumes the measurement at time k and the
    /// previewed reference for time k+1, returns the advanced state and the
    /// input to apply now.
    pub fn step(
        &self,
        model: &StateSpaceModel,
        noise: &NoiseSpec,
        y_meas: &DVector<f64>,
        y_ref_next: &DVector<f64>,
    ) -> Result<(CirState, DVector<f64>)> {
        model.check_output(y_meas)?;
        model.check_output(y_ref_next)?;

        // state estimate from the measurement branch
        let kalman = self
            .kalman
            .predict(model, noise, &self.u_prev)?
            .update(model, noise, y_meas)?;

        // open-loop one-step output prediction
        let x_pred = model.a() * &kalman.x_hat;
        let y_pred = model.c() * &x_pred;

        // constrained gain from the reconstruction branch
        let p_prior = symmetrize(&(model.a() * &self.umv_cov * model.a().transpose() + noise.q()));
        let g = umv_gain(&p_prior, model, noise)?;

        // synthetic innovation: previewed reference minus prediction
        let u_apply = &self.b_pinv * (&g.gain * (y_ref_next - &y_pred));

        let next = CirState {
            kalman,
            umv_cov: g.p_post,
            u_prev: u_apply.clone(),
            y_pred,
            last_gain: Some(g.gain),
            b_pinv: self.b_pinv.clone(),
        };
        Ok((next, u_apply))
    }
}
