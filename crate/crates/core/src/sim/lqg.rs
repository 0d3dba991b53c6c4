//! LQG comparison baseline: a discrete LQR state-feedback gain around the
//! Kalman estimate with per-step steady-state target feedforward.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{KalmanState, NoiseSpec};
use crate::matcore;
use crate::model::StateSpaceModel;

use super::{ControlDecision, Controller};

const RICCATI_TOL: f64 = 1e-10;
const RICCATI_MAX_ITER: usize = 10_000;

/// LQR cost weights. The default penalizes output error (`state_cost =
/// C^T C`) against unit input cost.
#[derive(Debug, Clone)]
pub struct LqgWeights {
    pub state_cost: DMatrix<f64>,
    pub input_cost: DMatrix<f64>,
}

impl LqgWeights {
    pub fn default_for(model: &StateSpaceModel) -> Self {
        LqgWeights {
            state_cost: model.c().transpose() * model.c(),
            input_cost: DMatrix::identity(model.input_dim(), model.input_dim()),
        }
    }
}

/// LQG controller: Kalman estimator, fixed LQR gain, and a feedforward
/// target `(x_ss, u_ss)` recomputed from the previewed reference each step
/// by solving `[[A - I, B], [C, 0]] [x_ss; u_ss] = [0; y_ref]`.
///
/// Systems whose target matrix is rank deficient (an invariant zero at
/// z = 1) have no exact equilibrium for nonzero references; the solve falls
/// back to the minimum-norm least-squares target and
/// `target_rank_deficient()` reports it so harnesses can warn.
#[derive(Debug, Clone)]
pub struct LqgController {
    model: StateSpaceModel,
    noise: NoiseSpec,
    gain: DMatrix<f64>,
    target_pinv: DMatrix<f64>,
    target_rank_deficient: bool,
    kalman: KalmanState,
    u_prev: DVector<f64>,
}

/// Builds the baseline: iterates the control Riccati recursion to
/// convergence and prepares the target feedforward solver.
pub fn lqg_baseline(
    model: &StateSpaceModel,
    noise: &NoiseSpec,
    weights: &LqgWeights,
) -> Result<LqgController> {
    let n = model.state_dim();
    let p = model.input_dim();
    let l = model.output_dim();
    if l != p {
        return Err(Error::UnsupportedShape(format!(
            "LQG baseline expects a square system (l = {l}, p = {p})"
        )));
    }
    if weights.state_cost.shape() != (n, n) || weights.input_cost.shape() != (p, p) {
        return Err(Error::InvalidInput("LQG weight dimensions do not match model".into()));
    }

    let a = model.a();
    let b = model.b();
    let at = a.transpose();
    let bt = b.transpose();
    let mut riccati = weights.state_cost.clone();
    let mut converged = false;
    for _ in 0..RICCATI_MAX_ITER {
        let btpb = &weights.input_cost + &bt * &riccati * b;
        let btpa = &bt * &riccati * a;
        let feedback = btpb
            .clone()
            .lu()
            .solve(&btpa)
            .ok_or_else(|| Error::NumericalFailure("Riccati inner solve failed".into()))?;
        let next = &at * &riccati * a - (&at * &riccati * b) * &feedback + &weights.state_cost;
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &riccati).amax();
        riccati = next;
        if delta < RICCATI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Riccati recursion did not converge in {RICCATI_MAX_ITER} iterations"
        )));
    }
    let btpb = &weights.input_cost + &bt * &riccati * b;
    let btpa = &bt * &riccati * a;
    let gain = btpb
        .lu()
        .solve(&btpa)
        .ok_or_else(|| Error::NumericalFailure("LQR gain solve failed".into()))?;

    // target system [[A - I, B], [C, 0]]
    let mut target = DMatrix::zeros(n + l, n + p);
    target
        .view_mut((0, 0), (n, n))
        .copy_from(&(a - DMatrix::identity(n, n)));
    target.view_mut((0, n), (n, p)).copy_from(b);
    target.view_mut((n, 0), (l, n)).copy_from(model.c());
    let target_rank = matcore::numerical_rank(&target, 0.0)?;
    let target_pinv = matcore::pinv(&target, 0.0)?;

    Ok(LqgController {
        model: model.clone(),
        noise: noise.clone(),
        gain,
        target_pinv,
        target_rank_deficient: target_rank < n + p,
        kalman: KalmanState::default_for(model),
        u_prev: DVector::zeros(p),
    })
}

impl LqgController {
    pub fn with_initial_estimate(mut self, x0_hat: DVector<f64>, p0: DMatrix<f64>) -> Self {
        self.kalman = KalmanState::new(x0_hat, p0);
        self
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// True when no exact steady state exists for nonzero references.
    pub fn target_rank_deficient(&self) -> bool {
        self.target_rank_deficient
    }

    /// Feedforward target for a reference value.
    pub fn target_for(&self, y_ref: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.model.state_dim();
        let p = self.model.input_dim();
        let mut rhs = DVector::zeros(n + y_ref.len());
        rhs.rows_mut(n, y_ref.len()).copy_from(y_ref);
        let sol = &self.target_pinv * rhs;
        (sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned())
    }
}

impl Controller for LqgController {
    fn name(&self) -> &'static str {
        "lqg"
    }

    fn step(&mut self, y_meas: &DVector<f64>, y_ref_next: &DVector<f64>) -> Result<ControlDecision> {
        self.model.check_output(y_meas)?;
        self.model.check_output(y_ref_next)?;
        self.kalman = self
            .kalman
            .predict(&self.model, &self.noise, &self.u_prev)?
            .update(&self.model, &self.noise, y_meas)?;
        let (x_ss, u_ss) = self.target_for(y_ref_next);
        let u = u_ss - &self.gain * (&self.kalman.x_hat - x_ss);
        let y_pred = self.model.c() * (self.model.a() * &self.kalman.x_hat + self.model.b() * &u);
        self.u_prev = u.clone();
        Ok(ControlDecision { u, y_pred })
    }
}
