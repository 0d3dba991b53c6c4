//! Closed-loop simulation harness: noisy plant propagation, reference
//! generators, controllers behind a common trait, and seeded Monte Carlo
//! averaging.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cir::CirState;
use crate::error::{Error, Result};
use crate::estimator::NoiseSpec;
use crate::model::StateSpaceModel;
use crate::squaring::InputTransform;

mod lqg;
mod monte_carlo;
mod reference;
mod trace;

pub use lqg::{lqg_baseline, LqgController, LqgWeights};
pub use monte_carlo::{monte_carlo, monte_carlo_sequential};
pub use reference::{ChannelKind, ChannelSpec, ReferenceSignal};
pub use trace::{mse_summary_lines, model_fingerprint, MonteCarloSummary, SimulationTrace};

/// Draws zero-mean Gaussian vectors with fixed covariances. The factor is
/// computed once; exactly-zero covariances consume no randomness so that
/// "noise draws disabled" runs are fully deterministic.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    process_factor: Option<DMatrix<f64>>,
    measurement_factor: Option<DMatrix<f64>>,
}

fn covariance_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.amax() == 0.0 {
        return None;
    }
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut factor = eig.eigenvectors;
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Some(factor)
}

fn draw(factor: &Option<DMatrix<f64>>, dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match factor {
        None => DVector::zeros(dim),
        Some(f) => {
            let xi = DVector::from_fn(f.ncols(), |_, _| StandardNormal.sample(rng));
            f * xi
        }
    }
}

impl NoiseSampler {
    pub fn new(noise: &NoiseSpec) -> Self {
        NoiseSampler {
            process_factor: covariance_factor(noise.q()),
            measurement_factor: covariance_factor(noise.r()),
        }
    }

    pub fn draw_process(&self, dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        draw(&self.process_factor, dim, rng)
    }

    pub fn draw_measurement(&self, dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        draw(&self.measurement_factor, dim, rng)
    }
}

/// One noisy plant transition: `x_next = A x + B u + w`, `y_next = C x_next
/// + v` with `w ~ N(0, Q)`, `v ~ N(0, R)`. Deterministic when both
/// covariances are zero.
pub fn plant_step(
    model: &StateSpaceModel,
    noise: &NoiseSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    model.check_state(x)?;
    model.check_input(u)?;
    let sampler = NoiseSampler::new(noise);
    Ok(plant_step_with(model, &sampler, x, u, rng))
}

fn plant_step_with(
    model: &StateSpaceModel,
    sampler: &NoiseSampler,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, DVector<f64>) {
    let w = sampler.draw_process(model.state_dim(), rng);
    let v = sampler.draw_measurement(model.output_dim(), rng);
    let x_next = model.a() * x + model.b() * u + w;
    let y_next = model.c() * &x_next + v;
    (x_next, y_next)
}

/// What a controller hands back each step: the input to apply and its own
/// one-step-ahead output prediction (for the trace).
#[derive(Debug, Clone)]
pub struct ControlDecision {
    pub u: DVector<f64>,
    pub y_pred: DVector<f64>,
}

/// A closed-loop control policy. At step k it sees the measurement `y_k`
/// and the previewed reference `y_ref_{k+1}`, nothing else.
pub trait Controller {
    fn name(&self) -> &'static str;
    fn step(&mut self, y_meas: &DVector<f64>, y_ref_next: &DVector<f64>)
        -> Result<ControlDecision>;
}

/// Command-following controller bound to a model and noise description.
#[derive(Debug, Clone)]
pub struct CirController {
    model: StateSpaceModel,
    noise: NoiseSpec,
    state: CirState,
}

impl CirController {
    pub fn new(
        model: StateSpaceModel,
        noise: NoiseSpec,
        x0_hat: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let state = CirState::new(&model, x0_hat, p0)?;
        Ok(CirController {
            model,
            noise,
            state,
        })
    }

    pub fn state(&self) -> &CirState {
        &self.state
    }
}

impl Controller for CirController {
    fn name(&self) -> &'static str {
        "cir"
    }

    fn step(&mut self, y_meas: &DVector<f64>, y_ref_next: &DVector<f64>) -> Result<ControlDecision> {
        let (next, u) = self.state.step(&self.model, &self.noise, y_meas, y_ref_next)?;
        let y_pred = next.y_pred.clone();
        self.state = next;
        Ok(ControlDecision { u, y_pred })
    }
}

/// CIR on the squared model of a wide plant; inputs are lifted back through
/// the transform before being applied.
#[derive(Debug, Clone)]
pub struct LiftedCirController {
    inner: CirController,
    transform: InputTransform,
}

impl LiftedCirController {
    pub fn new(
        transform: InputTransform,
        noise: NoiseSpec,
        x0_hat: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let inner = CirController::new(transform.squared_model().clone(), noise, x0_hat, p0)?;
        Ok(LiftedCirController { inner, transform })
    }
}

impl Controller for LiftedCirController {
    fn name(&self) -> &'static str {
        "cir+lift"
    }

    fn step(&mut self, y_meas: &DVector<f64>, y_ref_next: &DVector<f64>) -> Result<ControlDecision> {
        let d = self.inner.step(y_meas, y_ref_next)?;
        Ok(ControlDecision {
            u: self.transform.lift_input(&d.u)?,
            y_pred: d.y_pred,
        })
    }
}

/// Which controller a scenario builds for each run.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Cir,
    /// CIR on the squared model, lifted onto the wide plant.
    CirLifted(InputTransform),
    Lqg(LqgWeights),
}

/// Everything one closed-loop experiment needs except the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: StateSpaceModel,
    pub noise: NoiseSpec,
    pub controller: ControllerSpec,
    pub reference: ReferenceSignal,
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub x0_hat: DVector<f64>,
    pub p0: DMatrix<f64>,
    /// Pre-projection reference, recorded alongside the tracked one.
    pub raw_reference: Option<ReferenceSignal>,
}

impl Scenario {
    pub fn new(
        model: StateSpaceModel,
        noise: NoiseSpec,
        controller: ControllerSpec,
        reference: ReferenceSignal,
        horizon: usize,
    ) -> Result<Self> {
        if reference.output_dim() != model.output_dim() {
            return Err(Error::InvalidInput(format!(
                "reference has {} channels, model has {} outputs",
                reference.output_dim(),
                model.output_dim()
            )));
        }
        let n = model.state_dim();
        Ok(Scenario {
            x0: DVector::zeros(n),
            x0_hat: DVector::zeros(n),
            p0: DMatrix::identity(n, n),
            model,
            noise,
            controller,
            reference,
            horizon,
            raw_reference: None,
        })
    }

    pub fn with_x0(mut self, x0: DVector<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_initial_estimate(mut self, x0_hat: DVector<f64>, p0: DMatrix<f64>) -> Self {
        self.x0_hat = x0_hat;
        self.p0 = p0;
        self
    }

    pub fn with_raw_reference(mut self, raw: ReferenceSignal) -> Self {
        self.raw_reference = Some(raw);
        self
    }

    pub fn build_controller(&self) -> Result<Box<dyn Controller>> {
        match &self.controller {
            ControllerSpec::Cir => Ok(Box::new(CirController::new(
                self.model.clone(),
                self.noise.clone(),
                self.x0_hat.clone(),
                self.p0.clone(),
            )?)),
            ControllerSpec::CirLifted(t) => Ok(Box::new(LiftedCirController::new(
                t.clone(),
                self.noise.clone(),
                self.x0_hat.clone(),
                self.p0.clone(),
            )?)),
            ControllerSpec::Lqg(w) => Ok(Box::new(
                lqg_baseline(&self.model, &self.noise, w)?
                    .with_initial_estimate(self.x0_hat.clone(), self.p0.clone()),
            )),
        }
    }

    /// One closed-loop run under the given seed.
    pub fn run(&self, seed: u64) -> Result<SimulationTrace> {
        let mut controller = self.build_controller()?;
        let mut trace = run_closed_loop(
            &self.model,
            &self.noise,
            controller.as_mut(),
            &self.reference,
            self.horizon,
            &self.x0,
            seed,
        )?;
        if let Some(raw) = &self.raw_reference {
            trace.raw_reference = Some((0..=self.horizon).map(|k| raw.sample(k)).collect());
        }
        Ok(trace)
    }
}

/// Runs a controller against the noisy plant for `horizon` steps.
/// Deterministic for a given seed; the controller sees only the current
/// measurement and the one-step reference preview.
pub fn run_closed_loop(
    model: &StateSpaceModel,
    noise: &NoiseSpec,
    controller: &mut dyn Controller,
    reference: &ReferenceSignal,
    horizon: usize,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<SimulationTrace> {
    model.check_state(x0)?;
    if reference.output_dim() != model.output_dim() {
        return Err(Error::InvalidInput(format!(
            "reference has {} channels, model has {} outputs",
            reference.output_dim(),
            model.output_dim()
        )));
    }
    if let Some(steps) = reference.defined_steps() {
        if steps < horizon + 1 {
            return Err(Error::InvalidInput(format!(
                "sampled reference defines {steps} steps, horizon {horizon} needs {}",
                horizon + 1
            )));
        }
    }

    let l = model.output_dim();
    let p = model.input_dim();
    let sampler = NoiseSampler::new(noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x = x0.clone();
    let mut y = model.c() * &x + sampler.draw_measurement(l, &mut rng);

    let mut trace = SimulationTrace {
        dt: model.dt(),
        x_true: Vec::with_capacity(horizon + 1),
        y_meas: Vec::with_capacity(horizon + 1),
        y_ref: Vec::with_capacity(horizon + 1),
        u_applied: Vec::with_capacity(horizon + 1),
        y_pred: Vec::with_capacity(horizon + 1),
        raw_reference: None,
        seed,
        model_hash: model_fingerprint(model),
        controller_name: controller.name().into(),
    };
    trace.x_true.push(x.clone());
    trace.y_meas.push(y.clone());
    trace.y_ref.push(reference.sample(0));
    trace.y_pred.push(DVector::zeros(l));

    for k in 0..horizon {
        let y_ref_next = reference.sample(k + 1);
        let decision = controller
            .step(&y, &y_ref_next)
            .map_err(|e| e.at_step(k))?;
        if decision.u.len() != p {
            return Err(Error::InvalidInput(format!(
                "controller returned input of length {}, plant takes {p}",
                decision.u.len()
            ))
            .at_step(k));
        }
        let (x_next, y_next) = plant_step_with(model, &sampler, &x, &decision.u, &mut rng);
        x = x_next;
        y = y_next;
        trace.u_applied.push(decision.u);
        trace.x_true.push(x.clone());
        trace.y_meas.push(y.clone());
        trace.y_ref.push(y_ref_next);
        trace.y_pred.push(decision.y_pred);
    }
    // no input follows the final measurement
    trace.u_applied.push(DVector::zeros(p));
    Ok(trace)
}
