//! JSON experiment configuration and its resolution into a runnable
//! scenario.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use cir_core::error::{Error, Result};
use cir_core::sim::{ChannelKind, ChannelSpec, ControllerSpec, ReferenceSignal, Scenario};
use cir_core::squaring;
use cir_core::{LqgWeights, NoiseSpec, StateSpaceModel};

/// Scalar shorthand (`v` means `v * I`) or a full matrix as row arrays.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrMatrix {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl ScalarOrMatrix {
    fn build(&self, dim: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            ScalarOrMatrix::Scalar(v) => Ok(DMatrix::identity(dim, dim) * *v),
            ScalarOrMatrix::Matrix(rows) => {
                let m = matrix_from_rows(rows, name)?;
                if m.shape() != (dim, dim) {
                    return Err(Error::Config(format!(
                        "{name}: expected {dim}x{dim}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(m)
            }
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("{name}: matrix must be non-empty")));
    }
    let cols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Config(format!(
                "{name}: row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File {
        file: PathBuf,
    },
    Inline {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(default)]
        dt: f64,
        #[serde(default)]
        continuous: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub q: ScalarOrMatrix,
    pub r: ScalarOrMatrix,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerChoice {
    Cir,
    Lqg,
}

impl Default for ControllerChoice {
    fn default() -> Self {
        ControllerChoice::Cir
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqgWeightConfig {
    pub state_cost: Option<ScalarOrMatrix>,
    pub input_cost: Option<ScalarOrMatrix>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReferenceChannelConfig {
    pub kind: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub phase: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_period() -> f64 {
    100.0
}

impl ReferenceChannelConfig {
    fn build(&self, index: usize) -> Result<ChannelSpec> {
        let kind = match self.kind.as_str() {
            "step" => ChannelKind::Step,
            "sine" => ChannelKind::Sine,
            "sawtooth" => ChannelKind::Sawtooth,
            other => {
                return Err(Error::Config(format!(
                    "reference channel {index}: unknown kind {other:?} \
                     (expected step, sine or sawtooth)"
                )))
            }
        };
        Ok(ChannelSpec {
            kind,
            amplitude: self.amplitude,
            period: self.period,
            offset: self.offset,
            phase: self.phase,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ReferenceConfig {
    Channels(Vec<ReferenceChannelConfig>),
    Samples { samples: Vec<Vec<f64>> },
}

impl ReferenceConfig {
    fn build(&self) -> Result<ReferenceSignal> {
        match self {
            ReferenceConfig::Channels(chs) => {
                let specs = chs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.build(i))
                    .collect::<Result<Vec<_>>>()?;
                ReferenceSignal::channels(specs)
            }
            ReferenceConfig::Samples { samples } => {
                ReferenceSignal::from_samples(matrix_from_rows(samples, "reference samples")?)
            }
        }
    }
}

/// How a non-square plant is made trackable. `keep` indices are 1-based,
/// matching the CSV column names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonSquareConfig {
    pub mode: String,
    #[serde(default)]
    pub keep: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonSquareMode {
    None,
    InputTransform,
    Project,
    DropOutputs(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub controller: ControllerChoice,
    #[serde(default)]
    pub lqg_weights: Option<LqgWeightConfig>,
    pub reference: ReferenceConfig,
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub x0_hat: Option<Vec<f64>>,
    #[serde(default)]
    pub p0: Option<ScalarOrMatrix>,
    #[serde(default)]
    pub nonsquare: Option<NonSquareConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_runs() -> usize {
    100
}

/// A fully resolved experiment: the plant actually simulated, the controller
/// choice, and run bookkeeping.
pub struct ResolvedExperiment {
    pub scenario: Scenario,
    pub runs: usize,
    pub base_seed: u64,
    pub out: Option<PathBuf>,
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// The model as written in the config, before any squaring.
    pub fn raw_model(&self, config_dir: &Path) -> Result<StateSpaceModel> {
        match &self.model {
            ModelSource::File { file } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    config_dir.join(file)
                };
                StateSpaceModel::from_json_file(&path)
            }
            ModelSource::Inline {
                a,
                b,
                c,
                dt,
                continuous,
            } => {
                let a = matrix_from_rows(a, "A")?;
                let b = matrix_from_rows(b, "B")?;
                let c = matrix_from_rows(c, "C")?;
                if *continuous {
                    if *dt <= 0.0 {
                        return Err(Error::Config(
                            "continuous models need dt > 0 for discretization".into(),
                        ));
                    }
                    StateSpaceModel::from_continuous(a, b, c, *dt)
                } else {
                    StateSpaceModel::new(a, b, c, *dt)
                }
            }
        }
    }

    pub fn mode(&self) -> Result<NonSquareMode> {
        match &self.nonsquare {
            None => Ok(NonSquareMode::None),
            Some(ns) => match ns.mode.as_str() {
                "none" => Ok(NonSquareMode::None),
                "input-transform" => Ok(NonSquareMode::InputTransform),
                "project" => Ok(NonSquareMode::Project),
                "drop-outputs" => {
                    if ns.keep.is_empty() {
                        return Err(Error::Config(
                            "drop-outputs mode needs a non-empty keep list".into(),
                        ));
                    }
                    Ok(NonSquareMode::DropOutputs(ns.keep.clone()))
                }
                other => Err(Error::Config(format!(
                    "unknown nonsquare mode {other:?} \
                     (expected none, input-transform, project or drop-outputs)"
                ))),
            },
        }
    }

    pub fn resolve(
        &self,
        config_dir: &Path,
        seed_override: Option<u64>,
        runs_override: Option<usize>,
    ) -> Result<ResolvedExperiment> {
        let raw_model = self.raw_model(config_dir)?;
        let mode = self.mode()?;
        let mut warnings = Vec::new();

        let reference = self.reference.build()?;
        if reference.output_dim() != raw_model.output_dim() {
            return Err(Error::Config(format!(
                "reference has {} channels but the model has {} outputs",
                reference.output_dim(),
                raw_model.output_dim()
            )));
        }
        if let Some(steps) = reference.defined_steps() {
            if steps < self.horizon + 1 {
                return Err(Error::Config(format!(
                    "sampled reference defines {steps} steps; horizon {} needs {}",
                    self.horizon,
                    self.horizon + 1
                )));
            }
        }

        let lqg_weights_for = |model: &StateSpaceModel| -> Result<LqgWeights> {
            let mut w = LqgWeights::default_for(model);
            if let Some(cfg) = &self.lqg_weights {
                if let Some(sc) = &cfg.state_cost {
                    w.state_cost = sc.build(model.state_dim(), "lqg_weights.state_cost")?;
                }
                if let Some(ic) = &cfg.input_cost {
                    w.input_cost = ic.build(model.input_dim(), "lqg_weights.input_cost")?;
                }
            }
            Ok(w)
        };

        // Resolve the plant, controller and reference per non-square mode.
        let (model, controller, reference, raw_reference) = match &mode {
            NonSquareMode::None => {
                let report = raw_model.check_feasibility();
                match self.controller {
                    ControllerChoice::Cir => {
                        if !report.is_trackable {
                            return Err(Error::Infeasible(format!(
                                "model is not trackable (square: {}, rank(CB) = {}); \
                                 pick a nonsquare mode",
                                report.is_square, report.rank_cb
                            )));
                        }
                        if report.min_phase == Some(false) {
                            warnings.push(
                                "system is not minimum phase: bounded control inputs are \
                                 not guaranteed"
                                    .into(),
                            );
                        }
                        (raw_model, ControllerSpec::Cir, reference, None)
                    }
                    ControllerChoice::Lqg => {
                        let w = lqg_weights_for(&raw_model)?;
                        (raw_model, ControllerSpec::Lqg(w), reference, None)
                    }
                }
            }
            NonSquareMode::InputTransform => {
                self.require_cir("input-transform")?;
                let transform = squaring::make_input_transform(&raw_model)?;
                let report = transform.squared_model().check_feasibility();
                if report.min_phase == Some(false) {
                    warnings.push(
                        "squared system is not minimum phase: bounded control inputs are \
                         not guaranteed"
                            .into(),
                    );
                }
                (
                    raw_model,
                    ControllerSpec::CirLifted(transform),
                    reference,
                    None,
                )
            }
            NonSquareMode::Project => {
                self.require_cir("project")?;
                if raw_model.output_dim() <= raw_model.input_dim() {
                    return Err(Error::Config(
                        "project mode applies to tall systems (l > p)".into(),
                    ));
                }
                if self.horizon < 1 {
                    return Err(Error::Config("project mode needs horizon >= 1".into()));
                }
                let batch = squaring::batch_matrices(&raw_model, self.horizon)?;
                let stacked = reference.stacked(1, self.horizon);
                let projected = squaring::project_reference(&stacked, &batch)?;
                let l = raw_model.output_dim();
                let mut samples = DMatrix::zeros(self.horizon + 1, l);
                samples.row_mut(0).copy_from(&reference.sample(0).transpose());
                for k in 1..=self.horizon {
                    samples
                        .row_mut(k)
                        .copy_from(&projected.rows((k - 1) * l, l).transpose());
                }
                let projected_ref = ReferenceSignal::from_samples(samples)?;
                (
                    raw_model,
                    ControllerSpec::Cir,
                    projected_ref,
                    Some(reference),
                )
            }
            NonSquareMode::DropOutputs(keep_1based) => {
                let keep = to_zero_based(keep_1based, raw_model.output_dim())?;
                let dropped = squaring::drop_outputs(&raw_model, &keep)?;
                let report = dropped.check_feasibility();
                if report.min_phase == Some(false) {
                    warnings.push(
                        "kept-output system is not minimum phase: bounded control inputs \
                         are not guaranteed"
                            .into(),
                    );
                }
                let reference = restrict_reference(&reference, &keep)?;
                let controller = match self.controller {
                    ControllerChoice::Cir => ControllerSpec::Cir,
                    ControllerChoice::Lqg => ControllerSpec::Lqg(lqg_weights_for(&dropped)?),
                };
                (dropped, controller, reference, None)
            }
        };

        let noise = NoiseSpec::new(
            self.noise.q.build(model.state_dim(), "noise.q")?,
            self.noise.r.build(model.output_dim(), "noise.r")?,
            self.noise.seed,
        )?;

        let n = model.state_dim();
        let x0 = match &self.x0 {
            None => DVector::zeros(n),
            Some(v) => vector_of_len(v, n, "x0")?,
        };
        let x0_hat = match &self.x0_hat {
            None => DVector::zeros(n),
            Some(v) => vector_of_len(v, n, "x0_hat")?,
        };
        let p0 = match &self.p0 {
            None => DMatrix::identity(n, n),
            Some(s) => s.build(n, "p0")?,
        };

        let base_seed = seed_override.unwrap_or(self.noise.seed);
        let runs = runs_override.unwrap_or(self.runs);
        if runs < 1 {
            return Err(Error::Config("runs must be >= 1".into()));
        }

        let mut scenario = Scenario::new(model, noise, controller, reference, self.horizon)?
            .with_x0(x0)
            .with_initial_estimate(x0_hat, p0);
        if let Some(raw) = raw_reference {
            scenario = scenario.with_raw_reference(raw);
        }

        Ok(ResolvedExperiment {
            scenario,
            runs,
            base_seed,
            out: self.out.clone(),
            warnings,
        })
    }

    fn require_cir(&self, mode: &str) -> Result<()> {
        match self.controller {
            ControllerChoice::Cir => Ok(()),
            ControllerChoice::Lqg => Err(Error::Config(format!(
                "{mode} mode only supports the cir controller"
            ))),
        }
    }
}

fn to_zero_based(keep: &[usize], l: usize) -> Result<Vec<usize>> {
    keep.iter()
        .map(|&i| {
            if i == 0 {
                Err(Error::Config(
                    "keep indices are 1-based; 0 is out of range".into(),
                ))
            } else if i > l {
                Err(Error::Config(format!(
                    "keep index {i} out of range for {l} outputs"
                )))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

fn restrict_reference(reference: &ReferenceSignal, keep: &[usize]) -> Result<ReferenceSignal> {
    match reference {
        ReferenceSignal::Channels(specs) => {
            ReferenceSignal::channels(keep.iter().map(|&i| specs[i].clone()).collect())
        }
        ReferenceSignal::Samples(m) => {
            let rows = m.nrows();
            let picked = DMatrix::from_fn(rows, keep.len(), |r, c| m[(r, keep[c])]);
            ReferenceSignal::from_samples(picked)
        }
    }
}

fn vector_of_len(v: &[f64], n: usize, name: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::Config(format!(
            "{name} has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}
