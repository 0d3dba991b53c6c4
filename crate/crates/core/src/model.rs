//! Discrete LTI plant representation, the noise-free reference system, and
//! the rank/trackability checks the controller relies on.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matcore::{self, Spectrum};

/// Discrete-time LTI triple `(A, B, C)` with no feedthrough term.
///
/// `dt` is the sampling period in seconds; 0 means "already discrete with
/// unit step". Models are immutable after construction and freely shareable
/// across concurrent simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    dt: f64,
}

/// Trackability and conditioning facts about a model.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub rank_b: usize,
    pub rank_cb: usize,
    pub ctrb_rank: usize,
    pub obsv_rank: usize,
    pub is_square: bool,
    pub is_trackable: bool,
    pub eigenvalues: Spectrum,
    /// Invariant zeros; absent when the system is non-square or the pencil
    /// computation is not applicable.
    pub zeros: Option<Spectrum>,
    /// `None` means unknown (non-square path).
    pub min_phase: Option<bool>,
}

impl StateSpaceModel {
    /// Build a discrete model, validating dimensions and finiteness.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, dt: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("state dimension must be positive".into()));
        }
        if b.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "C has {} cols, expected {n}",
                c.ncols()
            )));
        }
        if b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::InvalidInput(
                "input and output dimensions must be positive".into(),
            ));
        }
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be >= 0, got {dt}")));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C")] {
            matcore::check_finite(m, name)?;
        }
        Ok(StateSpaceModel { a, b, c, dt })
    }

    /// ZOH-discretize a continuous-time triple at sampling period `dt`.
    pub fn from_continuous(
        ac: DMatrix<f64>,
        bc: DMatrix<f64>,
        c: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let (ad, bd) = matcore::zoh_discretize(&ac, &bc, dt)?;
        StateSpaceModel::new(ad, bd, c, dt)
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

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension p.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension l.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Time corresponding to step `k` (unit step when dt = 0).
    pub fn step_time(&self, k: usize) -> f64 {
        if self.dt > 0.0 {
            self.dt * k as f64
        } else {
            k as f64
        }
    }

    /// One noise-free step of the reference system: returns
    /// `(x_ref_next, y_ref_next)`.
    pub fn reference_step(
        &self,
        x_ref: &DVector<f64>,
        u_ref: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_state(x_ref)?;
        self.check_input(u_ref)?;
        let x_next = &self.a * x_ref + &self.b * u_ref;
        let y_next = &self.c * &x_next;
        Ok((x_next, y_next))
    }

    /// Invariant zeros of the square pencil; errors for non-square systems.
    pub fn invariant_zeros(&self) -> Result<Spectrum> {
        matcore::invariant_zeros(&self.a, &self.b, &self.c)
    }

    /// Rank, squareness, trackability and phase facts in one pass.
    ///
    /// Trackable here means square with `rank(CB) = l`, the condition under
    /// which the reconstruction gain can reproduce any reference; failures
    /// are reported, never raised.
    pub fn check_feasibility(&self) -> FeasibilityReport {
        let l = self.output_dim();
        let p = self.input_dim();
        let rank_b = matcore::numerical_rank(&self.b, 0.0).unwrap_or(0);
        let cb = &self.c * &self.b;
        let rank_cb = matcore::numerical_rank(&cb, 0.0).unwrap_or(0);
        let ctrb_rank = matcore::ctrb_rank(&self.a, &self.b).unwrap_or(0);
        let obsv_rank = matcore::obsv_rank(&self.a, &self.c).unwrap_or(0);
        let is_square = l == p;
        let is_trackable = is_square && rank_cb == l;
        let eigenvalues = matcore::eigenvalues(&self.a)
            .expect("validated square matrix has eigenvalues");
        let zeros = if is_square {
            self.invariant_zeros().ok()
        } else {
            None
        };
        let min_phase = zeros.as_ref().map(|z| z.inside_unit_circle(1e-9));
        FeasibilityReport {
            rank_b,
            rank_cb,
            ctrb_rank,
            obsv_rank,
            is_square,
            is_trackable,
            eigenvalues,
            zeros,
            min_phase,
        }
    }

    pub(crate) fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::InvalidInput(format!(
                "state vector has length {}, expected {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "input vector has length {}, expected {}",
                u.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_output(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.output_dim() {
            return Err(Error::InvalidInput(format!(
                "output vector has length {}, expected {}",
                y.len(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Load a model from JSON with keys `A`, `B`, `C` (arrays of row arrays)
    /// and `dt`; set `"continuous": true to request ZOH discretization of the
    /// given matrices at `dt`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawModel =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("model JSON: {e}")))?;
        raw.build()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawModel {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub dt: f64,
    #[serde(default)]
    pub continuous: bool,
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{name}: matrix has no rows")));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(Error::Config(format!("{name}: matrix has empty rows")));
    }
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

impl RawModel {
    pub(crate) fn build(&self) -> Result<StateSpaceModel> {
        let a = matrix_from_rows(&self.a, "A")?;
        let b = matrix_from_rows(&self.b, "B")?;
        let c = matrix_from_rows(&self.c, "C")?;
        if self.continuous {
            if self.dt <= 0.0 {
                return Err(Error::Config(
                    "continuous models need dt > 0 for discretization".into(),
                ));
            }
            StateSpaceModel::from_continuous(a, b, c, self.dt)
        } else {
            StateSpaceModel::new(a, b, c, self.dt)
        }
    }
}
