use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::StateSpaceModel;

/// Per-step record of a closed-loop run. All sequences have `horizon + 1`
/// entries; `u_applied[k]` is the input applied during step k (the final row
/// carries zeros because no input follows the last measurement), and
/// `y_pred[k]` is the controller's prediction of `y[k]` made one step
/// earlier (zeros at k = 0).
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub dt: f64,
    pub x_true: Vec<DVector<f64>>,
    pub y_meas: Vec<DVector<f64>>,
    pub y_ref: Vec<DVector<f64>>,
    pub u_applied: Vec<DVector<f64>>,
    pub y_pred: Vec<DVector<f64>>,
    /// Original reference when the tracked one was projected first.
    pub raw_reference: Option<Vec<DVector<f64>>>,
    pub seed: u64,
    pub model_hash: u64,
    pub controller_name: String,
}

impl SimulationTrace {
    /// Number of recorded steps, horizon + 1.
    pub fn len(&self) -> usize {
        self.y_meas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_meas.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.y_meas.first().map_or(0, |y| y.len())
    }

    pub fn input_dim(&self) -> usize {
        self.u_applied.first().map_or(0, |u| u.len())
    }

    /// Tracking error `y_ref - y` at step k.
    pub fn tracking_error(&self, k: usize) -> DVector<f64> {
        &self.y_ref[k] - &self.y_meas[k]
    }

    /// Mean over steps of the squared tracking error, per output channel.
    pub fn mse_per_channel(&self) -> Vec<f64> {
        let l = self.output_dim();
        let steps = self.len();
        let mut acc = vec![0.0; l];
        for k in 0..steps {
            let e = self.tracking_error(k);
            for ch in 0..l {
                acc[ch] += e[ch] * e[ch];
            }
        }
        acc.iter().map(|s| s / steps as f64).collect()
    }

    fn time_at(&self, k: usize) -> f64 {
        if self.dt > 0.0 {
            self.dt * k as f64
        } else {
            k as f64
        }
    }

    /// Writes `k,t,y_ref_1..l,y_1..l,u_1..p,err_1..l`, plus trailing
    /// `y_refraw_1..l` columns when a pre-projection reference is attached.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let l = self.output_dim();
        let p = self.input_dim();
        let mut header = String::from("k,t");
        for i in 1..=l {
            header.push_str(&format!(",y_ref_{i}"));
        }
        for i in 1..=l {
            header.push_str(&format!(",y_{i}"));
        }
        for i in 1..=p {
            header.push_str(&format!(",u_{i}"));
        }
        for i in 1..=l {
            header.push_str(&format!(",err_{i}"));
        }
        if self.raw_reference.is_some() {
            for i in 1..=l {
                header.push_str(&format!(",y_refraw_{i}"));
            }
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!("{k},{}", self.time_at(k));
            for v in self.y_ref[k].iter() {
                line.push_str(&format!(",{v}"));
            }
            for v in self.y_meas[k].iter() {
                line.push_str(&format!(",{v}"));
            }
            for v in self.u_applied[k].iter() {
                line.push_str(&format!(",{v}"));
            }
            let err = self.tracking_error(k);
            for v in err.iter() {
                line.push_str(&format!(",{v}"));
            }
            if let Some(raw) = &self.raw_reference {
                for v in raw[k].iter() {
                    line.push_str(&format!(",{v}"));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Aggregate of repeated noisy runs: per-step mean and sample standard
/// deviation of the tracking error, and the per-channel MSE averaged over
/// runs.
#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub runs: usize,
    pub dt: f64,
    /// (horizon + 1) x l
    pub mean_error: DMatrix<f64>,
    /// (horizon + 1) x l, zero when runs = 1
    pub std_error: DMatrix<f64>,
    pub mse_per_channel: Vec<f64>,
}

impl MonteCarloSummary {
    fn time_at(&self, k: usize) -> f64 {
        if self.dt > 0.0 {
            self.dt * k as f64
        } else {
            k as f64
        }
    }

    /// Writes `k,t,mean_err_1..l,std_err_1..l`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let l = self.mean_error.ncols();
        let mut header = String::from("k,t");
        for i in 1..=l {
            header.push_str(&format!(",mean_err_{i}"));
        }
        for i in 1..=l {
            header.push_str(&format!(",std_err_{i}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.mean_error.nrows() {
            let mut line = format!("{k},{}", self.time_at(k));
            for ch in 0..l {
                line.push_str(&format!(",{}", self.mean_error[(k, ch)]));
            }
            for ch in 0..l {
                line.push_str(&format!(",{}", self.std_error[(k, ch)]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// `mse,<channel>,<value>` summary lines (channels are 1-based).
    pub fn summary_lines(&self) -> String {
        mse_summary_lines(&self.mse_per_channel)
    }
}

pub fn mse_summary_lines(mse: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in mse.iter().enumerate() {
        out.push_str(&format!("mse,{},{}\n", i + 1, v));
    }
    out
}

/// Order-independent fingerprint of the model a trace was produced from
/// (FNV-1a over dimensions and entry bit patterns).
pub fn model_fingerprint(model: &StateSpaceModel) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for m in [model.a(), model.b(), model.c()] {
        eat(&(m.nrows() as u64).to_le_bytes());
        eat(&(m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            eat(&v.to_bits().to_le_bytes());
        }
    }
    eat(&model.dt().to_bits().to_le_bytes());
    h
}
