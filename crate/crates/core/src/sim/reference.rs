use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Waveform of one reference channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    /// Constant `offset + amplitude` from step 0.
    Step,
    /// `offset + amplitude * sin(2*pi*k/period + phase)`, phase in radians.
    Sine,
    /// Linear ramp from `offset` to `offset + amplitude` over one period,
    /// resetting instantly; `phase` shifts in steps.
    Sawtooth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub amplitude: f64,
    /// Period in steps; ignored by `Step`.
    pub period: f64,
    pub offset: f64,
    pub phase: f64,
}

impl ChannelSpec {
    pub fn step(amplitude: f64) -> Self {
        ChannelSpec {
            kind: ChannelKind::Step,
            amplitude,
            period: 1.0,
            offset: 0.0,
            phase: 0.0,
        }
    }

    pub fn sine(amplitude: f64, period: f64) -> Self {
        ChannelSpec {
            kind: ChannelKind::Sine,
            amplitude,
            period,
            offset: 0.0,
            phase: 0.0,
        }
    }

    pub fn sawtooth(amplitude: f64, period: f64) -> Self {
        ChannelSpec {
            kind: ChannelKind::Sawtooth,
            amplitude,
            period,
            offset: 0.0,
            phase: 0.0,
        }
    }

    fn value_at(&self, k: usize) -> f64 {
        match self.kind {
            ChannelKind::Step => self.offset + self.amplitude,
            ChannelKind::Sine => {
                self.offset
                    + self.amplitude
                        * (2.0 * std::f64::consts::PI * k as f64 / self.period + self.phase).sin()
            }
            ChannelKind::Sawtooth => {
                let s = (k as f64 + self.phase).rem_euclid(self.period);
                self.offset + self.amplitude * (s / self.period)
            }
        }
    }
}

/// Time-indexed desired output sequence with one-step preview access.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    /// Parametric per-channel waveforms, defined for every step.
    Channels(Vec<ChannelSpec>),
    /// Explicit samples, one row per step; sampling past the last row clamps
    /// to it.
    Samples(DMatrix<f64>),
}

impl ReferenceSignal {
    pub fn channels(specs: Vec<ChannelSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidInput("reference needs at least one channel".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            if s.kind != ChannelKind::Step && !(s.period > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "reference channel {i}: period must be > 0"
                )));
            }
        }
        Ok(ReferenceSignal::Channels(specs))
    }

    pub fn from_samples(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidInput("sample reference must be non-empty".into()));
        }
        Ok(ReferenceSignal::Samples(samples))
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ReferenceSignal::Channels(s) => s.len(),
            ReferenceSignal::Samples(m) => m.ncols(),
        }
    }

    /// Number of explicitly defined steps, if finite.
    pub fn defined_steps(&self) -> Option<usize> {
        match self {
            ReferenceSignal::Channels(_) => None,
            ReferenceSignal::Samples(m) => Some(m.nrows()),
        }
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        match self {
            ReferenceSignal::Channels(specs) => {
                DVector::from_fn(specs.len(), |i, _| specs[i].value_at(k))
            }
            ReferenceSignal::Samples(m) => {
                let row = k.min(m.nrows() - 1);
                m.row(row).transpose()
            }
        }
    }

    /// Stacks `count` consecutive samples starting at `from` into one long
    /// vector (channel-major within each step), the layout batch matrices use.
    pub fn stacked(&self, from: usize, count: usize) -> DVector<f64> {
        let l = self.output_dim();
        let mut out = DVector::zeros(l * count);
        for i in 0..count {
            out.rows_mut(i * l, l).copy_from(&self.sample(from + i));
        }
        out
    }
}
