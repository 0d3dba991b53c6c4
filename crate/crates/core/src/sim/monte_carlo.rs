//! Seeded Monte Carlo averaging over independent closed-loop runs.
//!
//! Run i uses seed `base_seed + i` and owns its RNG stream and controller
//! state, so runs can execute in any order; aggregation walks the collected
//! traces in index order, which keeps the summary byte-identical whether or
//! not the parallel feature is active.

use nalgebra::DMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{MonteCarloSummary, Scenario, SimulationTrace};

/// Runs the scenario `runs` times and aggregates tracking-error statistics.
/// Parallel across runs when the `parallel` feature is enabled (the
/// default), sequential otherwise.
pub fn monte_carlo(scenario: &Scenario, runs: usize, base_seed: u64) -> Result<MonteCarloSummary> {
    #[cfg(feature = "parallel")]
    {
        let traces = (0..runs)
            .into_par_iter()
            .map(|i| scenario.run(base_seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        summarize(scenario, traces)
    }
    #[cfg(not(feature = "parallel"))]
    {
        monte_carlo_sequential(scenario, runs, base_seed)
    }
}

/// Single-threaded variant, always available; produces the same summary as
/// [`monte_carlo`] for the same inputs.
pub fn monte_carlo_sequential(
    scenario: &Scenario,
    runs: usize,
    base_seed: u64,
) -> Result<MonteCarloSummary> {
    let traces = (0..runs)
        .map(|i| scenario.run(base_seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    summarize(scenario, traces)
}

fn summarize(scenario: &Scenario, traces: Vec<SimulationTrace>) -> Result<MonteCarloSummary> {
    let runs = traces.len();
    if runs == 0 {
        return Err(Error::InvalidInput("monte carlo needs runs >= 1".into()));
    }
    let steps = scenario.horizon + 1;
    let l = scenario.model.output_dim();

    let mut mean = DMatrix::zeros(steps, l);
    for t in &traces {
        for k in 0..steps {
            let e = t.tracking_error(k);
            for ch in 0..l {
                mean[(k, ch)] += e[ch];
            }
        }
    }
    mean /= runs as f64;

    let mut std = DMatrix::zeros(steps, l);
    if runs > 1 {
        for t in &traces {
            for k in 0..steps {
                let e = t.tracking_error(k);
                for ch in 0..l {
                    let d = e[ch] - mean[(k, ch)];
                    std[(k, ch)] += d * d;
                }
            }
        }
        std /= (runs - 1) as f64;
        std.apply(|v| *v = v.sqrt());
    }

    let mut mse = vec![0.0; l];
    for t in &traces {
        for (ch, v) in t.mse_per_channel().into_iter().enumerate() {
            mse[ch] += v;
        }
    }
    for v in &mut mse {
        *v /= runs as f64;
    }

    Ok(MonteCarloSummary {
        runs,
        dt: scenario.model.dt(),
        mean_error: mean,
        std_error: std,
        mse_per_channel: mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::NoiseSpec;
    use crate::sim::{ChannelSpec, ControllerSpec, ReferenceSignal};
    use crate::systems;

    fn example_scenario(q: f64, r: f64, horizon: usize) -> Scenario {
        let m = systems::spring_damper();
        let noise = NoiseSpec::isotropic(&m, q, r, 0).unwrap();
        let refsig = ReferenceSignal::channels(vec![
            ChannelSpec::sawtooth(1.0, 100.0),
            ChannelSpec::sine(1.0, 100.0),
        ])
        .unwrap();
        Scenario::new(m, noise, ControllerSpec::Cir, refsig, horizon).unwrap()
    }

    #[test]
    fn single_run_summary_is_that_run() {
        let s = example_scenario(1e-4, 1e-4, 30);
        let summary = monte_carlo(&s, 1, 77).unwrap();
        let trace = s.run(77).unwrap();
        assert_eq!(summary.runs, 1);
        assert_eq!(summary.std_error.amax(), 0.0);
        for k in 0..=30 {
            let e = trace.tracking_error(k);
            for ch in 0..2 {
                assert!((summary.mean_error[(k, ch)] - e[ch]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn noise_free_std_is_zero() {
        let s = example_scenario(0.0, 0.0, 20);
        let summary = monte_carlo(&s, 5, 1).unwrap();
        assert_eq!(summary.std_error.amax(), 0.0);
    }

    #[test]
    fn sequential_and_default_agree_exactly() {
        let s = example_scenario(1e-4, 1e-4, 40);
        let a = monte_carlo(&s, 16, 11).unwrap();
        let b = monte_carlo_sequential(&s, 16, 11).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(a.mse_per_channel, b.mse_per_channel);
    }

    #[test]
    fn mean_error_shrinks_with_more_runs() {
        // CLT scaling: steady-state |mean error| at 400 runs is roughly half
        // that at 100 runs (ratio bracketed loosely).
        let s = example_scenario(1e-4, 1e-4, 120);
        let small = monte_carlo(&s, 25, 300).unwrap();
        let large = monte_carlo(&s, 400, 300).unwrap();
        let late = 60..=120usize;
        let avg_abs = |m: &DMatrix<f64>| {
            let mut acc = 0.0;
            let mut count = 0;
            for k in late.clone() {
                for ch in 0..2 {
                    acc += m[(k, ch)].abs();
                    count += 1;
                }
            }
            acc / count as f64
        };
        let ratio = avg_abs(&large.mean_error) / avg_abs(&small.mean_error);
        assert!(
            (0.2..0.8).contains(&ratio),
            "expected roughly 1/sqrt(16) shrink, got ratio {ratio}"
        );
    }
}
