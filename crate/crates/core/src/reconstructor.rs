//! Unbiased minimum-variance input reconstruction: a Kalman-like recursion
//! whose gain is constrained so that `L * CB = B`, which makes the state and
//! input estimates unbiased despite the inputs being unknown.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{apply_floor, symmetrize, NoiseSpec};
use crate::matcore;
use crate::model::StateSpaceModel;

/// Relative singular-value threshold on `V^T Rt^{-1} V` below which the
/// reconstruction is declared infeasible (signals rank(CB) < p).
const FEASIBILITY_THRESHOLD: f64 = 1e-10;

/// Output of one gain computation.
#[derive(Debug, Clone)]
pub struct UmvGain {
    /// The constrained gain `L` (n x l), satisfying `L * CB = B`.
    pub gain: DMatrix<f64>,
    /// Updated covariance `P_{k+1|k+1}`.
    pub p_post: DMatrix<f64>,
    /// Innovation covariance `Rt = C P C^T + R`.
    pub innov_cov: DMatrix<f64>,
}

/// Computes the constrained gain from an already-advanced prior covariance
/// `P_{k+1|k}`.
///
/// With `V = CB` and `F = P C^T`:
/// the weighted left inverse `Pi = (V^T Rt^{-1} V)^{-1} V^T Rt^{-1}` gives
/// `L = B Pi + F Rt^{-1} (I - V Pi)` and
/// `P_post = P - F Rt^{-1} F^T`.
/// The returned gain satisfies `L V = B` up to rounding for any symmetric
/// positive definite `Rt`, which is the identity the whole controller
/// depends on.
pub fn umv_gain(
    p_prior: &DMatrix<f64>,
    model: &StateSpaceModel,
    noise: &NoiseSpec,
) -> Result<UmvGain> {
    let n = model.state_dim();
    let l = model.output_dim();
    if p_prior.shape() != (n, n) {
        return Err(Error::InvalidInput(format!(
            "prior covariance has shape {:?}, expected ({n}, {n})",
            p_prior.shape()
        )));
    }
    let b = model.b();
    let c = model.c();
    let cb = c * b;

    let innov_cov = apply_floor(symmetrize(&(c * p_prior * c.transpose() + noise.r())));
    let cross_cov = p_prior * c.transpose();

    // Pi = (V^T Rt^{-1} V)^{-1} V^T Rt^{-1} is the Rt^{-1}-weighted left
    // inverse of V. Forming the Gram matrix squares Rt's condition number,
    // so compute it as pinv(G V) G with G = Rt^{-1/2} instead: identical in
    // exact arithmetic, and Pi * V = I holds to roughly eps * cond(G V).
    if innov_cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "innovation covariance has non-finite entries".into(),
        ));
    }
    let eig = innov_cov.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.max().max(crate::estimator::COVARIANCE_FLOOR);
    // collapsed directions (exactly noise-free recursions) are ridged, not
    // fatal, mirroring the Kalman update
    let ridge = lam_max / crate::estimator::MAX_CONDITION;
    let mut inv_sqrt = eig.eigenvectors.clone();
    for j in 0..l {
        let lam = eig.eigenvalues[j].max(ridge);
        inv_sqrt.column_mut(j).scale_mut(1.0 / lam.sqrt());
    }
    let g = &inv_sqrt * eig.eigenvectors.transpose(); // Rt^{-1/2}, symmetric
    let rt_inv = &g * &g;

    let v_weighted = &g * &cb;
    let sv = v_weighted.clone().singular_values();
    if sv.min() < FEASIBILITY_THRESHOLD * sv.max() || sv.max() == 0.0 {
        return Err(Error::Infeasible(
            "V^T Rt^{-1} V is singular: rank(CB) < p, square the system first".into(),
        ));
    }
    let cb_left_inv = crate::matcore::pinv(&v_weighted, 0.0)? * &g; // Pi, p x l

    let f_rti = &cross_cov * &rt_inv;
    let gain = b * &cb_left_inv
        + &f_rti * (DMatrix::identity(l, l) - &cb * &cb_left_inv);
    let p_post = symmetrize(&(p_prior - &f_rti * cross_cov.transpose()));

    Ok(UmvGain {
        gain,
        p_post,
        innov_cov,
    })
}

/// UMV filter state. Values in, values out; the cached `CB` and `B^+` never
/// change because the model is immutable.
#[derive(Debug, Clone)]
pub struct UmvState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub last_gain: Option<DMatrix<f64>>,
    cb: DMatrix<f64>,
    b_pinv: DMatrix<f64>,
}

impl UmvState {
    pub fn new(model: &StateSpaceModel, x_hat: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        model.check_state(&x_hat)?;
        Ok(UmvState {
            x_hat,
            p,
            last_gain: None,
            cb: model.c() * model.b(),
            b_pinv: matcore::pinv(model.b(), 0.0)?,
        })
    }

    pub fn default_for(model: &StateSpaceModel) -> Result<Self> {
        let n = model.state_dim();
        UmvState::new(model, DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn cb(&self) -> &DMatrix<f64> {
        &self.cb
    }

    pub fn b_pinv(&self) -> &DMatrix<f64> {
        &self.b_pinv
    }

    /// One reconstruction step given the next measurement: predicts open
    /// loop, advances the covariance, computes the constrained gain and
    /// returns the new state together with the input estimate `u_hat_k`.
    pub fn step(
        &self,
        model: &StateSpaceModel,
        noise: &NoiseSpec,
        y_next: &DVector<f64>,
    ) -> Result<(UmvState, DVector<f64>)> {
        model.check_output(y_next)?;
        let x_pred = model.a() * &self.x_hat;
        let p_prior = symmetrize(&(model.a() * &self.p * model.a().transpose() + noise.q()));
        let g = umv_gain(&p_prior, model, noise)?;
        let innovation = y_next - model.c() * &x_pred;
        let gain_nu = &g.gain * &innovation;
        let u_hat = &self.b_pinv * &gain_nu;
        let next = UmvState {
            x_hat: x_pred + gain_nu,
            p: g.p_post,
            last_gain: Some(g.gain),
            cb: self.cb.clone(),
            b_pinv: self.b_pinv.clone(),
        };
        Ok((next, u_hat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn scalar_gain_is_half() {
        // n = p = l = 1, B = 1, C = 2: Pi = 1/2, the cross term vanishes,
        // so L = 0.5 for any prior covariance and R > 0.
        let m = StateSpaceModel::new(dmatrix![0.9], dmatrix![1.0], dmatrix![2.0], 0.0).unwrap();
        for (p_prior, r) in [(0.7, 0.3), (5.0, 1.0), (0.0, 2.0)] {
            let noise = NoiseSpec::isotropic(&m, 0.0, r, 0).unwrap();
            let g = umv_gain(&dmatrix![p_prior], &m, &noise).unwrap();
            assert_abs_diff_eq!(g.gain[(0, 0)], 0.5, epsilon = 1e-12);
            let lcb = &g.gain * (m.c() * m.b());
            assert_abs_diff_eq!(lcb[(0, 0)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_step_arithmetic() {
        // With the gain of 0.5 an innovation of 2 reconstructs u = 1.
        let m = StateSpaceModel::new(dmatrix![0.0], dmatrix![1.0], dmatrix![2.0], 0.0).unwrap();
        let noise = NoiseSpec::isotropic(&m, 0.0, 1.0, 0).unwrap();
        let st = UmvState::new(&m, dvector![0.0], dmatrix![1.0]).unwrap();
        let (_, u_hat) = st.step(&m, &noise, &dvector![2.0]).unwrap();
        assert_abs_diff_eq!(u_hat[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gain_constraint_along_noisy_run() {
        let m = systems::spring_damper();
        let noise = NoiseSpec::isotropic(&m, 1e-4, 1e-4, 0).unwrap();
        let bound = 1e-8 * (1.0 + m.b().norm());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut st = UmvState::default_for(&m).unwrap();
        for _ in 0..200 {
            let y: DVector<f64> =
                DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (next, _) = st.step(&m, &noise, &y).unwrap();
            let gain = next.last_gain.as_ref().unwrap();
            let resid = (gain * st.cb() - m.b()).norm();
            assert!(resid <= bound, "constraint residual {resid}");
            // B^+ L CB = I_p, the left-inversion identity
            let ident = st.b_pinv() * gain * st.cb();
            assert_abs_diff_eq!(ident, DMatrix::identity(2, 2), epsilon = 1e-8);
            st = next;
        }
    }

    #[test]
    fn tall_system_gain_constraint() {
        // l = 2 > p = 1: V = CB = [1, 0]^T, Pi V is the 1x1 identity.
        let m = systems::oscillator_chain();
        let noise = NoiseSpec::isotropic(&m, 0.01, 0.01, 0).unwrap();
        let g = umv_gain(&DMatrix::identity(4, 4), &m, &noise).unwrap();
        let v = m.c() * m.b();
        assert_abs_diff_eq!((&g.gain * &v), m.b().clone(), epsilon = 1e-8);
    }

    #[test]
    fn rank_deficient_cb_is_infeasible() {
        // CB = 0: reconstruction cannot proceed.
        let m = StateSpaceModel::new(
            dmatrix![0.5, 0.0; 0.0, 0.5],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            0.0,
        )
        .unwrap();
        let noise = NoiseSpec::isotropic(&m, 0.1, 0.1, 0).unwrap();
        let r = umv_gain(&DMatrix::identity(2, 2), &m, &noise);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn zero_innovation_reconstructs_zero() {
        let m = systems::spring_damper();
        let noise = NoiseSpec::isotropic(&m, 1e-3, 1e-3, 0).unwrap();
        let st = UmvState::new(&m, dvector![0.3, -0.1, 0.2, 0.0], DMatrix::identity(4, 4))
            .unwrap();
        let x_pred = m.a() * &st.x_hat;
        let y_next = m.c() * &x_pred;
        let (next, u_hat) = st.step(&m, &noise, &y_next).unwrap();
        assert!(u_hat.amax() < 1e-12);
        assert_abs_diff_eq!(next.x_hat, x_pred, epsilon = 1e-12);
    }

    #[test]
    fn covariance_recursion_matches_independent_oracle() {
        let m = systems::spring_damper();
        let noise = NoiseSpec::isotropic(&m, 2e-3, 5e-3, 0).unwrap();
        let mut st = UmvState::default_for(&m).unwrap();
        let mut p_oracle = DMatrix::<f64>::identity(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let y: DVector<f64> =
                DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (next, _) = st.step(&m, &noise, &y).unwrap();
            // longhand covariance advance and correction
            let prior = m.a() * &p_oracle * m.a().transpose() + noise.q();
            let prior = (&prior + prior.transpose()) * 0.5;
            let rt = m.c() * &prior * m.c().transpose() + noise.r();
            let f = &prior * m.c().transpose();
            let post = &prior - &f * rt.try_inverse().unwrap() * f.transpose();
            p_oracle = (&post + post.transpose()) * 0.5;
            assert_abs_diff_eq!(next.p, p_oracle, epsilon = 1e-12);
            assert!((&next.p - next.p.transpose()).norm() <= 1e-9);
            st = next;
        }
    }

    #[test]
    fn noise_free_reconstruction_recovers_known_input() {
        // Drive the plant with a known input and feed the outputs back in;
        // with matched initialization the reconstruction is exact at once,
        // with mismatched initialization it converges at the zero-dynamics
        // rate (the test plant has a single fast zero).
        let m = StateSpaceModel::new(
            dmatrix![0.5, 0.2; 0.1, 0.1],
            dmatrix![1.0; 0.4],
            dmatrix![1.0, 0.3],
            0.0,
        )
        .unwrap();
        let zeros = m.invariant_zeros().unwrap();
        assert!(zeros.spectral_radius() < 0.3, "test wants a fast zero");
        let noise = NoiseSpec::isotropic(&m, 0.0, 0.0, 0).unwrap();

        let x0 = dvector![0.4, -0.6];
        let mut x = x0.clone();
        let mut st = UmvState::new(&m, dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        for k in 0..40 {
            let u_true = dvector![(0.23 * k as f64).sin()];
            x = m.a() * &x + m.b() * &u_true;
            let y_next = m.c() * &x;
            let (next, u_hat) = st.step(&m, &noise, &y_next).unwrap();
            if k >= 10 {
                assert_abs_diff_eq!(u_hat, u_true, epsilon = 1e-6);
            }
            st = next;
        }
    }

    #[test]
    fn input_estimates_are_unbiased() {
        // Monte Carlo over noisy runs of a fixed scenario with known inputs:
        // the mean reconstruction error at the probe step stays within
        // 4 * std / sqrt(runs) of zero, componentwise.
        let m = systems::spring_damper();
        let noise = NoiseSpec::isotropic(&m, 1e-4, 1e-4, 0).unwrap();
        let runs = 500;
        let probe = 50;
        let u_true = dvector![0.4, -0.2];
        let mut samples: Vec<DVector<f64>> = Vec::with_capacity(runs);
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + run as u64);
            let mut draw = |dim: usize, scale: f64| {
                DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            };
            let mut x = DVector::zeros(4);
            let mut st = UmvState::default_for(&m).unwrap();
            let mut u_hat = DVector::zeros(2);
            for k in 0..=probe {
                x = m.a() * &x + m.b() * &u_true + draw(4, 1e-2);
                let y_next = m.c() * &x + draw(2, 1e-2);
                let (next, u) = st.step(&m, &noise, &y_next).unwrap();
                st = next;
                if k == probe {
                    u_hat = u;
                }
            }
            samples.push(u_hat - &u_true);
        }
        for ch in 0..2 {
            let vals: Vec<f64> = samples.iter().map(|s| s[ch]).collect();
            let mean = vals.iter().sum::<f64>() / runs as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
            let bound = 4.0 * (var.sqrt() / (runs as f64).sqrt());
            assert!(
                mean.abs() <= bound,
                "channel {ch}: |mean| {} > {}",
                mean.abs(),
                bound
            );
        }
    }
}
