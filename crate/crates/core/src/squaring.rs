//! Non-square handling: input-transform squaring for systems with more
//! inputs than outputs, batch matrices and reference projection for systems
//! with more outputs than inputs, and output dropping.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore;
use crate::model::StateSpaceModel;

/// Squaring transform for a wide system (l < p): the controller works on the
/// square model with `B~ = B N`, and `lift_input` maps its inputs back onto
/// the original plant.
#[derive(Debug, Clone)]
pub struct InputTransform {
    n_mat: DMatrix<f64>,
    model_tilde: StateSpaceModel,
}

/// Builds the transform with `N = (CB)^+`, a right inverse of `CB` whose
/// columns lie in the row space of `CB`.
pub fn make_input_transform(model: &StateSpaceModel) -> Result<InputTransform> {
    let l = model.output_dim();
    let p = model.input_dim();
    if l >= p {
        return Err(Error::UnsupportedShape(format!(
            "input transform applies to wide systems only (l = {l}, p = {p})"
        )));
    }
    let cb = model.c() * model.b();
    let rank_cb = matcore::numerical_rank(&cb, 0.0)?;
    if rank_cb < l {
        return Err(Error::Infeasible(format!(
            "rank(CB) = {rank_cb} < {l}: no squaring transform exists"
        )));
    }
    let n_mat = matcore::pinv(&cb, 0.0)?;
    let b_tilde = model.b() * &n_mat;
    let model_tilde = StateSpaceModel::new(
        model.a().clone(),
        b_tilde,
        model.c().clone(),
        model.dt(),
    )?;
    let squared_rank = matcore::numerical_rank(&(model_tilde.c() * model_tilde.b()), 0.0)?;
    if squared_rank < l {
        return Err(Error::Infeasible(format!(
            "squared system has rank(C B~) = {squared_rank} < {l}"
        )));
    }
    Ok(InputTransform { n_mat, model_tilde })
}

impl InputTransform {
    pub fn n_matrix(&self) -> &DMatrix<f64> {
        &self.n_mat
    }

    /// The square model the controller should run on.
    pub fn squared_model(&self) -> &StateSpaceModel {
        &self.model_tilde
    }

    /// Maps a squared-system input back onto the original plant: `u = N u~`.
    pub fn lift_input(&self, u_tilde: &DVector<f64>) -> Result<DVector<f64>> {
        if u_tilde.len() != self.n_mat.ncols() {
            return Err(Error::InvalidInput(format!(
                "squared input has length {}, expected {}",
                u_tilde.len(),
                self.n_mat.ncols()
            )));
        }
        Ok(&self.n_mat * u_tilde)
    }
}

/// Stacked observability and input-to-output convolution matrices relating
/// the initial state and input sequence to the output sequence over `r`
/// steps: `Y_r = Gamma_r x0 + M_r U_{r-1}`.
#[derive(Debug, Clone)]
pub struct BatchMatrices {
    pub r: usize,
    pub gamma_r: DMatrix<f64>,
    pub m_r: DMatrix<f64>,
}

pub fn batch_matrices(model: &StateSpaceModel, r: usize) -> Result<BatchMatrices> {
    if r < 1 {
        return Err(Error::InvalidInput("horizon r must be >= 1".into()));
    }
    let n = model.state_dim();
    let p = model.input_dim();
    let l = model.output_dim();
    let c = model.c();

    // c_a_pows[i] = C * A^i
    let mut c_a_pows = Vec::with_capacity(r + 1);
    c_a_pows.push(c.clone());
    for i in 1..=r {
        let next = &c_a_pows[i - 1] * model.a();
        c_a_pows.push(next);
    }

    let mut gamma_r = DMatrix::zeros(r * l, n);
    for i in 1..=r {
        gamma_r
            .view_mut(((i - 1) * l, 0), (l, n))
            .copy_from(&c_a_pows[i]);
    }

    let mut m_r = DMatrix::zeros(r * l, r * p);
    for block_row in 0..r {
        for block_col in 0..=block_row {
            let block = &c_a_pows[block_row - block_col] * model.b();
            m_r.view_mut((block_row * l, block_col * p), (l, p))
                .copy_from(&block);
        }
    }
    Ok(BatchMatrices { r, gamma_r, m_r })
}

impl BatchMatrices {
    /// Output sequence predicted from an initial state and stacked inputs.
    pub fn simulate(&self, x0: &DVector<f64>, u_stacked: &DVector<f64>) -> DVector<f64> {
        &self.gamma_r * x0 + &self.m_r * u_stacked
    }
}

/// Orthogonal projection of a stacked reference onto the achievable subspace
/// `range(M_r)`: returns `M_r (M_r^T M_r)^+ M_r^T y_ref`.
pub fn project_reference(y_ref: &DVector<f64>, batch: &BatchMatrices) -> Result<DVector<f64>> {
    let m_r = &batch.m_r;
    if y_ref.len() != m_r.nrows() {
        return Err(Error::InvalidInput(format!(
            "stacked reference has length {}, expected {}",
            y_ref.len(),
            m_r.nrows()
        )));
    }
    let gram = m_r.transpose() * m_r;
    let gram_pinv = matcore::pinv(&gram, 0.0)?;
    Ok(m_r * (gram_pinv * (m_r.transpose() * y_ref)))
}

/// Square a tall system by keeping the listed output rows (0-based indices).
/// `keep` must have exactly p distinct in-range entries and the kept rows
/// must preserve `rank(C_keep B) = p`.
pub fn drop_outputs(model: &StateSpaceModel, keep: &[usize]) -> Result<StateSpaceModel> {
    let l = model.output_dim();
    let p = model.input_dim();
    if keep.len() != p {
        return Err(Error::InvalidInput(format!(
            "keep list has {} entries, expected p = {p}",
            keep.len()
        )));
    }
    let mut seen = vec![false; l];
    for &i in keep {
        if i >= l {
            return Err(Error::InvalidInput(format!(
                "keep index {i} out of range for {l} outputs"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidInput(format!("keep index {i} repeated")));
        }
        seen[i] = true;
    }
    let c_keep = DMatrix::from_fn(p, model.state_dim(), |row, col| {
        model.c()[(keep[row], col)]
    });
    let rank = matcore::numerical_rank(&(&c_keep * model.b()), 0.0)?;
    if rank < p {
        return Err(Error::Infeasible(format!(
            "kept outputs give rank(C B) = {rank} < {p}"
        )));
    }
    StateSpaceModel::new(
        model.a().clone(),
        model.b().clone(),
        c_keep,
        model.dt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn transform_for_unit_row_cb() {
        let m = systems::wide_plant(); // CB = [1, 0]
        let t = make_input_transform(&m).unwrap();
        assert_abs_diff_eq!(t.n_matrix().clone(), dmatrix![1.0; 0.0], epsilon = 1e-12);
        assert_eq!(matcore::numerical_rank(t.n_matrix(), 0.0).unwrap(), 1);
        let rep = t.squared_model().check_feasibility();
        assert!(rep.is_trackable);
    }

    #[test]
    fn transform_columns_live_in_cb_row_space() {
        // residual of projecting N's columns onto the row space of CB
        let m = systems::wide_plant();
        let t = make_input_transform(&m).unwrap();
        let cb = m.c() * m.b();
        let projector = matcore::pinv(&cb, 0.0).unwrap() * &cb; // onto row space
        let resid = (&projector * t.n_matrix() - t.n_matrix()).norm();
        assert!(resid <= 1e-9);
    }

    #[test]
    fn transform_on_random_wide_system() {
        // l = 1, p = 3 with full-rank CB: C B N = 1, so the squared system
        // has rank(C B~) = 1.
        let m = StateSpaceModel::new(
            dmatrix![0.3, 0.1; -0.2, 0.5],
            dmatrix![1.0, 0.5, -0.2; 0.3, 0.8, 0.6],
            dmatrix![0.7, -0.4],
            0.0,
        )
        .unwrap();
        let t = make_input_transform(&m).unwrap();
        let cbn = m.c() * m.b() * t.n_matrix();
        assert_abs_diff_eq!(cbn[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_rejects_square_or_tall() {
        assert!(matches!(
            make_input_transform(&systems::spring_damper()),
            Err(Error::UnsupportedShape(_))
        ));
        assert!(matches!(
            make_input_transform(&systems::oscillator_chain()),
            Err(Error::UnsupportedShape(_))
        ));
    }

    #[test]
    fn lift_input_maps_through_n() {
        let t = make_input_transform(&systems::wide_plant()).unwrap();
        assert_eq!(
            t.lift_input(&dvector![0.0]).unwrap(),
            dvector![0.0, 0.0]
        );
        assert_eq!(
            t.lift_input(&dvector![5.0]).unwrap(),
            dvector![5.0, 0.0]
        );
        assert!(t.lift_input(&dvector![1.0, 2.0]).is_err());
    }

    #[test]
    fn batch_first_block_row() {
        let m = systems::spring_damper();
        let bm = batch_matrices(&m, 1).unwrap();
        assert_abs_diff_eq!(bm.gamma_r, m.c() * m.a(), epsilon = 1e-14);
        assert_abs_diff_eq!(bm.m_r, m.c() * m.b(), epsilon = 1e-14);
    }

    #[test]
    fn batch_identity_matches_recursion() {
        let m = systems::spring_damper();
        let r = 3;
        let bm = batch_matrices(&m, r).unwrap();
        let x0 = dvector![0.4, -0.1, 0.2, 0.6];
        let us = [
            dvector![0.3, -0.5],
            dvector![-0.1, 0.2],
            dvector![0.7, 0.0],
        ];
        let mut u_stacked = DVector::zeros(r * 2);
        for (i, u) in us.iter().enumerate() {
            u_stacked.rows_mut(i * 2, 2).copy_from(u);
        }
        let batch_y = bm.simulate(&x0, &u_stacked);
        let mut x = x0;
        for (i, u) in us.iter().enumerate() {
            let (xn, yn) = m.reference_step(&x, u).unwrap();
            assert_abs_diff_eq!(batch_y.rows(i * 2, 2).into_owned(), yn, epsilon = 1e-10);
            x = xn;
        }
    }

    #[test]
    fn chain_batch_has_full_column_rank() {
        let bm = batch_matrices(&systems::oscillator_chain(), 20).unwrap();
        assert_eq!(matcore::numerical_rank(&bm.m_r, 0.0).unwrap(), 20);
    }

    #[test]
    fn projection_fixes_range_and_kills_complement() {
        let m = systems::oscillator_chain();
        let bm = batch_matrices(&m, 6).unwrap();
        // something already in range(M_r)
        let u = DVector::from_fn(6, |i, _| (i as f64 * 0.71).sin());
        let in_range = &bm.m_r * &u;
        let proj = project_reference(&in_range, &bm).unwrap();
        assert!((proj - &in_range).norm() <= 1e-9 * (1.0 + in_range.norm()));

        // something orthogonal to range(M_r): project a random vector and
        // subtract; the remainder must map to zero.
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.37).cos());
        let py = project_reference(&y, &bm).unwrap();
        let orth = &y - &py;
        let pz = project_reference(&orth, &bm).unwrap();
        assert!(pz.norm() <= 1e-9 * (1.0 + y.norm()));
    }

    #[test]
    fn projection_is_identity_for_trackable_square_systems() {
        let m = systems::spring_damper();
        let bm = batch_matrices(&m, 5).unwrap();
        let y = DVector::from_fn(10, |i, _| 0.5 * (i as f64 * 1.3).sin());
        let py = project_reference(&y, &bm).unwrap();
        assert!((py - &y).norm() <= 1e-9 * (1.0 + y.norm()));
    }

    #[test]
    fn drop_outputs_keep_first_row() {
        let m = systems::oscillator_chain();
        let sq = drop_outputs(&m, &[0]).unwrap();
        assert_eq!(sq.output_dim(), 1);
        assert_abs_diff_eq!(
            sq.c().clone(),
            dmatrix![0.0, 1.0, 0.0, 0.0],
            epsilon = 0.0
        );
        assert!(sq.check_feasibility().is_trackable);
    }

    #[test]
    fn drop_outputs_rank_failure_reports() {
        // keeping only the second output gives C B = 0
        let r = drop_outputs(&systems::oscillator_chain(), &[1]);
        match r {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("rank")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn drop_outputs_identity_on_square() {
        let m = systems::spring_damper();
        let kept = drop_outputs(&m, &[0, 1]).unwrap();
        assert_eq!(&kept, &m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stable_model(n: usize, p: usize) -> impl Strategy<Value = StateSpaceModel> {
            (
                proptest::collection::vec(-1.0f64..1.0, n * n),
                proptest::collection::vec(-1.0f64..1.0, n * p),
                proptest::collection::vec(-1.0f64..1.0, p * n),
            )
                .prop_filter_map("want a usable system", move |(av, bv, cv)| {
                    let mut a = DMatrix::from_row_slice(n, n, &av);
                    let radius = matcore::eigenvalues(&a).ok()?.spectral_radius();
                    if radius > 1e-6 {
                        a *= 0.9 / radius;
                    }
                    let b = DMatrix::from_row_slice(n, p, &bv);
                    let c = DMatrix::from_row_slice(p, n, &cv);
                    StateSpaceModel::new(a, b, c, 0.0).ok()
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn batch_identity_random_draws(
                m in stable_model(3, 2),
                r in 1usize..=6,
                x0v in proptest::collection::vec(-2.0f64..2.0, 3),
                seed in 0u64..1000,
            ) {
                let bm = batch_matrices(&m, r).unwrap();
                let x0 = DVector::from_column_slice(&x0v);
                let u = DVector::from_fn(r * 2, |i, _| ((seed + i as u64) as f64 * 0.61).sin());
                let batch_y = bm.simulate(&x0, &u);
                let mut x = x0;
                for i in 0..r {
                    let (xn, yn) = m
                        .reference_step(&x, &u.rows(i * 2, 2).into_owned())
                        .unwrap();
                    prop_assert!((batch_y.rows(i * 2, 2) - &yn).norm() <= 1e-10 * (1.0 + yn.norm()));
                    x = xn;
                }
            }

            #[test]
            fn projector_idempotent_and_symmetric(m in stable_model(3, 1), r in 2usize..=5) {
                let bm = batch_matrices(&m, r).unwrap();
                // squaring M_r's condition number in the Gram matrix costs
                // half the digits, so skip near-degenerate draws
                let sv = bm.m_r.clone().singular_values();
                prop_assume!(sv.min() > 1e-3 * sv.max());
                let gram = bm.m_r.transpose() * &bm.m_r;
                let projector = &bm.m_r * matcore::pinv(&gram, 0.0).unwrap() * bm.m_r.transpose();
                let idem = (&projector * &projector - &projector).norm();
                let sym = (&projector - projector.transpose()).norm();
                prop_assert!(idem <= 1e-9, "projector not idempotent: {idem}");
                prop_assert!(sym <= 1e-9, "projector not symmetric: {sym}");
            }
        }
    }
}
