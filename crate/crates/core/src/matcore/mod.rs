//! Numerical primitives shared by the rest of the crate: SVD-based
//! pseudoinverse and rank, zero-order-hold discretization, eigenvalues,
//! invariant zeros, and controllability/observability ranks.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

mod expm;
mod spectra;

pub use expm::{expm, zoh_discretize};
pub use spectra::{eigenvalues, invariant_zeros, Spectrum};

/// Default singular-value cutoff: `max(rows, cols) * eps * sigma_max`.
pub(crate) fn auto_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

pub(crate) fn check_finite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} has non-finite entries")))
    }
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// `tol` is an absolute singular-value cutoff; pass 0.0 for the automatic
/// choice `max(rows, cols) * eps * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    check_finite(m, "matrix")?;
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tol must be >= 0, got {tol}")));
    }
    let (rows, cols) = m.shape();
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = if tol == 0.0 {
        auto_tol(rows, cols, sigma_max)
    } else {
        tol
    };
    // M^+ = V S^+ U^T with small singular values zeroed.
    let k = svd.singular_values.len();
    let mut result = DMatrix::zeros(cols, rows);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cutoff {
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            result += (vi * ui.transpose()) / s;
        }
    }
    Ok(result)
}

/// Number of singular values above `tol` (0.0 selects the automatic cutoff).
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    check_finite(m, "matrix")?;
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tol must be >= 0, got {tol}")));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(0);
    }
    let sv = m.clone().singular_values();
    let sigma_max = sv.max();
    let cutoff = if tol == 0.0 {
        auto_tol(rows, cols, sigma_max)
    } else {
        tol
    };
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

/// Rank of the controllability matrix `[B, AB, ..., A^{n-1} B]`.
pub fn ctrb_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    check_finite(a, "A")?;
    check_finite(b, "B")?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("A must be square".into()));
    }
    if b.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "B has {} rows, expected {n}",
            b.nrows()
        )));
    }
    let p = b.ncols();
    let mut block = b.clone();
    let mut ctrb = DMatrix::zeros(n, n * p);
    for i in 0..n {
        ctrb.view_mut((0, i * p), (n, p)).copy_from(&block);
        block = a * &block;
    }
    numerical_rank(&ctrb, 0.0)
}

/// Rank of the observability matrix `[C; CA; ...; CA^{n-1}]`.
pub fn obsv_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<usize> {
    check_finite(a, "A")?;
    check_finite(c, "C")?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("A must be square".into()));
    }
    if c.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "C has {} cols, expected {n}",
            c.ncols()
        )));
    }
    ctrb_rank(&a.transpose(), &c.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn penrose_residual(m: &DMatrix<f64>, mp: &DMatrix<f64>) -> f64 {
        let scale = 1.0 + m.norm();
        let r1 = (m * mp * m - m).norm();
        let r2 = (mp * m * mp - mp).norm();
        let mmp = m * mp;
        let r3 = (&mmp - mmp.transpose()).norm();
        let mpm = mp * m;
        let r4 = (&mpm - mpm.transpose()).norm();
        [r1, r2, r3, r4].into_iter().fold(0.0, f64::max) / scale
    }

    #[test]
    fn pinv_identity() {
        let m = DMatrix::<f64>::identity(3, 3);
        let mp = pinv(&m, 0.0).unwrap();
        assert_abs_diff_eq!(mp, m, epsilon = 1e-12);
    }

    #[test]
    fn pinv_rank_one_closed_form() {
        // rank-1 matrix [[1,2],[2,4]]: pseudoinverse is M / 25
        let m = dmatrix![1.0, 2.0; 2.0, 4.0];
        let mp = pinv(&m, 0.0).unwrap();
        let expected = dmatrix![0.04, 0.08; 0.08, 0.16];
        assert_abs_diff_eq!(mp, expected, epsilon = 1e-12);
        assert!(penrose_residual(&m, &mp) <= 1e-10);
    }

    #[test]
    fn pinv_zero_matrix() {
        let m = DMatrix::<f64>::zeros(2, 3);
        let mp = pinv(&m, 0.0).unwrap();
        assert_eq!(mp.shape(), (3, 2));
        assert_eq!(mp.norm(), 0.0);
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let m = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(pinv(&m, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(
            numerical_rank(&DMatrix::<f64>::identity(4, 4), 0.0).unwrap(),
            4
        );
        // singular values {5, 0}
        assert_eq!(numerical_rank(&dmatrix![1.0, 2.0; 2.0, 4.0], 0.0).unwrap(), 1);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(3, 2), 0.0).unwrap(), 0);
    }

    #[test]
    fn ctrb_uncontrollable_mode() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = dmatrix![1.0; 0.0];
        assert_eq!(ctrb_rank(&a, &b).unwrap(), 1);
    }

    #[test]
    fn ctrb_dimension_mismatch() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::<f64>::zeros(3, 1);
        assert!(ctrb_rank(&a, &b).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_matrix(max_dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
            (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-10.0f64..10.0, r * c)
                    .prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn penrose_conditions_hold(m in small_matrix(5)) {
                let mp = pinv(&m, 0.0).unwrap();
                prop_assert!(penrose_residual(&m, &mp) <= 1e-10);
            }

            #[test]
            fn pinv_involution_on_full_rank(m in small_matrix(4)) {
                let sv = m.clone().singular_values();
                let full_rank = sv.min() > 1e-6 * sv.max() && sv.min() > 1e-9;
                prop_assume!(full_rank);
                let mpp = pinv(&pinv(&m, 0.0).unwrap(), 0.0).unwrap();
                prop_assert!((&mpp - &m).norm() <= 1e-9 * (1.0 + m.norm()));
            }

            #[test]
            fn rank_transpose_invariant(m in small_matrix(5)) {
                prop_assert_eq!(
                    numerical_rank(&m, 0.0).unwrap(),
                    numerical_rank(&m.transpose(), 0.0).unwrap()
                );
            }
        }
    }
}
