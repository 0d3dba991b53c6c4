use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::check_finite;

/// Matrix exponential (scaling-and-squaring with Pade approximation).
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(m, "matrix")?;
    if !m.is_square() {
        return Err(Error::InvalidInput("expm requires a square matrix".into()));
    }
    Ok(m.clone().exp())
}

/// Zero-order-hold discretization of a continuous-time pair `(Ac, Bc)`.
///
/// Computes the exponential of the augmented matrix `[[Ac, Bc], [0, 0]] * dt`
/// and reads `Ad` and `Bd` off its top blocks, which is the exact sampled
/// model under piecewise-constant inputs.
pub fn zoh_discretize(
    ac: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_finite(ac, "Ac")?;
    check_finite(bc, "Bc")?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    let n = ac.nrows();
    if ac.ncols() != n {
        return Err(Error::InvalidInput("Ac must be square".into()));
    }
    if bc.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "Bc has {} rows, expected {n}",
            bc.nrows()
        )));
    }
    let p = bc.ncols();
    let mut aug = DMatrix::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    aug.view_mut((0, n), (n, p)).copy_from(&(bc * dt));
    let e = expm(&aug)?;
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, p)).into_owned();
    Ok((ad, bd))
}
