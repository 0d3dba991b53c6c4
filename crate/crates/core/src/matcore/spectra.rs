use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

use super::{check_finite, numerical_rank, pinv};

/// A set of complex eigenvalues or invariant zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(pub Vec<Complex<f64>>);

impl Spectrum {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex<f64>> {
        self.0.iter()
    }

    /// Values ordered by real part, then imaginary part.
    pub fn sorted(&self) -> Vec<Complex<f64>> {
        let mut v = self.0.clone();
        v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        v
    }

    /// Largest magnitude in the set (0.0 when empty).
    pub fn spectral_radius(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// True when every value lies strictly inside the unit circle with the
    /// given margin.
    pub fn inside_unit_circle(&self, margin: f64) -> bool {
        self.0.iter().all(|z| z.norm() < 1.0 - margin)
    }

    /// True when the set is closed under conjugation within `tol`
    /// (greedy pairing).
    pub fn conjugate_symmetric(&self, tol: f64) -> bool {
        let mut unmatched: Vec<Complex<f64>> = self.0.clone();
        while let Some(z) = unmatched.pop() {
            if z.im.abs() <= tol {
                continue;
            }
            let want = z.conj();
            match unmatched
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - want).norm().partial_cmp(&(*b - want).norm()).unwrap()
                })
                .filter(|(_, a)| (**a - want).norm() <= tol)
                .map(|(i, _)| i)
            {
                Some(i) => {
                    unmatched.swap_remove(i);
                }
                None => return false,
            }
        }
        true
    }

    /// Greedy multiset match against an expected list within `tol`.
    pub fn matches(&self, expected: &[Complex<f64>], tol: f64) -> bool {
        if self.0.len() != expected.len() {
            return false;
        }
        let mut pool: Vec<Complex<f64>> = self.0.clone();
        for want in expected {
            let best = pool
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - want).norm().partial_cmp(&(*b - want).norm()).unwrap()
                })
                .map(|(i, a)| (i, (*a - want).norm()));
            match best {
                Some((i, d)) if d <= tol => {
                    pool.swap_remove(i);
                }
                _ => return false,
            }
        }
        true
    }
}

impl FromIterator<Complex<f64>> for Spectrum {
    fn from_iter<T: IntoIterator<Item = Complex<f64>>>(iter: T) -> Self {
        Spectrum(iter.into_iter().collect())
    }
}

/// Eigenvalues of a square real matrix, with multiplicity.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Spectrum> {
    check_finite(a, "A")?;
    if !a.is_square() {
        return Err(Error::InvalidInput(
            "eigenvalues require a square matrix".into(),
        ));
    }
    let ev = a.clone().complex_eigenvalues();
    Ok(Spectrum(ev.iter().copied().collect()))
}

/// Invariant zeros of a square system `(A, B, C)` with no feedthrough: the
/// finite generalized eigenvalues `z` of the Rosenbrock pencil
/// `[[A - zI, B], [C, 0]]`. Requires `rank(CB) = p`.
///
/// With `CB` invertible the pencil's finite spectrum equals the spectrum of
/// the output-zeroing dynamics `(I - B (CB)^{-1} C) A` restricted to
/// `ker(C)`: that restriction is well defined because the closed-loop map
/// sends everything into `ker(C)`. Working on the restriction sidesteps the
/// pencil's infinite eigenvalues entirely, so no magnitude filtering is
/// needed and zeros at the origin are kept intact.
pub fn invariant_zeros(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<Spectrum> {
    check_finite(a, "A")?;
    check_finite(b, "B")?;
    check_finite(c, "C")?;
    let n = a.nrows();
    let p = b.ncols();
    let l = c.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(Error::InvalidInput("inconsistent system dimensions".into()));
    }
    if l != p {
        return Err(Error::UnsupportedShape(format!(
            "invariant zeros are computed for square systems only (l = {l}, p = {p})"
        )));
    }
    let cb = c * b;
    if numerical_rank(&cb, 0.0)? < p {
        return Err(Error::Infeasible(
            "invariant zeros need rank(CB) = p; the pencil is degenerate otherwise".into(),
        ));
    }
    if n == p {
        // full relative degree: no finite zeros
        return Ok(Spectrum(Vec::new()));
    }

    // output-zeroing closed loop: u = -(CB)^{-1} C A x
    let cb_inv = cb
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("CB inversion failed".into()))?;
    let a_cl = a - b * cb_inv * (c * a);

    // orthonormal basis of ker(C) from the projector I - C^+ C
    let projector = DMatrix::identity(n, n) - pinv(c, 0.0)? * c;
    let eig = projector.symmetric_eigen();
    let mut basis = DMatrix::zeros(n, n - l);
    let mut col = 0;
    for j in 0..n {
        if eig.eigenvalues[j] > 0.5 {
            if col == n - l {
                return Err(Error::NumericalFailure(
                    "kernel basis larger than expected; C is rank deficient".into(),
                ));
            }
            basis.column_mut(col).copy_from(&eig.eigenvectors.column(j));
            col += 1;
        }
    }
    if col != n - l {
        return Err(Error::NumericalFailure(
            "failed to build a kernel basis for C".into(),
        ));
    }

    let restricted = basis.transpose() * a_cl * &basis;
    eigenvalues(&restricted)
}
