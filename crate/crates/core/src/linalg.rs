//! Small dense linear-algebra helpers shared by the model and scenario
//! builders: spectral radii, exact zero-order-hold discretization, and
//! covariance square roots for noise sampling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Square root factor `L` of a PSD covariance with `L L^T = sigma`.
///
/// Cholesky when the matrix is positive definite; for PSD-but-singular
/// inputs falls back to the symmetric eigendecomposition with eigenvalues
/// clipped at zero.
pub fn covariance_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::config("covariance matrix must be square"));
    }
    if !is_symmetric(sigma, 1e-9) {
        return Err(Error::config("covariance matrix must be symmetric"));
    }
    if let Some(chol) = nalgebra::Cholesky::new(sigma.clone()) {
        return Ok(chol.l());
    }
    let eig = sigma.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::config(format!(
            "covariance matrix has negative eigenvalue {min:.3e}"
        )));
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt * eig.eigenvectors.transpose())
}

/// Exact discretization of `xdot = A x + sum_j B_j v_j` over one step of
/// length `dt`, holding every input constant across the step. Returns the
/// discrete state matrix and one input matrix per continuous input.
pub fn zoh_discretize(
    a: &DMatrix<f64>,
    inputs: &[&DMatrix<f64>],
    dt: f64,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::config("state matrix must be square"));
    }
    let total_inputs: usize = inputs.iter().map(|b| b.ncols()).sum();
    for b in inputs {
        if b.nrows() != n {
            return Err(Error::config("input matrix row count must match state dimension"));
        }
    }
    let dim = n + total_inputs;
    let mut aug = DMatrix::<f64>::zeros(dim, dim);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    let mut col = n;
    for b in inputs {
        aug.view_mut((0, col), (n, b.ncols())).copy_from(*b);
        col += b.ncols();
    }
    let exp = (aug * dt).exp();
    let a_d = exp.view((0, 0), (n, n)).into_owned();
    let mut out = Vec::with_capacity(inputs.len());
    let mut col = n;
    for b in inputs {
        out.push(exp.view((0, col), (n, b.ncols())).into_owned());
        col += b.ncols();
    }
    Ok((a_d, out))
}

/// Standard-normal vector drawn component-wise from `rng`.
pub fn standard_normal_vector<R: rand::Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_radius_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9, 0.1]));
        assert_relative_eq!(spectral_radius(&m), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn covariance_sqrt_roundtrip() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = covariance_sqrt(&sigma).unwrap();
        assert_relative_eq!(&l * l.transpose(), sigma, epsilon = 1e-10);
    }

    #[test]
    fn covariance_sqrt_singular_falls_back() {
        // rank-1 PSD matrix rejects Cholesky but not the eigen fallback
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = covariance_sqrt(&sigma).unwrap();
        assert_relative_eq!(&l * l.transpose(), sigma, epsilon = 1e-10);
    }

    #[test]
    fn covariance_sqrt_rejects_indefinite() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(covariance_sqrt(&sigma).is_err());
    }

    #[test]
    fn zoh_matches_scalar_closed_form() {
        // xdot = -x + u  =>  x+ = e^{-dt} x + (1 - e^{-dt}) u
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let (ad, bs) = zoh_discretize(&a, &[&b], 0.1).unwrap();
        assert_relative_eq!(ad[(0, 0)], (-0.1f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(bs[0][(0, 0)], 1.0 - (-0.1f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn zoh_semigroup_property() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (ad1, _) = zoh_discretize(&a, &[&b], 0.01).unwrap();
        let (ad2, _) = zoh_discretize(&a, &[&b], 0.02).unwrap();
        assert_relative_eq!(&ad1 * &ad1, ad2, epsilon = 1e-9);
    }
}
