//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_HYPERBOLICITY_TOL: f64 = 1e-6;

/// All eigenvalues with multiplicity, from the real Schur form (Hessenberg
/// reduction followed by shifted QR sweeps).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Validation(format!(
            "eigenvalues of non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(Error::EigenNonConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Minimum |Re λ| over the spectrum; fails if it does not exceed `tol`.
pub fn check_hyperbolic(b: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let eig = eigenvalues(b)?;
    let worst = eig
        .iter()
        .min_by(|x, y| x.re.abs().total_cmp(&y.re.abs()))
        .copied();
    match worst {
        None => Ok(f64::INFINITY),
        Some(l) if l.re.abs() > tol => Ok(l.re.abs()),
        Some(l) => Err(Error::Hyperbolicity {
            re: l.re,
            im: l.im,
            tol,
        }),
    }
}

/// Largest real part in the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}

pub fn solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}

/// Solves `A X + X Aᵀ = C` through the Kronecker form
/// `(I ⊗ A + A ⊗ I) vec X = vec C`; intended for n ≲ 10.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut k = DMatrix::zeros(n * n, n * n);
    // column-major vec: X[i,j] -> i + n j
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                // (A X)[i,j] = sum_l A[i,l] X[l,j]
                k[(row, l + n * j)] += a[(i, l)];
                // (X Aᵀ)[i,j] = sum_l X[i,l] A[j,l]
                k[(row, i + n * l)] += a[(j, l)];
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = solve(&k, &rhs, "Lyapunov operator")?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted(mut v: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn eigen_examples() {
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0]);
        let e = sorted(eigenvalues(&b).unwrap());
        let s3 = 3f64.sqrt() / 2.0;
        assert_relative_eq!(e[0].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(e[1].im, -s3, epsilon = 1e-12);
        assert_relative_eq!(e[2].im, s3, epsilon = 1e-12);
        assert_relative_eq!(check_hyperbolic(&b, 1e-6).unwrap(), 0.5, epsilon = 1e-12);

        let pend = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 30.0, 0.0]);
        let e = sorted(eigenvalues(&pend).unwrap());
        assert_relative_eq!(e[0].re, -30f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(e[1].re, 30f64.sqrt(), epsilon = 1e-12);

        let e = eigenvalues(&DMatrix::identity(2, 2)).unwrap();
        assert!(e.iter().all(|l| (l.re - 1.0).abs() < 1e-15 && l.im == 0.0));
    }

    #[test]
    fn hyperbolicity() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(
            check_hyperbolic(&rot, 1e-6),
            Err(Error::Hyperbolicity { .. })
        ));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        assert_relative_eq!(check_hyperbolic(&d, 1e-6).unwrap(), 1.0);
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let x = lyapunov(&a, &c).unwrap();
        let r = &a * &x + &x * a.transpose() - &c;
        assert!(r.norm() < 1e-12);
    }
}
