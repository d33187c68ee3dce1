//! Symplectic linear algebra over the quadrature ordering q1, p1, ..., qm, pm.
//!
//! Everything downstream (SLD coefficients, QFI, the interferometer closed
//! forms) reduces to the objects defined here: the symplectic form, symplectic
//! eigenvalues, and the Williamson normal form `V = S (⊕ nu_j I2) S^T`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{GqmError, Result};

/// Default tolerance for symmetry/physicality/symplecticity checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Covariance matrices with eigenvalue spread beyond this are rejected.
const CONDITION_LIMIT: f64 = 1e12;

/// Symplectic eigenvalues closer than this (relative) are treated as one
/// degenerate cluster when carving out canonical planes.
const CLUSTER_TOL: f64 = 1e-8;

/// The symplectic form `Ω = ⊕ [[0, 1], [-1, 0]]` for `m` modes.
///
/// Satisfies `Ω^T = -Ω` and `Ω² = -I`.
pub fn symplectic_form(m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(GqmError::InvalidArgument(
            "mode count must be at least 1".into(),
        ));
    }
    let mut om = DMatrix::zeros(2 * m, 2 * m);
    for j in 0..m {
        om[(2 * j, 2 * j + 1)] = 1.0;
        om[(2 * j + 1, 2 * j)] = -1.0;
    }
    Ok(om)
}

/// Williamson normal form of a covariance matrix: `V = S D S^T` with `S`
/// symplectic and `D = ⊕ nu_j I2`, `nu` sorted descending.
#[derive(Debug, Clone)]
pub struct Williamson {
    pub s: DMatrix<f64>,
    pub nu: DVector<f64>,
}

impl Williamson {
    /// The diagonal factor `D = ⊕ nu_j I2`.
    pub fn diagonal(&self) -> DMatrix<f64> {
        let m = self.nu.len();
        let mut d = DMatrix::zeros(2 * m, 2 * m);
        for j in 0..m {
            d[(2 * j, 2 * j)] = self.nu[j];
            d[(2 * j + 1, 2 * j + 1)] = self.nu[j];
        }
        d
    }
}

fn check_even_square(v: &DMatrix<f64>) -> Result<usize> {
    if !v.is_square() || v.nrows() == 0 || v.nrows() % 2 != 0 {
        return Err(GqmError::InvalidArgument(format!(
            "expected a nonempty 2m x 2m matrix, got {}x{}",
            v.nrows(),
            v.ncols()
        )));
    }
    Ok(v.nrows() / 2)
}

pub(crate) fn max_asymmetry(v: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..v.nrows() {
        for j in (i + 1)..v.ncols() {
            worst = worst.max((v[(i, j)] - v[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(v: &DMatrix<f64>) -> Result<()> {
    let scale = v.amax().max(1.0);
    if max_asymmetry(v) > DEFAULT_TOL * scale {
        return Err(GqmError::InvalidArgument(
            "matrix is not symmetric within tolerance".into(),
        ));
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, eigenvectors as
/// columns of the returned matrix.
///
/// nalgebra's QL-based `SymmetricEigen` can hand back eigenvectors with
/// residuals around 1e-7 on matrices with repeated eigenvalues (the values
/// themselves stay accurate); the Williamson construction feeds on exactly
/// such matrices, so it needs the slower but unconditionally accurate
/// classic.
fn jacobi_eigh(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut a = a.clone();
    let mut q = DMatrix::identity(n, n);
    // Orthogonal similarity preserves the Frobenius norm, so the input norm
    // serves as the scale for the stopping test throughout.
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = if theta.abs() > 1e150 {
                    // theta² would overflow; the rotation is negligible anyway.
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let air = a[(i, r)];
                    a[(i, p)] = c * aip - s * air;
                    a[(i, r)] = s * aip + c * air;
                }
                for i in 0..n {
                    let api = a[(p, i)];
                    let ari = a[(r, i)];
                    a[(p, i)] = c * api - s * ari;
                    a[(r, i)] = s * api + c * ari;
                }
                for i in 0..n {
                    let qip = q[(i, p)];
                    let qir = q[(i, r)];
                    q[(i, p)] = c * qip - s * qir;
                    q[(i, r)] = s * qip + c * qir;
                }
            }
        }
    }
    if !converged {
        return Err(GqmError::NumericFailure(
            "Jacobi eigensolver did not converge in 60 sweeps".into(),
        ));
    }
    Ok((a.diagonal(), q))
}

/// Cholesky factor `L` (so `V = L L^T`) together with the antisymmetric form
/// `K = L^T Ω L`. `K` carries all the Williamson data of `V`: an orthogonal
/// `O` with `O^T K O = ⊕ nu_j [[0, 1], [-1, 0]]` turns `L` into the
/// symplectic `S = L O D^{-1/2}`.
fn antisym_form(v: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = check_even_square(v)?;
    check_symmetric(v)?;
    let chol = Cholesky::new(v.clone())
        .ok_or_else(|| GqmError::InvalidArgument("matrix is not positive definite".into()))?;
    let l = chol.l();
    let om = symplectic_form(m)?;
    let k = l.transpose() * om * &l;
    Ok((l, k))
}

/// Symplectic eigenvalues of a symmetric positive definite matrix: the `m`
/// positive eigenvalue magnitudes of `iΩV`, sorted descending.
pub fn symplectic_eigenvalues(v: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (_, k) = antisym_form(v)?;
    let m = k.nrows() / 2;
    // K^T K = -K² is symmetric with eigenvalues nu_j², each appearing twice.
    let gram = k.transpose() * &k;
    let mut mu: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(DVector::from_iterator(
        m,
        (0..m).map(|j| mu[2 * j].max(0.0).sqrt()),
    ))
}

/// Williamson decomposition of a symmetric positive definite `V`.
///
/// Factor `V = L L^T` by Cholesky and form the antisymmetric `K = L^T Ω L`.
/// An orthogonal `O` brings `K` to canonical form `O^T K O = ⊕ nu_j J` with
/// `J = [[0, 1], [-1, 0]]`, and then `S = L O D^{-1/2}` is symplectic with
/// `V = S D S^T`. The invariant planes of `K` come from the eigenvectors of
/// the symmetric `K^T K` (eigenvalue `nu²`, twice per mode); each plane's
/// second leg is produced by applying `K` itself, so degenerate or clustered
/// `nu` cost nothing in accuracy. A final in-plane rotation pins the
/// orientation per plane, so an already-diagonal `V` comes back with `S = I`
/// instead of an arbitrary in-plane rotation of it.
///
/// Errors on non-symmetric or non-positive-definite input, and with a
/// numeric-failure diagnostic when the eigenvalue spread of `V` exceeds 1e12.
pub fn williamson(v: &DMatrix<f64>) -> Result<Williamson> {
    let m = check_even_square(v)?;
    check_symmetric(v)?;
    let lam = v.symmetric_eigenvalues();
    let (lmin, lmax) = (lam.min(), lam.max());
    if lmin <= 0.0 {
        return Err(GqmError::InvalidArgument(format!(
            "matrix is not positive definite (min eigenvalue {lmin:.3e})"
        )));
    }
    if lmax / lmin > CONDITION_LIMIT {
        return Err(GqmError::NumericFailure(format!(
            "covariance condition number {:.3e} exceeds {CONDITION_LIMIT:.1e} \
             (eigenvalues span [{lmin:.3e}, {lmax:.3e}])",
            lmax / lmin
        )));
    }

    let (l, k) = antisym_form(v)?;
    let gram = k.transpose() * &k;
    let (mu, z) = jacobi_eigh(&gram)?;
    let mut idx: Vec<usize> = (0..2 * m).collect();
    idx.sort_by(|&a, &b| mu[b].partial_cmp(&mu[a]).unwrap());
    let nu_raw: Vec<f64> = idx.iter().map(|&i| mu[i].max(0.0).sqrt()).collect();

    // Walk the sorted spectrum in clusters of (near-)equal nu. Each cluster
    // spans an even-dimensional K-invariant subspace holding one canonical
    // plane per two dimensions; `built` keeps every vector produced so far so
    // each new one is orthogonalized against the full set.
    let mut pairs: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::with_capacity(m);
    let mut built: Vec<DVector<f64>> = Vec::with_capacity(2 * m);
    let mut start = 0;
    while start < 2 * m {
        let mut stop = start + 1;
        while stop < 2 * m
            && (nu_raw[stop - 1] - nu_raw[stop]).abs() < CLUSTER_TOL * nu_raw[stop - 1].max(1.0)
        {
            stop += 1;
        }
        let cols: Vec<DVector<f64>> = idx[start..stop]
            .iter()
            .map(|&i| z.column(i).into_owned())
            .collect();
        if cols.len() % 2 != 0 {
            return Err(GqmError::NumericFailure(
                "odd-dimensional eigenvalue cluster in the Williamson construction".into(),
            ));
        }

        for _ in 0..cols.len() / 2 {
            // Seed with whichever cluster column keeps the most weight after
            // projecting out everything built so far.
            let mut seed: Option<DVector<f64>> = None;
            let mut seed_norm = -1.0;
            for c in &cols {
                let mut r = c.clone();
                for b in &built {
                    let w = b.dot(&r);
                    r.axpy(-w, b, 1.0);
                }
                let n = r.norm();
                if n > seed_norm {
                    seed_norm = n;
                    seed = Some(r);
                }
            }
            if seed_norm < 1e-6 {
                return Err(GqmError::NumericFailure(
                    "orthogonalization collapsed on a degenerate cluster".into(),
                ));
            }
            let mut e = seed.expect("cluster is nonempty");
            e /= seed_norm;

            let mut f = &k * &e;
            let w = e.dot(&f);
            f.axpy(-w, &e, 1.0);
            for b in &built {
                let w = b.dot(&f);
                f.axpy(-w, b, 1.0);
            }
            let fnorm = f.norm();
            if fnorm <= 0.0 {
                return Err(GqmError::NumericFailure(
                    "canonical pairing collapsed on a degenerate cluster".into(),
                ));
            }
            f /= fnorm;
            let nu = f.dot(&(&k * &e));
            if nu <= 0.0 {
                return Err(GqmError::NumericFailure(
                    "canonical pairing produced a nonpositive symplectic eigenvalue".into(),
                ));
            }

            // Rotate inside the plane so the heaviest row carries the whole
            // weight on one leg: zero the e-leg on a q row (even index), the
            // f-leg on a p row. Determinism plus the S = I convention for
            // diagonal input both fall out of this.
            let mut a = 0;
            for i in 1..e.len() {
                if f[i] * f[i] + e[i] * e[i] > f[a] * f[a] + e[a] * e[a] {
                    a = i;
                }
            }
            let (sa, ca) = if a % 2 == 0 {
                (-e[a], f[a])
            } else {
                (f[a], e[a])
            };
            let h = sa.hypot(ca);
            let (sn, cn) = (sa / h, ca / h);
            let fr = &f * cn - &e * sn;
            let er = &f * sn + &e * cn;
            built.push(fr.clone());
            built.push(er.clone());
            pairs.push((nu, fr, er));
        }
        start = stop;
    }

    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let nu = DVector::from_iterator(m, pairs.iter().map(|p| p.0));
    let mut o = DMatrix::zeros(2 * m, 2 * m);
    let mut d_inv_sqrt = DMatrix::zeros(2 * m, 2 * m);
    for (j, (nuj, f, e)) in pairs.iter().enumerate() {
        o.set_column(2 * j, f);
        o.set_column(2 * j + 1, e);
        let w = 1.0 / nuj.sqrt();
        d_inv_sqrt[(2 * j, 2 * j)] = w;
        d_inv_sqrt[(2 * j + 1, 2 * j + 1)] = w;
    }
    let s = &l * o * d_inv_sqrt;
    Ok(Williamson { s, nu })
}

/// True iff all symplectic eigenvalues are at least `1 - tol`, which is
/// equivalent to `V + iΩ ⪰ 0`. Errors on non-symmetric input; a symmetric
/// matrix that is not positive definite is simply not physical.
pub fn is_physical_covariance(v: &DMatrix<f64>, tol: f64) -> Result<bool> {
    check_even_square(v)?;
    check_symmetric(v)?;
    if v.symmetric_eigenvalues().min() <= 0.0 {
        return Ok(false);
    }
    let nu = symplectic_eigenvalues(v)?;
    Ok(nu.min() >= 1.0 - tol)
}

/// True iff `‖SΩS^T − Ω‖_max ≤ tol`. Non-square or odd-dimensional input is
/// simply not symplectic.
pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> bool {
    if !s.is_square() || s.nrows() == 0 || s.nrows() % 2 != 0 {
        return false;
    }
    let om = symplectic_form(s.nrows() / 2).expect("nonzero mode count");
    let residual = s * &om * s.transpose() - &om;
    residual.amax() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reconstruction_error(v: &DMatrix<f64>, w: &Williamson) -> f64 {
        let rec = &w.s * w.diagonal() * w.s.transpose();
        (rec - v).amax() / v.amax()
    }

    #[test]
    fn form_single_mode() {
        let om = symplectic_form(1).unwrap();
        assert_eq!(om, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    }

    #[test]
    fn form_is_block_diagonal() {
        let om = symplectic_form(2).unwrap();
        let block = symplectic_form(1).unwrap();
        assert_eq!(om.view((0, 0), (2, 2)).clone_owned(), block);
        assert_eq!(om.view((2, 2), (2, 2)).clone_owned(), block);
        assert_eq!(om.view((0, 2), (2, 2)).amax(), 0.0);
    }

    #[test]
    fn form_squares_to_minus_identity() {
        let om = symplectic_form(3).unwrap();
        let sq = &om * &om;
        assert_abs_diff_eq!(sq, -DMatrix::identity(6, 6), epsilon = 0.0);
    }

    #[test]
    fn form_rejects_zero_modes() {
        assert!(matches!(
            symplectic_form(0),
            Err(GqmError::InvalidArgument(_))
        ));
    }

    #[test]
    fn spectrum_of_thermal_state() {
        let v = DMatrix::identity(2, 2) * 3.0;
        let nu = symplectic_eigenvalues(&v).unwrap();
        assert_abs_diff_eq!(nu[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_of_vacuum() {
        let nu = symplectic_eigenvalues(&DMatrix::identity(4, 4)).unwrap();
        assert_abs_diff_eq!(nu[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nu[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_mode_squeezed_covariance_is_pure() {
        // Two-mode squeezed covariance at r = 0.7: cosh 2r on the diagonal,
        // +sinh 2r on the qq cross block, -sinh 2r on pp.
        let c = (1.4f64).cosh();
        let s = (1.4f64).sinh();
        let v = DMatrix::from_row_slice(
            4,
            4,
            &[
                c, 0.0, s, 0.0, //
                0.0, c, 0.0, -s, //
                s, 0.0, c, 0.0, //
                0.0, -s, 0.0, c,
            ],
        );
        let nu = symplectic_eigenvalues(&v).unwrap();
        assert_abs_diff_eq!(nu[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nu[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spectrum_rejects_asymmetric_input() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            symplectic_eigenvalues(&v),
            Err(GqmError::InvalidArgument(_))
        ));
    }

    #[test]
    fn spectrum_rejects_indefinite_input() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            symplectic_eigenvalues(&v),
            Err(GqmError::InvalidArgument(_))
        ));
    }

    #[test]
    fn williamson_of_scaled_identity_is_identity() {
        let v = DMatrix::identity(2, 2) * 5.0;
        let w = williamson(&v).unwrap();
        assert_abs_diff_eq!(w.nu[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.s, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn williamson_of_squeezed_thermal_is_diagonal_squeezer() {
        let (nu, r) = (2.5f64, 0.6f64);
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![
            nu * (-2.0 * r).exp(),
            nu * (2.0 * r).exp(),
        ]));
        let w = williamson(&v).unwrap();
        assert_abs_diff_eq!(w.nu[0], nu, epsilon = 1e-12);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![(-r).exp(), r.exp()]));
        assert_abs_diff_eq!(w.s, expected, epsilon = 1e-10);
    }

    #[test]
    fn williamson_recovers_planted_spectrum() {
        // V = T D T^T with T = exp(ΩA) symplectic for symmetric A.
        let m = 3;
        let mut a = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..2 * m {
            for j in 0..2 * m {
                a[(i, j)] = ((i * 7 + j * 3) % 11) as f64 / 25.0;
            }
        }
        let a = (&a + a.transpose()) * 0.5;
        let om = symplectic_form(m).unwrap();
        let t = (&om * a).exp();
        assert!(is_symplectic(&t, 1e-10));

        let planted = [2.0, 1.5, 1.1];
        let mut d = DMatrix::zeros(2 * m, 2 * m);
        for j in 0..m {
            d[(2 * j, 2 * j)] = planted[j];
            d[(2 * j + 1, 2 * j + 1)] = planted[j];
        }
        let v = &t * d * t.transpose();
        let w = williamson(&v).unwrap();
        for j in 0..m {
            assert_abs_diff_eq!(w.nu[j], planted[j], epsilon = 1e-10);
        }
        assert!(is_symplectic(&w.s, 1e-10));
        assert!(reconstruction_error(&v, &w) < 1e-10);
    }

    #[test]
    fn williamson_handles_degenerate_spectrum() {
        let v = DMatrix::identity(4, 4) * 3.0;
        let w = williamson(&v).unwrap();
        assert_abs_diff_eq!(w.nu[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.nu[1], 3.0, epsilon = 1e-12);
        assert!(is_symplectic(&w.s, 1e-10));
        assert!(reconstruction_error(&v, &w) < 1e-10);
    }

    #[test]
    fn williamson_rejects_ill_conditioned_input() {
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-8, 1e8]));
        assert!(matches!(williamson(&v), Err(GqmError::NumericFailure(_))));
    }

    #[test]
    fn physicality_examples() {
        assert!(is_physical_covariance(&DMatrix::identity(2, 2), DEFAULT_TOL).unwrap());
        assert!(!is_physical_covariance(&(DMatrix::identity(2, 2) * 0.5), DEFAULT_TOL).unwrap());
        // Vacuum through a loss channel with y = 1 - x sits exactly on the
        // physicality boundary.
        let v = DMatrix::identity(2, 2) * (0.4 + 0.6);
        assert!(is_physical_covariance(&v, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn symplecticity_examples() {
        assert!(is_symplectic(&DMatrix::identity(4, 4), 1e-12));
        assert!(!is_symplectic(&(DMatrix::identity(2, 2) * 2.0), 1e-12));
        assert!(!is_symplectic(&DMatrix::identity(3, 3), 1e-12));
    }
}
