//! Gaussian channels in (X, Y) form: d -> Xd (+ optional shift),
//! V -> XVX^T + Y.
//!
//! Construction only checks shapes and symmetry of Y. Complete positivity is
//! a separate query so that boundary and slightly non-CP maps can still be
//! represented while scanning parameter grids.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{GqmError, Result};
use crate::symplectic::{self, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    m: usize,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    dshift: Option<DVector<f64>>,
}

impl GaussianChannel {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, dshift: Option<DVector<f64>>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || n % 2 != 0 || x.ncols() != n || y.nrows() != n || y.ncols() != n {
            return Err(GqmError::InvalidArgument(format!(
                "channel matrices must be equal even-dimensional squares, got X {}x{}, Y {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        let asym = symplectic::max_asymmetry(&y);
        if asym > DEFAULT_TOL * 1.0f64.max(y.amax()) {
            return Err(GqmError::InvalidArgument(format!(
                "noise matrix Y must be symmetric, asymmetry {asym:.3e}"
            )));
        }
        if let Some(ref s) = dshift {
            if s.len() != n {
                return Err(GqmError::InvalidArgument(format!(
                    "displacement shift has length {}, expected {n}",
                    s.len()
                )));
            }
        }
        Ok(Self {
            m: n / 2,
            x,
            y,
            dshift,
        })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            m,
            x: DMatrix::identity(2 * m, 2 * m),
            y: DMatrix::zeros(2 * m, 2 * m),
            dshift: None,
        }
    }

    /// Single-mode phase-covariant loss/noise map: X = √x I, Y = y I.
    /// Requires x, y >= 0 but accepts non-CP combinations; CP holds exactly
    /// when y >= |1 - x|.
    pub fn phase_covariant(x: f64, y: f64) -> Result<Self> {
        if !(x >= 0.0) || !(y >= 0.0) {
            return Err(GqmError::InvalidArgument(format!(
                "phase-covariant channel needs x >= 0 and y >= 0, got x = {x}, y = {y}"
            )));
        }
        Ok(Self {
            m: 1,
            x: DMatrix::identity(2, 2) * x.sqrt(),
            y: DMatrix::identity(2, 2) * y,
            dshift: None,
        })
    }

    /// Noiseless phase rotation by `sign_i * phi / 2` on each mode, i.e.
    /// X = ⊕_i R(s_i φ/2) with R(θ) = [[cos θ, sin θ], [−sin θ, cos θ]].
    pub fn phase_rotation(phi: f64, mode_signs: &[f64]) -> Result<Self> {
        if mode_signs.is_empty() {
            return Err(GqmError::InvalidArgument(
                "at least one mode sign required".into(),
            ));
        }
        let m = mode_signs.len();
        let mut x = DMatrix::zeros(2 * m, 2 * m);
        for (i, &s) in mode_signs.iter().enumerate() {
            let th = s * phi / 2.0;
            x[(2 * i, 2 * i)] = th.cos();
            x[(2 * i, 2 * i + 1)] = th.sin();
            x[(2 * i + 1, 2 * i)] = -th.sin();
            x[(2 * i + 1, 2 * i + 1)] = th.cos();
        }
        Ok(Self {
            m,
            x,
            y: DMatrix::zeros(2 * m, 2 * m),
            dshift: None,
        })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn xmat(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn ymat(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn dshift(&self) -> Option<&DVector<f64>> {
        self.dshift.as_ref()
    }

    /// Checks the CP condition Y + i X Ω X^T − i Ω >= 0 up to `-tol` on the
    /// smallest eigenvalue of the Hermitian test matrix.
    pub fn is_completely_positive(&self, tol: f64) -> bool {
        let n = 2 * self.m;
        let om = symplectic::symplectic_form(self.m).expect("positive mode count");
        let comm = &self.x * &om * self.x.transpose() - om;
        let mut c = DMatrix::<Complex<f64>>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = Complex::new(self.y[(i, j)], comm[(i, j)]);
            }
        }
        let herm = (&c + c.adjoint()) * Complex::new(0.5, 0.0);
        let eigs = herm.symmetric_eigenvalues();
        eigs.iter().all(|&e| e >= -tol)
    }

    /// Composition `self ∘ first`: the result applies `first`, then `self`.
    pub fn compose(&self, first: &Self) -> Result<Self> {
        if self.m != first.m {
            return Err(GqmError::InvalidArgument(format!(
                "cannot compose channels on {} and {} mode(s)",
                self.m, first.m
            )));
        }
        let x = &self.x * &first.x;
        let y = &self.x * &first.y * self.x.transpose() + &self.y;
        let dshift = match (&self.dshift, &first.dshift) {
            (None, None) => None,
            (s2, s1) => {
                let mut total = DVector::zeros(2 * self.m);
                if let Some(s1) = s1 {
                    total += &self.x * s1;
                }
                if let Some(s2) = s2 {
                    total += s2;
                }
                Some(total)
            }
        };
        Ok(Self {
            m: self.m,
            x,
            y,
            dshift,
        })
    }

    /// Block-diagonal tensor product, modes of `self` first.
    pub fn tensor(&self, other: &Self) -> Self {
        let (na, nb) = (2 * self.m, 2 * other.m);
        let mut x = DMatrix::zeros(na + nb, na + nb);
        x.view_mut((0, 0), (na, na)).copy_from(&self.x);
        x.view_mut((na, na), (nb, nb)).copy_from(&other.x);
        let mut y = DMatrix::zeros(na + nb, na + nb);
        y.view_mut((0, 0), (na, na)).copy_from(&self.y);
        y.view_mut((na, na), (nb, nb)).copy_from(&other.y);
        let dshift = if self.dshift.is_some() || other.dshift.is_some() {
            let mut s = DVector::zeros(na + nb);
            if let Some(sa) = &self.dshift {
                s.rows_mut(0, na).copy_from(sa);
            }
            if let Some(sb) = &other.dshift {
                s.rows_mut(na, nb).copy_from(sb);
            }
            Some(s)
        } else {
            None
        };
        Self {
            m: self.m + other.m,
            x,
            y,
            dshift,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_is_cp_and_neutral() {
        let id = GaussianChannel::identity(2);
        assert!(id.is_completely_positive(1e-12));
        let again = id.compose(&id).unwrap();
        assert_eq!(&again, &id);
    }

    #[test]
    fn cp_boundary_of_phase_covariant_map() {
        // CP exactly when y >= |1 - x|.
        assert!(GaussianChannel::phase_covariant(0.5, 0.5)
            .unwrap()
            .is_completely_positive(1e-12));
        assert!(!GaussianChannel::phase_covariant(0.5, 0.49)
            .unwrap()
            .is_completely_positive(1e-12));
        assert!(GaussianChannel::phase_covariant(1.0, 0.0)
            .unwrap()
            .is_completely_positive(1e-12));
        assert!(GaussianChannel::phase_covariant(2.0, 1.0)
            .unwrap()
            .is_completely_positive(1e-9));
        assert!(!GaussianChannel::phase_covariant(2.0, 0.9)
            .unwrap()
            .is_completely_positive(1e-9));
        assert!(GaussianChannel::phase_covariant(-0.1, 0.0).is_err());
    }

    #[test]
    fn phase_covariant_maps_compose_in_closed_form() {
        let after = GaussianChannel::phase_covariant(0.7, 0.4).unwrap();
        let before = GaussianChannel::phase_covariant(0.5, 0.2).unwrap();
        let combined = after.compose(&before).unwrap();
        let expected = GaussianChannel::phase_covariant(0.7 * 0.5, 0.7 * 0.2 + 0.4).unwrap();
        assert_abs_diff_eq!(combined.xmat(), expected.xmat(), epsilon = 1e-14);
        assert_abs_diff_eq!(combined.ymat(), expected.ymat(), epsilon = 1e-14);
    }

    #[test]
    fn phase_rotation_is_symplectic_and_additive() {
        let rot = GaussianChannel::phase_rotation(0.8, &[1.0, -1.0]).unwrap();
        let om = symplectic::symplectic_form(2).unwrap();
        let resid = rot.xmat() * &om * rot.xmat().transpose() - &om;
        assert!(resid.amax() < 1e-14);
        assert!(rot.is_completely_positive(1e-12));

        let a = GaussianChannel::phase_rotation(0.3, &[1.0, -1.0]).unwrap();
        let b = GaussianChannel::phase_rotation(0.5, &[1.0, -1.0]).unwrap();
        let ab = a.compose(&b).unwrap();
        assert_abs_diff_eq!(ab.xmat(), rot.xmat(), epsilon = 1e-14);

        let zero = GaussianChannel::phase_rotation(0.0, &[1.0]).unwrap();
        assert_eq!(zero.xmat(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn rotation_splits_phase_across_conjugate_modes() {
        let phi = 1.2;
        let rot = GaussianChannel::phase_rotation(phi, &[1.0, -1.0]).unwrap();
        let x = rot.xmat();
        assert_abs_diff_eq!(x[(0, 0)], (phi / 2.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[(0, 1)], (phi / 2.0).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[(2, 3)], -(phi / 2.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn tensor_stacks_blocks() {
        let a = GaussianChannel::phase_covariant(0.5, 0.5).unwrap();
        let b = GaussianChannel::identity(1);
        let t = a.tensor(&b);
        assert_eq!(t.modes(), 2);
        assert!(t.is_completely_positive(1e-12));
        assert_abs_diff_eq!(t.xmat()[(0, 0)], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.xmat()[(2, 2)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.ymat()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.ymat()[(2, 2)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn shifts_accumulate_through_composition() {
        let shift = |v: [f64; 2]| {
            GaussianChannel::new(
                DMatrix::identity(2, 2),
                DMatrix::zeros(2, 2),
                Some(DVector::from_row_slice(&v)),
            )
            .unwrap()
        };
        let halve = GaussianChannel::phase_covariant(0.25, 0.75).unwrap();
        // Apply shift first, then attenuate: net shift is X * s.
        let net = halve.compose(&shift([1.0, 0.0])).unwrap();
        let s = net.dshift().unwrap();
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-15);
        // Shift after attenuation passes through unchanged.
        let net = shift([0.0, 2.0]).compose(&halve).unwrap();
        let s = net.dshift().unwrap();
        assert_abs_diff_eq!(s[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(GaussianChannel::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 3), None).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(GaussianChannel::new(DMatrix::identity(2, 2), asym, None).is_err());
        assert!(GaussianChannel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            Some(DVector::zeros(4))
        )
        .is_err());
        let a = GaussianChannel::identity(1);
        let b = GaussianChannel::identity(2);
        assert!(a.compose(&b).is_err());
    }
}
