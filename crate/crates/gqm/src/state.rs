//! Gaussian states as immutable (displacement, covariance) pairs.
//!
//! Conventions, fixed once and used everywhere: quadrature ordering
//! q1, p1, ..., qm, pm; displacement entries √2(Re α, Im α) per mode; vacuum
//! covariance equal to the identity. A state is physical iff every symplectic
//! eigenvalue of `V` is at least 1.

use nalgebra::{Complex, DMatrix, DVector};

use crate::channel::GaussianChannel;
use crate::error::{GqmError, Result};
use crate::symplectic::{self, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    m: usize,
    d: DVector<f64>,
    v: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state from raw moments, verifying symmetry and physicality of
    /// `V` within tolerance 1e-9.
    pub fn new(d: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        if d.len() == 0 || d.len() % 2 != 0 || v.nrows() != d.len() || v.ncols() != d.len() {
            return Err(GqmError::InvalidArgument(format!(
                "displacement length {} and covariance shape {}x{} do not describe m modes",
                d.len(),
                v.nrows(),
                v.ncols()
            )));
        }
        if !symplectic::is_physical_covariance(&v, DEFAULT_TOL)? {
            let min_nu = symplectic::symplectic_eigenvalues(&v)
                .map(|nu| nu.min())
                .unwrap_or(f64::NEG_INFINITY);
            return Err(GqmError::NonPhysical {
                min_nu,
                tol: DEFAULT_TOL,
            });
        }
        Ok(Self::from_parts_unchecked(d, v))
    }

    /// Internal fast path for constructors whose output is physical by
    /// construction (and for channel application, which preserves physicality
    /// for CP channels).
    pub(crate) fn from_parts_unchecked(d: DVector<f64>, v: DMatrix<f64>) -> Self {
        let m = d.len() / 2;
        Self { m, d, v }
    }

    /// The m-mode vacuum: d = 0, V = I.
    pub fn vacuum(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(GqmError::InvalidArgument(
                "mode count must be at least 1".into(),
            ));
        }
        Ok(Self::from_parts_unchecked(
            DVector::zeros(2 * m),
            DMatrix::identity(2 * m, 2 * m),
        ))
    }

    /// Product of thermal modes with the given mean occupations:
    /// `V = ⊕ (2 n̄_i + 1) I2`.
    pub fn thermal(nbar_per_mode: &[f64]) -> Result<Self> {
        if nbar_per_mode.is_empty() {
            return Err(GqmError::InvalidArgument(
                "at least one mode occupation required".into(),
            ));
        }
        if let Some(bad) = nbar_per_mode.iter().find(|&&n| !(n >= 0.0)) {
            return Err(GqmError::InvalidArgument(format!(
                "thermal occupation must be nonnegative, got {bad}"
            )));
        }
        let m = nbar_per_mode.len();
        let mut v = DMatrix::zeros(2 * m, 2 * m);
        for (i, &n) in nbar_per_mode.iter().enumerate() {
            v[(2 * i, 2 * i)] = 2.0 * n + 1.0;
            v[(2 * i + 1, 2 * i + 1)] = 2.0 * n + 1.0;
        }
        Ok(Self::from_parts_unchecked(DVector::zeros(2 * m), v))
    }

    /// Product of coherent states, one amplitude per mode.
    pub fn coherent(alphas: &[Complex<f64>]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(GqmError::InvalidArgument(
                "at least one amplitude required".into(),
            ));
        }
        let m = alphas.len();
        let mut d = DVector::zeros(2 * m);
        for (i, a) in alphas.iter().enumerate() {
            d[2 * i] = std::f64::consts::SQRT_2 * a.re;
            d[2 * i + 1] = std::f64::consts::SQRT_2 * a.im;
        }
        Ok(Self::from_parts_unchecked(d, DMatrix::identity(2 * m, 2 * m)))
    }

    /// Two-mode displaced squeezed state: displacements α, β on the two modes
    /// and two-mode squeezing r. The covariance has cosh 2r on the diagonal
    /// and ±sinh 2r cross-mode blocks (+ on qq, − on pp); r = 0 reduces to a
    /// pair of coherent states.
    pub fn tmdss(alpha: Complex<f64>, beta: Complex<f64>, r: f64) -> Self {
        let sq2 = std::f64::consts::SQRT_2;
        let d = DVector::from_vec(vec![
            sq2 * alpha.re,
            sq2 * alpha.im,
            sq2 * beta.re,
            sq2 * beta.im,
        ]);
        let c = (2.0 * r).cosh();
        let s = (2.0 * r).sinh();
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
        Self::from_parts_unchecked(d, v)
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Mean number of excitations per mode,
    /// `n̄ = (tr V / 2 + |d|²) / (2m) − 1/2`.
    ///
    /// For a two-mode displaced squeezed state with |α| = |β| this equals
    /// sinh²r + |α|².
    pub fn mean_energy_per_mode(&self) -> f64 {
        (self.v.trace() / 2.0 + self.d.norm_squared()) / (2.0 * self.m as f64) - 0.5
    }

    /// Tensor product, modes of `self` first.
    pub fn tensor(&self, other: &Self) -> Self {
        let n = self.d.len() + other.d.len();
        let mut d = DVector::zeros(n);
        d.rows_mut(0, self.d.len()).copy_from(&self.d);
        d.rows_mut(self.d.len(), other.d.len()).copy_from(&other.d);
        let mut v = DMatrix::zeros(n, n);
        v.view_mut((0, 0), (self.d.len(), self.d.len()))
            .copy_from(&self.v);
        v.view_mut(
            (self.d.len(), self.d.len()),
            (other.d.len(), other.d.len()),
        )
        .copy_from(&other.v);
        Self::from_parts_unchecked(d, v)
    }

    /// Sends the state through a Gaussian channel: `d -> Xd (+ shift)`,
    /// `V -> XVX^T + Y`. The output moments are taken as-is; a CP channel
    /// maps physical states to physical states, and non-CP channels are
    /// accepted deliberately for boundary studies.
    pub fn apply_channel(&self, channel: &GaussianChannel) -> Result<Self> {
        if channel.modes() != self.m {
            return Err(GqmError::InvalidArgument(format!(
                "channel acts on {} mode(s), state has {}",
                channel.modes(),
                self.m
            )));
        }
        let mut d = channel.xmat() * &self.d;
        if let Some(shift) = channel.dshift() {
            d += shift;
        }
        let v = channel.xmat() * &self.v * channel.xmat().transpose() + channel.ymat();
        Ok(Self::from_parts_unchecked(d, v))
    }

    /// Serializes to a single-line JSON record `{"m":…,"d":[…],"v":[…]}` with
    /// `v` flattened row-major and every float printed with 17 significant
    /// digits (lossless for f64).
    pub fn to_record(&self) -> String {
        let fmt = |x: f64| format!("{x:.16e}");
        let d: Vec<String> = self.d.iter().map(|&x| fmt(x)).collect();
        let mut v = Vec::with_capacity(4 * self.m * self.m);
        for i in 0..2 * self.m {
            for j in 0..2 * self.m {
                v.push(fmt(self.v[(i, j)]));
            }
        }
        format!(
            "{{\"m\":{},\"d\":[{}],\"v\":[{}]}}",
            self.m,
            d.join(","),
            v.join(",")
        )
    }

    /// Parses a record produced by [`to_record`](Self::to_record), re-running
    /// the physicality check.
    pub fn from_record(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| GqmError::MalformedRecord(e.to_string()))?;
        let m = value["m"]
            .as_u64()
            .ok_or_else(|| GqmError::MalformedRecord("missing mode count".into()))?
            as usize;
        let read_array = |key: &str, expected: usize| -> Result<Vec<f64>> {
            let arr = value[key]
                .as_array()
                .ok_or_else(|| GqmError::MalformedRecord(format!("missing array '{key}'")))?;
            if arr.len() != expected {
                return Err(GqmError::MalformedRecord(format!(
                    "array '{key}' has length {}, expected {expected}",
                    arr.len()
                )));
            }
            arr.iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| GqmError::MalformedRecord(format!("non-numeric entry in '{key}'")))
                })
                .collect()
        };
        let d = read_array("d", 2 * m)?;
        let v = read_array("v", 4 * m * m)?;
        Self::new(
            DVector::from_vec(d),
            DMatrix::from_row_slice(2 * m, 2 * m, &v),
        )
    }
}
