//! Parametrized Gaussian families, symmetric logarithmic derivatives and the
//! two information matrices built from them: the Fisher matrix F and the
//! mean-commutator matrix J.
//!
//! The SLD of a Gaussian state is at most quadratic in the quadratures,
//! L = L0 + L1·r + r·L2·r. Its coefficients come from the Williamson normal
//! form of V: the derivative ∂V is rotated into the normal-mode frame,
//! expanded mode-pair by mode-pair over a fixed 2x2 basis, and each component
//! divided by ν_j ν_k ∓ 1. Those denominators vanish on the pure-state
//! manifold, which is where all the care in this module lives.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{GqmError, Result};
use crate::state::GaussianState;
use crate::symplectic::{self, Williamson};

/// Threshold under which an SLD denominator ν_j ν_k ∓ 1 counts as singular.
pub const EPS_PURE: f64 = 1e-8;

/// Derivatives of a family at one point: per-parameter ∂d and ∂V.
#[derive(Debug, Clone)]
pub struct FamilyDerivatives {
    pub dd: Vec<DVector<f64>>,
    pub dv: Vec<DMatrix<f64>>,
}

pub trait ParametrizedFamily {
    fn dim_theta(&self) -> usize;

    fn eval(&self, theta: &[f64]) -> Result<GaussianState>;

    /// Families with closed-form derivatives return them here; the default
    /// says "use finite differences".
    fn analytic_derivatives(&self, _theta: &[f64]) -> Result<Option<FamilyDerivatives>> {
        Ok(None)
    }
}

#[derive(Debug, Clone)]
pub struct FdOptions {
    /// Step rule: h_i = max(base_step, base_step * |θ_i|).
    pub base_step: f64,
    /// Combine steps h and h/2 as (4 D(h/2) − D(h)) / 3.
    pub richardson: bool,
    /// Absolute per-parameter overrides for h_i.
    pub per_param_step: Option<Vec<f64>>,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            base_step: 1e-6,
            richardson: false,
            per_param_step: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DerivativeMethod {
    /// Require the family's own derivatives; error if it has none.
    Analytic,
    FiniteDifference(FdOptions),
}

impl Default for DerivativeMethod {
    fn default() -> Self {
        Self::FiniteDifference(FdOptions::default())
    }
}

/// Which derivative path a report actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeKind {
    Analytic,
    FiniteDifference,
}

/// SLD of one parameter direction, L = L0 + Σ L1_i r_i + Σ r_i (L2)_ij r_j.
#[derive(Debug, Clone)]
pub struct SldCoefficients {
    pub l0: f64,
    pub l1: DVector<f64>,
    pub l2: DMatrix<f64>,
    /// Singular basis terms dropped because their coefficient also vanished.
    pub regularized_terms: usize,
    /// A singular denominator was kept because its coefficient did not
    /// vanish; the state sits next to the pure manifold and the SLD is large
    /// but finite.
    pub near_pure_boundary: bool,
}

#[derive(Debug, Clone, Default)]
pub struct QfiDiagnostics {
    /// Dropped singular terms, one count per parameter.
    pub regularized_terms: Vec<usize>,
    pub near_pure_boundary: bool,
    /// Largest |F - Fᵀ| entry before symmetrization.
    pub f_asymmetry: f64,
    /// Largest symmetric-part entry of J before antisymmetrization.
    pub j_asymmetry: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct QfiReport {
    pub f: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub nu: DVector<f64>,
    pub derivative_method: DerivativeKind,
    pub diagnostics: QfiDiagnostics,
}

/// Per-parameter ∂d and ∂V of `family` at `theta`, either straight from the
/// family or by central differences.
pub fn state_derivatives<F>(
    family: &F,
    theta: &[f64],
    method: &DerivativeMethod,
) -> Result<FamilyDerivatives>
where
    F: ParametrizedFamily + ?Sized,
{
    if theta.len() != family.dim_theta() {
        return Err(GqmError::InvalidArgument(format!(
            "family has {} parameter(s), got {}",
            family.dim_theta(),
            theta.len()
        )));
    }
    match method {
        DerivativeMethod::Analytic => {
            let derivs = family.analytic_derivatives(theta)?.ok_or_else(|| {
                GqmError::InvalidArgument(
                    "analytic derivatives requested but the family does not provide them".into(),
                )
            })?;
            validate_derivatives(family.dim_theta(), &derivs)?;
            Ok(derivs)
        }
        DerivativeMethod::FiniteDifference(opts) => finite_differences(family, theta, opts),
    }
}

fn validate_derivatives(k: usize, derivs: &FamilyDerivatives) -> Result<()> {
    if derivs.dd.len() != k || derivs.dv.len() != k {
        return Err(GqmError::InvalidArgument(format!(
            "family returned {} ∂d and {} ∂V entries for {k} parameter(s)",
            derivs.dd.len(),
            derivs.dv.len()
        )));
    }
    for (i, dv) in derivs.dv.iter().enumerate() {
        let asym = symplectic::max_asymmetry(dv);
        if asym > 1e-9 * 1.0f64.max(dv.amax()) {
            return Err(GqmError::InvalidArgument(format!(
                "∂V for parameter {i} is not symmetric (asymmetry {asym:.3e})"
            )));
        }
    }
    Ok(())
}

fn finite_differences<F>(family: &F, theta: &[f64], opts: &FdOptions) -> Result<FamilyDerivatives>
where
    F: ParametrizedFamily + ?Sized,
{
    let k = theta.len();
    let mut dd = Vec::with_capacity(k);
    let mut dv = Vec::with_capacity(k);
    for i in 0..k {
        let h = opts
            .per_param_step
            .as_ref()
            .and_then(|steps| steps.get(i).copied())
            .unwrap_or_else(|| opts.base_step.max(opts.base_step * theta[i].abs()));
        let (mut di, mut vi) = central_difference(family, theta, i, h)?;
        if opts.richardson {
            let (dh, vh) = central_difference(family, theta, i, h / 2.0)?;
            di = (dh * 4.0 - di) / 3.0;
            vi = (vh * 4.0 - vi) / 3.0;
        }
        let sym = (&vi + vi.transpose()) * 0.5;
        dd.push(di);
        dv.push(sym);
    }
    Ok(FamilyDerivatives { dd, dv })
}

fn central_difference<F>(
    family: &F,
    theta: &[f64],
    i: usize,
    h: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: ParametrizedFamily + ?Sized,
{
    let mut shifted = theta.to_vec();
    shifted[i] = theta[i] + h;
    let plus = family
        .eval(&shifted)
        .map_err(|e| GqmError::InvalidArgument(format!("finite difference for parameter {i}: {e}")))?;
    shifted[i] = theta[i] - h;
    let minus = family
        .eval(&shifted)
        .map_err(|e| GqmError::InvalidArgument(format!("finite difference for parameter {i}: {e}")))?;
    let dd = (plus.displacement() - minus.displacement()) / (2.0 * h);
    let dv = (plus.covariance() - minus.covariance()) / (2.0 * h);
    Ok((dd, dv))
}

fn m2_basis() -> [Matrix2<f64>; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        Matrix2::new(0.0, s, -s, 0.0),
        Matrix2::new(s, 0.0, 0.0, -s),
        Matrix2::new(s, 0.0, 0.0, s),
        Matrix2::new(0.0, s, s, 0.0),
    ]
}

/// SLD coefficients for one derivative direction (∂V, ∂d) at `state`.
pub fn sld_coefficients(
    state: &GaussianState,
    dv: &DMatrix<f64>,
    dd: &DVector<f64>,
) -> Result<SldCoefficients> {
    let n = 2 * state.modes();
    if dv.nrows() != n || dv.ncols() != n || dd.len() != n {
        return Err(GqmError::InvalidArgument(format!(
            "derivative shapes {}x{} / {} do not match a {}-mode state",
            dv.nrows(),
            dv.ncols(),
            dd.len(),
            state.modes()
        )));
    }
    let asym = symplectic::max_asymmetry(dv);
    if asym > 1e-9 * 1.0f64.max(dv.amax()) {
        return Err(GqmError::InvalidArgument(format!(
            "∂V must be symmetric, asymmetry {asym:.3e}"
        )));
    }
    let w = symplectic::williamson(state.covariance())?;
    let v_inv = invert_covariance(state.covariance())?;
    build_sld(state, &w, &v_inv, dv, dd)
}

fn invert_covariance(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    v.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| GqmError::NumericFailure("covariance matrix is not positive definite".into()))
}

fn build_sld(
    state: &GaussianState,
    w: &Williamson,
    v_inv: &DMatrix<f64>,
    dv: &DMatrix<f64>,
    dd: &DVector<f64>,
) -> Result<SldCoefficients> {
    let m = state.modes();
    let om = symplectic::symplectic_form(m)?;
    // Symplectic inverse, exact for any symplectic S.
    let s_inv = -(&om * w.s.transpose() * &om);
    let vt = &s_inv * dv * s_inv.transpose();
    let basis = m2_basis();
    let scale = 1.0f64.max(dv.norm());

    let mut l2t = DMatrix::zeros(2 * m, 2 * m);
    let mut dropped = 0usize;
    let mut near_pure = false;
    for j in 0..m {
        for k in 0..m {
            let block = vt.view((2 * k, 2 * j), (2, 2));
            for (l, mat) in basis.iter().enumerate() {
                let mut a = 0.0;
                for p in 0..2 {
                    for q in 0..2 {
                        a += block[(q, p)] * mat[(p, q)];
                    }
                }
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                let den = w.nu[j] * w.nu[k] - sign;
                if den.abs() < EPS_PURE {
                    if a.abs() <= EPS_PURE * scale {
                        dropped += 1;
                        continue;
                    }
                    if den.abs() < 1e-13 {
                        return Err(GqmError::NumericFailure(format!(
                            "non-smooth pure-state direction: SLD term with denominator \
                             {den:.3e} and coefficient {a:.3e}"
                        )));
                    }
                    near_pure = true;
                }
                let coeff = a / den;
                for p in 0..2 {
                    for q in 0..2 {
                        l2t[(2 * j + p, 2 * k + q)] += coeff * mat[(p, q)];
                    }
                }
            }
        }
    }
    let raw = s_inv.transpose() * l2t * &s_inv;
    let l2 = (&raw + raw.transpose()) * 0.5;
    let d = state.displacement();
    let l1 = v_inv * dd * 2.0 - &l2 * d * 2.0;
    let l0 = -0.5 * (state.covariance() * &l2).trace() - l1.dot(d) - d.dot(&(&l2 * d));
    Ok(SldCoefficients {
        l0,
        l1,
        l2,
        regularized_terms: dropped,
        near_pure_boundary: near_pure,
    })
}

/// Evaluates F, J and the symplectic spectrum of `family` at `theta`.
///
/// F_ηζ = ½ tr[(∂_ζV) L2_η] + 2 (∂_ηd)ᵀ V⁻¹ (∂_ζd), symmetrized;
/// J_ηζ = 2 tr(Ω L2_ζ V L2_η) + 2 (∂_ηd)ᵀ V⁻¹ Ω V⁻¹ (∂_ζd), antisymmetrized.
/// The discarded residuals land in the diagnostics, with a warning past 1e-6.
pub fn qfi_matrix<F>(family: &F, theta: &[f64], method: &DerivativeMethod) -> Result<QfiReport>
where
    F: ParametrizedFamily + ?Sized,
{
    let k = family.dim_theta();
    if theta.len() != k {
        return Err(GqmError::InvalidArgument(format!(
            "family has {k} parameter(s), got {}",
            theta.len()
        )));
    }
    let state = family.eval(theta)?;
    let derivs = state_derivatives(family, theta, method)?;
    let kind = match method {
        DerivativeMethod::Analytic => DerivativeKind::Analytic,
        DerivativeMethod::FiniteDifference(_) => DerivativeKind::FiniteDifference,
    };

    let v = state.covariance();
    let w = symplectic::williamson(v)?;
    let v_inv = invert_covariance(v)?;
    let om = symplectic::symplectic_form(state.modes())?;

    let mut slds = Vec::with_capacity(k);
    for i in 0..k {
        slds.push(build_sld(&state, &w, &v_inv, &derivs.dv[i], &derivs.dd[i])?);
    }

    // Shared factors for the displacement parts of F and J.
    let vinv_dd: Vec<DVector<f64>> = derivs.dd.iter().map(|dd| &v_inv * dd).collect();
    let g = &v_inv * &om * &v_inv;

    let mut f = DMatrix::zeros(k, k);
    let mut j = DMatrix::zeros(k, k);
    for e in 0..k {
        for z in 0..k {
            f[(e, z)] = 0.5 * (&derivs.dv[z] * &slds[e].l2).trace()
                + 2.0 * derivs.dd[e].dot(&vinv_dd[z]);
            j[(e, z)] = 2.0 * (&om * &slds[z].l2 * v * &slds[e].l2).trace()
                + 2.0 * derivs.dd[e].dot(&(&g * &derivs.dd[z]));
        }
    }

    let f_asymmetry = symplectic::max_asymmetry(&f);
    let f = (&f + f.transpose()) * 0.5;
    let j_sym = (&j + j.transpose()) * 0.5;
    let j_asymmetry = j_sym.amax();
    let j = (&j - j.transpose()) * 0.5;

    let mut diagnostics = QfiDiagnostics {
        regularized_terms: slds.iter().map(|s| s.regularized_terms).collect(),
        near_pure_boundary: slds.iter().any(|s| s.near_pure_boundary),
        f_asymmetry,
        j_asymmetry,
        warnings: Vec::new(),
    };
    if diagnostics.near_pure_boundary {
        diagnostics.warnings.push(
            "near pure-state boundary: SLD denominators below 1e-8 were retained".into(),
        );
    }
    if f_asymmetry > 1e-6 {
        diagnostics
            .warnings
            .push(format!("QFI symmetrization residual {f_asymmetry:.3e}"));
    }
    if j_asymmetry > 1e-6 {
        diagnostics
            .warnings
            .push(format!("J antisymmetrization residual {j_asymmetry:.3e}"));
    }

    Ok(QfiReport {
        f,
        j,
        nu: w.nu,
        derivative_method: kind,
        diagnostics,
    })
}

/// The mean-commutator matrix alone; same computation as [`qfi_matrix`].
pub fn j_matrix<F>(family: &F, theta: &[f64], method: &DerivativeMethod) -> Result<DMatrix<f64>>
where
    F: ParametrizedFamily + ?Sized,
{
    Ok(qfi_matrix(family, theta, method)?.j)
}
