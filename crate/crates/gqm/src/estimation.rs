//! Estimation-theoretic figures built from the information matrices: the
//! Cramér–Rao covariance bound, total-variance figures for individual and
//! simultaneous strategies, their ratio, and the compatibility report.

use nalgebra::DMatrix;

use crate::error::{GqmError, Result};
use crate::symplectic;

/// Answers to the measurement-compatibility questions for one (F, J) pair:
/// do all SLDs commute in mean, and are the parameters statistically
/// independent (uncorrelated Fisher off-diagonals)?
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub commuting_slds: bool,
    pub max_abs_j: f64,
    pub independent_parameters: bool,
    /// Largest |F_ηζ| / √(F_ηη F_ζζ) over η ≠ ζ.
    pub max_normalized_offdiag: f64,
    /// Whether one probe is simultaneously optimal for all parameters. That
    /// is a statement about probe optimization, not about (F, J), so this
    /// function always leaves it undecided.
    pub single_probe_optimality: Option<bool>,
    pub kappa: usize,
    pub tol_j: f64,
    pub tol_f: f64,
}

fn check_information_matrix(f: &DMatrix<f64>) -> Result<()> {
    if f.nrows() == 0 || f.nrows() != f.ncols() {
        return Err(GqmError::InvalidArgument(format!(
            "information matrix must be square and nonempty, got {}x{}",
            f.nrows(),
            f.ncols()
        )));
    }
    let asym = symplectic::max_asymmetry(f);
    if asym > 1e-6 * 1.0f64.max(f.amax()) {
        return Err(GqmError::InvalidArgument(format!(
            "information matrix must be symmetric, asymmetry {asym:.3e}"
        )));
    }
    Ok(())
}

/// Inverse through a symmetric eigendecomposition, refusing matrices with a
/// numerically null direction (eigenvalue ≤ 1e-12 times the largest).
fn checked_inverse(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_information_matrix(f)?;
    let eig = f.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.amax();
    let floor = 1e-12 * lam_max.max(f64::MIN_POSITIVE);
    let null_directions: Vec<Vec<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &lam)| lam <= floor)
        .map(|(i, _)| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    if !null_directions.is_empty() {
        return Err(GqmError::SingularInformation { null_directions });
    }
    let k = f.nrows();
    let mut inv = DMatrix::zeros(k, k);
    for i in 0..k {
        let q = eig.eigenvectors.column(i);
        let w = 1.0 / eig.eigenvalues[i];
        for a in 0..k {
            for b in 0..k {
                inv[(a, b)] += w * q[a] * q[b];
            }
        }
    }
    Ok(inv)
}

/// Covariance lower bound (M F)⁻¹ for M repetitions, computed as F⁻¹ / M so
/// that the 1/M scaling is exact.
pub fn crb_covariance_bound(f: &DMatrix<f64>, repetitions: u64) -> Result<DMatrix<f64>> {
    if repetitions == 0 {
        return Err(GqmError::InvalidArgument(
            "repetition count must be at least 1".into(),
        ));
    }
    Ok(checked_inverse(f)? / repetitions as f64)
}

/// Total variance when each parameter is estimated in its own experiment:
/// Σ_η 1/F_ηη.
pub fn delta_ind(f: &DMatrix<f64>) -> Result<f64> {
    check_information_matrix(f)?;
    let mut total = 0.0;
    for i in 0..f.nrows() {
        let fii = f[(i, i)];
        if fii <= 0.0 {
            return Err(GqmError::InvalidArgument(format!(
                "diagonal information entry {i} is {fii:.3e}, not positive"
            )));
        }
        total += 1.0 / fii;
    }
    Ok(total)
}

/// Total variance for one joint experiment, κ⁻¹ tr F⁻¹ (the κ⁻¹ accounts for
/// the individual strategy splitting its repetitions κ ways).
pub fn delta_sim(f: &DMatrix<f64>) -> Result<f64> {
    let inv = checked_inverse(f)?;
    Ok(inv.trace() / f.nrows() as f64)
}

/// Performance ratio R = Δ^ind / Δ^sim, in (0, κ] with κ reached exactly for
/// diagonal F.
pub fn ratio(f: &DMatrix<f64>) -> Result<f64> {
    Ok(delta_ind(f)? / delta_sim(f)?)
}

pub fn compatibility_report(
    f: &DMatrix<f64>,
    j: &DMatrix<f64>,
    tol_j: f64,
    tol_f: f64,
) -> Result<CompatibilityReport> {
    check_information_matrix(f)?;
    if j.nrows() != f.nrows() || j.ncols() != f.ncols() {
        return Err(GqmError::InvalidArgument(format!(
            "J shape {}x{} does not match F shape {}x{}",
            j.nrows(),
            j.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let k = f.nrows();
    let max_abs_j = j.amax();
    let mut max_normalized_offdiag: f64 = 0.0;
    for a in 0..k {
        for b in (a + 1)..k {
            let denom = f[(a, a)] * f[(b, b)];
            if denom <= 0.0 {
                return Err(GqmError::InvalidArgument(format!(
                    "cannot normalize off-diagonal ({a},{b}): nonpositive diagonal"
                )));
            }
            max_normalized_offdiag = max_normalized_offdiag.max(f[(a, b)].abs() / denom.sqrt());
        }
    }
    Ok(CompatibilityReport {
        commuting_slds: max_abs_j <= tol_j,
        max_abs_j,
        independent_parameters: max_normalized_offdiag <= tol_f,
        max_normalized_offdiag,
        single_probe_optimality: None,
        kappa: k,
        tol_j,
        tol_f,
    })
}
