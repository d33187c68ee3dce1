//! Brute-force cross-check in a truncated number basis.
//!
//! Everything else in this crate trusts the Gaussian formalism. This module
//! does not: it builds single-mode density matrices as explicit (N+1)x(N+1)
//! arrays, pushes them through attenuator/amplifier Kraus sums, and computes
//! F and J by solving the SLD equation in the eigenbasis of rho. Agreement
//! between the two paths is the strongest correctness evidence the crate has.
//! Speed is a non-goal here.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{GqmError, Result};
use crate::metrology::{FamilyDerivatives, ParametrizedFamily};
use crate::state::GaussianState;
use crate::symplectic;

type CMatrix = DMatrix<Complex<f64>>;

/// Truncation is accepted once less than this much trace has leaked out.
pub const LEAKAGE_BOUND: f64 = 1e-8;

/// Eigenvalue-pair floor below which SLD matrix elements are dropped. Plays
/// the same role as `metrology::EPS_PURE`, and the two are validated against
/// each other by the dual-path tests.
pub const SLD_FLOOR: f64 = 1e-12;

/// Hard ceiling for the automatic cutoff search.
pub const CUTOFF_CAP: usize = 256;

/// A single-mode density matrix truncated at photon number `cutoff`.
#[derive(Debug, Clone)]
pub struct TruncatedState {
    cutoff: usize,
    rho: CMatrix,
    leakage: f64,
}

impl TruncatedState {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Hermitian, unit trace (renormalized after truncation).
    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    /// Trace lost to truncation before renormalization.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn mean_photon(&self) -> f64 {
        (0..=self.cutoff).map(|n| n as f64 * self.rho[(n, n)].re).sum()
    }
}

fn annihilation(cutoff: usize) -> CMatrix {
    let dim = cutoff + 1;
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Quadratures q = (a + a†)/√2 and p = i(a† − a)/√2 in the truncated basis.
pub(crate) fn quadratures(cutoff: usize) -> [CMatrix; 2] {
    let a = annihilation(cutoff);
    let ad = a.adjoint();
    let inv_sqrt2 = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let q = (&a + &ad) * inv_sqrt2;
    let p = (&ad - &a) * (inv_sqrt2 * Complex::i());
    [q, p]
}

fn displacement_op(alpha: Complex<f64>, cutoff: usize) -> CMatrix {
    let a = annihilation(cutoff);
    let gen = a.adjoint() * alpha - a * alpha.conj();
    gen.exp()
}

fn squeeze_op(r: f64, cutoff: usize) -> CMatrix {
    // exp[(r/2)(a² − a†²)], which squeezes q for r > 0.
    let a = annihilation(cutoff);
    let ad = a.adjoint();
    let gen = (&a * &a - &ad * &ad) * Complex::new(0.5 * r, 0.0);
    gen.exp()
}

fn thermal_density(nth: f64, cutoff: usize) -> Result<CMatrix> {
    if !(nth >= 0.0) {
        return Err(GqmError::InvalidArgument(format!(
            "thermal occupation must be >= 0, got {nth}"
        )));
    }
    let dim = cutoff + 1;
    let mut rho = CMatrix::zeros(dim, dim);
    if nth == 0.0 {
        rho[(0, 0)] = Complex::new(1.0, 0.0);
        return Ok(rho);
    }
    let ratio = nth / (1.0 + nth);
    let mut p = 1.0 / (1.0 + nth);
    for n in 0..dim {
        rho[(n, n)] = Complex::new(p, 0.0);
        p *= ratio;
    }
    Ok(rho)
}

/// Kraus application of the phase-covariant channel with multiplier x and
/// added noise y. Decomposed as a quantum-limited attenuator of
/// transmissivity η followed by an amplifier of gain G, with G = (x+y+1)/2
/// and η = x/G; complete positivity (y ≥ |1−x|) is exactly G ≥ 1, η ≤ 1.
fn apply_channel_xy(rho: &CMatrix, x: f64, y: f64) -> Result<CMatrix> {
    let g = (x + y + 1.0) / 2.0;
    if !(g >= 1.0 - 1e-12) || x < 0.0 {
        return Err(GqmError::InvalidArgument(format!(
            "channel ({x}, {y}) has no attenuator/amplifier decomposition"
        )));
    }
    let eta = x / g;
    if eta > 1.0 + 1e-12 {
        return Err(GqmError::InvalidArgument(format!(
            "channel ({x}, {y}) would need transmissivity {eta} > 1"
        )));
    }
    let eta = eta.min(1.0);
    let g = g.max(1.0);
    let dim = rho.nrows();
    let a = annihilation(dim - 1);

    let mut state = rho.clone();
    if eta < 1.0 {
        // A_k = sqrt((1-η)^k / k!) · η^{n/2} · a^k. The coefficient is kept
        // as a running product so no factorial ever overflows.
        let eta_half = CMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            (0..dim).map(|n| Complex::new(eta.powf(n as f64 / 2.0), 0.0)),
        ));
        let mut out = CMatrix::zeros(dim, dim);
        let mut ak = CMatrix::identity(dim, dim);
        let mut coef = 1.0;
        for k in 0..dim {
            if k > 0 {
                ak = &a * &ak;
                coef *= (1.0 - eta) / k as f64;
            }
            let kraus = (&eta_half * &ak) * Complex::new(coef.sqrt(), 0.0);
            out += &kraus * &state * kraus.adjoint();
        }
        state = out;
    }
    if g > 1.0 {
        // B_k = sqrt(μ^{2k} / (k! G)) · (a†)^k · G^{-n/2}, μ² = (G-1)/G.
        let mu2 = (g - 1.0) / g;
        let g_half = CMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            (0..dim).map(|n| Complex::new(g.powf(-(n as f64) / 2.0), 0.0)),
        ));
        let ad = a.adjoint();
        let mut out = CMatrix::zeros(dim, dim);
        let mut adk = CMatrix::identity(dim, dim);
        let mut coef = 1.0 / g;
        for k in 0..dim {
            if k > 0 {
                adk = &ad * &adk;
                coef *= mu2 / k as f64;
            }
            let kraus = (&adk * &g_half) * Complex::new(coef.sqrt(), 0.0);
            out += &kraus * &state * kraus.adjoint();
        }
        state = out;
    }
    Ok(state)
}

/// Number-basis density matrix of D(α)S(r)ρ_th(nth)S†D† pushed through the
/// phase-covariant channel (x, y). Errors with `IncreaseCutoff` when more
/// than `LEAKAGE_BOUND` of the trace falls outside the truncation.
pub fn fock_density(
    alpha: Complex<f64>,
    r: f64,
    nth: f64,
    x: f64,
    y: f64,
    cutoff: usize,
) -> Result<TruncatedState> {
    if cutoff == 0 {
        return Err(GqmError::InvalidArgument("cutoff must be at least 1".into()));
    }
    let disp = displacement_op(alpha, cutoff);
    let sq = squeeze_op(r, cutoff);
    let unitary = &disp * &sq;
    let rho0 = &unitary * thermal_density(nth, cutoff)? * unitary.adjoint();
    let rho = apply_channel_xy(&rho0, x, y)?;

    let leakage = 1.0 - rho.trace().re;
    if leakage > LEAKAGE_BOUND {
        return Err(GqmError::IncreaseCutoff {
            leakage,
            bound: LEAKAGE_BOUND,
            cutoff,
        });
    }
    let herm = (&rho + rho.adjoint()) * Complex::new(0.5, 0.0);
    let rho = &herm / Complex::new(herm.trace().re, 0.0);
    Ok(TruncatedState { cutoff, rho, leakage })
}

/// Like `fock_density`, but doubles the cutoff until the leakage bound is
/// met, capped at `CUTOFF_CAP`.
pub fn fock_density_auto(
    alpha: Complex<f64>,
    r: f64,
    nth: f64,
    x: f64,
    y: f64,
    start_cutoff: usize,
) -> Result<TruncatedState> {
    let mut cutoff = start_cutoff.clamp(1, CUTOFF_CAP);
    loop {
        match fock_density(alpha, r, nth, x, y, cutoff) {
            Err(GqmError::IncreaseCutoff { .. }) if cutoff < CUTOFF_CAP => {
                cutoff = (2 * cutoff).min(CUTOFF_CAP);
            }
            other => return other,
        }
    }
}

/// The Gaussian state this module's `fock_density` should reproduce:
/// d = √x·√2(Re α, Im α), V = x(2nth+1)diag(e^{−2r}, e^{2r}) + y·I.
pub fn single_mode_reference(
    alpha: Complex<f64>,
    r: f64,
    nth: f64,
    x: f64,
    y: f64,
) -> Result<GaussianState> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let d = DVector::from_row_slice(&[sqrt2 * x.sqrt() * alpha.re, sqrt2 * x.sqrt() * alpha.im]);
    let w = x * (2.0 * nth + 1.0);
    let v = DMatrix::from_diagonal(&DVector::from_row_slice(&[
        w * (-2.0 * r).exp() + y,
        w * (2.0 * r).exp() + y,
    ]));
    GaussianState::new(d, v)
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex<f64> {
    let mut t = Complex::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            t += a[(i, j)] * b[(j, i)];
        }
    }
    t
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub f: DMatrix<f64>,
    pub j: DMatrix<f64>,
    /// Largest |tr(ρL)| over the SLDs; should vanish.
    pub sld_zero_mean_max: f64,
}

/// F and J by direct linear algebra: ∂ρ by central differences, the SLD
/// solved entrywise in the eigenbasis of ρ, then F = Re tr(ρ L L'),
/// J = Im tr(ρ L L').
pub fn oracle_qfi_j<F>(family: F, theta: &[f64], h: f64) -> Result<OracleReport>
where
    F: Fn(&[f64]) -> Result<TruncatedState>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(GqmError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let n = theta.len();
    let base = family(theta)?;
    let dim = base.rho.nrows();

    let mut drhos = Vec::with_capacity(n);
    for i in 0..n {
        let mut plus = theta.to_vec();
        plus[i] += h;
        let mut minus = theta.to_vec();
        minus[i] -= h;
        let rp = family(&plus)?;
        let rm = family(&minus)?;
        if rp.rho.nrows() != dim || rm.rho.nrows() != dim {
            return Err(GqmError::InvalidArgument(
                "family evaluations must share one cutoff".into(),
            ));
        }
        drhos.push((&rp.rho - &rm.rho) / Complex::new(2.0 * h, 0.0));
    }

    let eig = SymmetricEigen::new(base.rho.clone());
    let u = &eig.eigenvectors;
    let ut = u.adjoint();
    let lam = &eig.eigenvalues;

    let mut slds = Vec::with_capacity(n);
    let mut zero_mean: f64 = 0.0;
    for dr in &drhos {
        let dr_eig = &ut * dr * u;
        let mut l = CMatrix::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                let s = lam[a] + lam[b];
                if s > SLD_FLOOR {
                    l[(a, b)] = dr_eig[(a, b)] * Complex::new(2.0 / s, 0.0);
                }
            }
        }
        let l = u * l * &ut;
        zero_mean = zero_mean.max(trace_product(&base.rho, &l).norm());
        slds.push(l);
    }

    let mut f = DMatrix::zeros(n, n);
    let mut j = DMatrix::zeros(n, n);
    for e in 0..n {
        let rho_le = &base.rho * &slds[e];
        for z in 0..n {
            let t = trace_product(&rho_le, &slds[z]);
            f[(e, z)] = t.re;
            j[(e, z)] = t.im;
        }
    }
    let f = (&f + f.transpose()) * 0.5;
    let j = (&j - j.transpose()) * 0.5;
    Ok(OracleReport { f, j, sld_zero_mean_max: zero_mean })
}

#[derive(Debug, Clone, Copy)]
pub struct MomentReport {
    pub order2: f64,
    pub order3: f64,
    pub order4: f64,
}

impl MomentReport {
    pub fn max(&self) -> f64 {
        self.order2.max(self.order3).max(self.order4)
    }
}

/// Largest deviation between truncated-basis quadrature moments
/// tr(ρ R̂…R̂) of orders 2–4 and their closed forms in terms of (d, V).
pub fn moment_check(
    alpha: Complex<f64>,
    r: f64,
    nth: f64,
    x: f64,
    y: f64,
    cutoff: usize,
) -> Result<MomentReport> {
    let state = fock_density(alpha, r, nth, x, y, cutoff)?;
    let reference = single_mode_reference(alpha, r, nth, x, y)?;
    let d = reference.displacement();
    let v = reference.covariance();
    let om = symplectic::symplectic_form(1)?;
    let rho = &state.rho;
    let quads = quadratures(cutoff);

    // Complexified second moments c[p][q] = ½(V_pq + iΩ_pq) save some noise
    // in the formulas below.
    let c = |p: usize, q: usize| Complex::new(v[(p, q)], om[(p, q)]) * 0.5;

    let mut pair = Vec::new();
    for p in 0..2 {
        for q in 0..2 {
            pair.push(&quads[p] * &quads[q]);
        }
    }
    let mut triple = Vec::new();
    for l in 0..2 {
        for pq in 0..4 {
            triple.push(&quads[l] * &pair[pq]);
        }
    }
    let rho_r = [rho * &quads[0], rho * &quads[1]];

    let mut order2: f64 = 0.0;
    for p in 0..2 {
        for q in 0..2 {
            let lhs = trace_product(rho, &pair[2 * p + q]);
            let rhs = Complex::from(d[p] * d[q]) + c(p, q);
            order2 = order2.max((lhs - rhs).norm());
        }
    }

    let mut order3: f64 = 0.0;
    for l in 0..2 {
        for p in 0..2 {
            for q in 0..2 {
                let lhs = trace_product(rho, &triple[4 * l + 2 * p + q]);
                let rhs = Complex::from(d[l] * d[p] * d[q])
                    + c(l, p) * d[q]
                    + c(p, q) * d[l]
                    + c(l, q) * d[p];
                order3 = order3.max((lhs - rhs).norm());
            }
        }
    }

    let mut order4: f64 = 0.0;
    for jj in 0..2 {
        for k in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    let lhs = trace_product(&rho_r[jj], &triple[4 * k + 2 * p + q]);
                    let rhs = Complex::from(d[jj] * d[k] * d[p] * d[q])
                        + c(jj, k) * (d[p] * d[q])
                        + c(jj, p) * (d[k] * d[q])
                        + c(k, p) * (d[jj] * d[q])
                        + c(jj, q) * (d[k] * d[p])
                        + c(k, q) * (d[jj] * d[p])
                        + c(p, q) * (d[jj] * d[k])
                        + c(jj, k) * c(p, q)
                        + c(jj, p) * c(k, q)
                        + c(jj, q) * c(k, p);
                    order4 = order4.max((lhs - rhs).norm());
                }
            }
        }
    }

    Ok(MomentReport { order2, order3, order4 })
}

/// Four-parameter single-mode family θ = (a, r, x, y): real displacement
/// amplitude, squeezing, channel multiplier, channel noise. Runs through
/// both the Gaussian engine (as a `ParametrizedFamily`) and the truncated
/// oracle (`density`), which is the whole point of it.
#[derive(Debug, Clone)]
pub struct SingleModeFamily {
    pub nth: f64,
    pub cutoff: usize,
}

impl SingleModeFamily {
    pub fn density(&self, theta: &[f64]) -> Result<TruncatedState> {
        let [a, r, x, y] = theta_4(theta)?;
        fock_density(Complex::new(a, 0.0), r, self.nth, x, y, self.cutoff)
    }
}

fn theta_4(theta: &[f64]) -> Result<[f64; 4]> {
    theta.try_into().map_err(|_| {
        GqmError::InvalidArgument(format!("expected 4 parameters, got {}", theta.len()))
    })
}

impl ParametrizedFamily for SingleModeFamily {
    fn dim_theta(&self) -> usize {
        4
    }

    fn eval(&self, theta: &[f64]) -> Result<GaussianState> {
        let [a, r, x, y] = theta_4(theta)?;
        if !(x > 0.0) {
            return Err(GqmError::InvalidArgument(format!(
                "channel multiplier must be positive, got {x}"
            )));
        }
        single_mode_reference(Complex::new(a, 0.0), r, self.nth, x, y)
    }

    fn analytic_derivatives(&self, theta: &[f64]) -> Result<Option<FamilyDerivatives>> {
        let [a, r, x, y] = theta_4(theta)?;
        let _ = y;
        let sqrt2 = std::f64::consts::SQRT_2;
        let w = 2.0 * self.nth + 1.0;
        let (em, ep) = ((-2.0 * r).exp(), (2.0 * r).exp());
        let dd = vec![
            DVector::from_row_slice(&[sqrt2 * x.sqrt(), 0.0]),
            DVector::zeros(2),
            DVector::from_row_slice(&[a / (sqrt2 * x.sqrt()), 0.0]),
            DVector::zeros(2),
        ];
        let diag = |e0: f64, e1: f64| DMatrix::from_diagonal(&DVector::from_row_slice(&[e0, e1]));
        let dv = vec![
            DMatrix::zeros(2, 2),
            diag(-2.0 * x * w * em, 2.0 * x * w * ep),
            diag(w * em, w * ep),
            DMatrix::identity(2, 2),
        ];
        Ok(Some(FamilyDerivatives { dd, dv }))
    }
}
