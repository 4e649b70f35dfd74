//! Weighted commutator estimates for `∂x1 |∇|^α`.
//!
//! For a weight pair `(varphi, phi)` from [`WeightParams`] the checks here
//! measure
//!
//! ```text
//! lhs = ∫ u varphi ∂x1|∇|^α u
//! T1  = ∫ ||∇|^{α/2}(u w)|²,   T2 = ∫ u² w²
//! ```
//!
//! with `w = phi` (plain form) or `w = sqrt(∂x1 varphi_M)` (rescaled form),
//! and fit the smallest `c2` with `lhs ≤ −c1 T1 + c2 T2` over a probe family.

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::probe::{bump_family, ProbeSpec};
use crate::spectral::Spectral;
use crate::weights::{cutoff_chi, WeightParams};
use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEAM_LEVEL: f64 = 1e-6;

/// `∫ u varphi ∂x1|∇|^α u` by spectral differentiation and grid quadrature.
pub fn commutator_form(sp: &Spectral, u: &RealField, w: &WeightParams, alpha: f64) -> Result<f64> {
    sp.grid().require_same(u.grid())?;
    let du = sp.dispersion(u, alpha)?;
    let varphi = w.varphi_field(*sp.grid());
    Ok(u.mul(&varphi).inner(&du))
}

/// Largest `|u|` on the outermost grid lines, where the weight wraps.
pub fn seam_level(u: &RealField) -> f64 {
    let g = *u.grid();
    let (nx, ny) = (g.n(0), g.n(1));
    let mut m: f64 = 0.0;
    for j in 0..ny {
        m = m.max(u.at(0, j).abs()).max(u.at(nx - 1, j).abs());
    }
    if g.dim() == 2 {
        for i in 0..nx {
            m = m.max(u.at(i, 0).abs()).max(u.at(i, ny - 1).abs());
        }
    }
    m
}

/// `σ1² > α/(2(1+α)) · (σ2² + … + σn²)` with `σ1 > 0`.
pub fn sigma_condition(sigma: &[f64], alpha: f64) -> bool {
    let rest: f64 = sigma[1..].iter().map(|s| s * s).sum();
    sigma[0] > 0.0 && sigma[0] * sigma[0] > alpha / (2.0 * (1.0 + alpha)) * rest
}

/// Symmetric matrix with `(1,1) = (1+α)σ1`, `(1,j) = ασ_j/2`, `(j,j) = σ1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixM {
    pub alpha: f64,
    pub sigma: Vec<f64>,
    pub entries: DMatrix<f64>,
}

impl MatrixM {
    pub fn build(alpha: f64, sigma: &[f64]) -> Result<Self> {
        if sigma.is_empty() || !(sigma[0] > 0.0) {
            return Err(Error::Precondition("matrix M needs sigma_1 > 0".into()));
        }
        let n = sigma.len();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = (1.0 + alpha) * sigma[0];
        for j in 1..n {
            m[(0, j)] = 0.5 * alpha * sigma[j];
            m[(j, 0)] = 0.5 * alpha * sigma[j];
            m[(j, j)] = sigma[0];
        }
        Ok(Self {
            alpha,
            sigma: sigma.to_vec(),
            entries: m,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_pd(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct SigmaScan {
    pub satisfying: usize,
    pub pd_among_satisfying: usize,
    /// Samples violating the condition, and how many of them are still PD.
    pub violating: usize,
    pub violating_pd: usize,
    /// First violating sample that is still PD, as `(α, σ)`.
    pub witness: Option<(f64, Vec<f64>)>,
}

/// Draws `(α, σ)` until `samples` of them satisfy the σ condition and
/// checks positive definiteness of `M` for every draw.
pub fn sigma_condition_scan(samples: usize, seed: u64) -> Result<SigmaScan> {
    const ALPHAS: [f64; 4] = [1.0, 1.3, 1.7, 1.99];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scan = SigmaScan {
        satisfying: 0,
        pd_among_satisfying: 0,
        violating: 0,
        violating_pd: 0,
        witness: None,
    };
    while scan.satisfying < samples {
        let alpha = ALPHAS[rng.gen_range(0..ALPHAS.len())];
        let n = rng.gen_range(2..=4);
        let mut sigma = vec![rng.gen_range(1e-3..2.0)];
        sigma.extend((1..n).map(|_| rng.gen_range(-2.0..2.0)));
        let pd = MatrixM::build(alpha, &sigma)?.is_pd();
        if sigma_condition(&sigma, alpha) {
            scan.satisfying += 1;
            scan.pd_among_satisfying += pd as usize;
        } else {
            scan.violating += 1;
            if pd {
                scan.violating_pd += 1;
                if scan.witness.is_none() {
                    scan.witness = Some((alpha, sigma));
                }
            }
        }
    }
    Ok(scan)
}

/// Which weight multiplies `u` in the smoothing and mass terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightForm {
    /// `phi`, as in the unscaled estimate.
    Plain,
    /// `sqrt(∂x1 varphi_M) = sqrt(σ1/M) phi_M`.
    Rescaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorReport {
    pub lhs: f64,
    pub smoothing_term: f64,
    pub mass_term: f64,
    pub c1_used: f64,
    pub c2_fitted: f64,
    pub slack: f64,
    pub seam_level: f64,
}

/// Default `c1`: `λ_min(M)/2`, which gives `(α+1)σ1/2` in 1D and `σ1/2`
/// for `σ = (σ1, 0)`. The rescaled form divides by `σ1`.
pub fn default_c1(alpha: f64, sigma: &[f64], form: WeightForm) -> Result<f64> {
    let c1 = 0.5 * MatrixM::build(alpha, sigma)?.min_eigenvalue();
    Ok(match form {
        WeightForm::Plain => c1,
        WeightForm::Rescaled => c1 / sigma[0],
    })
}

/// `(lhs, T1, T2)` for one field.
pub fn monotonicity_terms(
    sp: &Spectral,
    u: &RealField,
    w: &WeightParams,
    alpha: f64,
    form: WeightForm,
) -> Result<(f64, f64, f64)> {
    let lhs = commutator_form(sp, u, w, alpha)?;
    let mut weight = w.phi_field(*sp.grid());
    if form == WeightForm::Rescaled {
        weight = weight.scaled((w.sigma()[0] / w.m_scale()).sqrt());
    }
    let uw = u.mul(&weight);
    Ok((lhs, sp.homogeneous_half_energy(&uw, alpha), uw.norm_sq()))
}

#[derive(Debug, Clone)]
pub struct CommutatorSweep {
    /// False when `γ` lies outside `(1/2, (α+1)/2]`; the sweep still runs.
    pub within_hypotheses: bool,
    pub c1: f64,
    pub c2_fitted: f64,
    pub reports: Vec<CommutatorReport>,
}

impl CommutatorSweep {
    pub fn min_slack(&self) -> f64 {
        self.reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Fits one `c2` for all `probes` and reports the per-probe slack
/// `−lhs − c1 T1 + c2 T2`.
pub fn commutator_sweep(
    sp: &Spectral,
    probes: &[RealField],
    w: &WeightParams,
    alpha: f64,
    form: WeightForm,
    c1_override: Option<f64>,
) -> Result<CommutatorSweep> {
    let sigma = w.sigma();
    if !sigma_condition(sigma, alpha) {
        return Err(Error::Precondition(format!(
            "sigma {sigma:?} violates sigma_1 > sqrt(alpha / (2 (1 + alpha))) |sigma'|"
        )));
    }
    let within_hypotheses = w.gamma_admissible(alpha);
    if !within_hypotheses {
        warn!("gamma = {} lies outside (1/2, (alpha+1)/2]", w.gamma());
    }
    let c1 = match c1_override {
        Some(c) => c,
        None => default_c1(alpha, sigma, form)?,
    };
    let mut terms = Vec::with_capacity(probes.len());
    for (i, u) in probes.iter().enumerate() {
        let seam = seam_level(u);
        if seam > SEAM_LEVEL * u.max_abs() {
            warn!("probe {i}: |u| = {seam:e} at the box seam, weight wrap-around pollutes the estimate");
        }
        let (lhs, t1, t2) = monotonicity_terms(sp, u, w, alpha, form)?;
        terms.push((lhs, t1, t2, seam));
    }
    let c2 = terms
        .iter()
        .map(|&(lhs, t1, t2, _)| (lhs + c1 * t1) / t2)
        .fold(0.0, f64::max);
    let reports = terms
        .into_iter()
        .map(|(lhs, t1, t2, seam)| CommutatorReport {
            lhs,
            smoothing_term: t1,
            mass_term: t2,
            c1_used: c1,
            c2_fitted: c2,
            slack: -lhs - c1 * t1 + c2 * t2,
            seam_level: seam,
        })
        .collect();
    Ok(CommutatorSweep {
        within_hypotheses,
        c1,
        c2_fitted: c2,
        reports,
    })
}

/// Seeded Gaussian probes (centers in the inner half box, widths in `[1, 8]`,
/// optional odd linear prefactor).
pub fn probe_family(sp: &Spectral, count: usize, seed: u64) -> Vec<RealField> {
    bump_family(sp.grid(), &ProbeSpec::default(), count, seed)
        .iter()
        .map(|b| b.field(*sp.grid()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub m_values: Vec<f64>,
    pub c2: Vec<f64>,
    pub slope: f64,
}

/// Fitted `c2` of the rescaled estimate for each `M` and the log-log slope.
pub fn rescaled_scaling(
    sp: &Spectral,
    probes: &[RealField],
    w: &WeightParams,
    alpha: f64,
    m_values: &[f64],
) -> Result<ScalingFit> {
    let mut c2 = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let sweep = commutator_sweep(sp, probes, &w.with_m_scale(m), alpha, WeightForm::Rescaled, None)?;
        c2.push(sweep.c2_fitted);
    }
    if c2.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Numerical(format!(
            "fitted c2 not positive for every M: {c2:?}"
        )));
    }
    let xs: Vec<f64> = m_values.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = c2.iter().map(|c| c.ln()).collect();
    let (slope, _) = crate::fit::linear_fit(&xs, &ys)
        .ok_or_else(|| Error::Precondition("need at least two distinct M values".into()))?;
    Ok(ScalingFit {
        m_values: m_values.to_vec(),
        c2,
        slope,
    })
}

/// `Ω = F^{-1}[ |ξ|^α (iξ1) χ(ξ) ]` with `χ = 1` on `|ξ| ≤ 1`, `0` beyond 2.
pub fn kernel_omega(sp: &Spectral, alpha: f64) -> Result<RealField> {
    let g = *sp.grid();
    for axis in 0..g.dim() {
        let dk = sp.k(axis)[1];
        let kmax = std::f64::consts::PI / g.spacing(axis);
        if dk > 0.1 || kmax < 2.5 {
            return Err(Error::Precondition(format!(
                "grid does not resolve the cutoff support (dk = {dk:.3}, kmax = {kmax:.3})"
            )));
        }
    }
    let n = g.len() as f64;
    let vol = g.volume();
    let mut h = crate::field::SpectralField::from_raw(g, vec![Complex64::new(0.0, 0.0); g.len()]);
    let nx = g.n(0);
    for (idx, c) in h.coeffs_mut().iter_mut().enumerate() {
        let (i, j) = (idx % nx, idx / nx);
        let k1 = sp.k(0)[i];
        let k2 = sp.k(1)[if g.dim() == 2 { j } else { 0 }];
        let r = k1.hypot(k2);
        // grid index 0 sits at −L/2, hence the phase
        let phase = -0.5 * (k1 * g.length(0) + if g.dim() == 2 { k2 * g.length(1) } else { 0.0 });
        *c = Complex64::new(0.0, k1 * r.powf(alpha) * cutoff_chi([k1, k2], 1.0))
            * Complex64::from_polar(n / vol, phase);
    }
    Ok(sp.inverse(&h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaDecay {
    /// `max |Ω| ⟨x⟩^{n+α+1}` on the shell `|x| ≈ r_inner`.
    pub inner_value: f64,
    /// Same quantity maximized over `r_inner ≤ |x| ≤ 0.4 L`.
    pub sup_value: f64,
    pub ratio: f64,
    /// `max |Ω(x) + Ω(−x1, x2)|`, relative to `max |Ω|`.
    pub oddness_defect: f64,
    pub integral: f64,
}

pub fn omega_decay_check(omega: &RealField, alpha: f64, r_inner: f64) -> OmegaDecay {
    let g = *omega.grid();
    let p = g.dim() as f64 + alpha + 1.0;
    let r_max = 0.4 * (0..g.dim()).map(|a| g.length(a)).fold(f64::INFINITY, f64::min);
    let shell = g.spacing(0);
    let mut inner: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for (idx, &v) in omega.values().iter().enumerate() {
        let x = g.point(idx);
        let r = x[0].hypot(x[1]);
        let weighted = v.abs() * (1.0 + r * r).powf(0.5 * p);
        if (r - r_inner).abs() <= shell {
            inner = inner.max(weighted);
        }
        if r >= r_inner && r <= r_max {
            sup = sup.max(weighted);
        }
    }
    let (nx, ny) = (g.n(0), g.n(1));
    let mut odd: f64 = 0.0;
    for j in 0..ny {
        for i in 1..nx {
            odd = odd.max((omega.at(i, j) + omega.at(nx - i, j)).abs());
        }
    }
    OmegaDecay {
        inner_value: inner,
        sup_value: sup,
        ratio: sup / inner,
        oddness_defect: odd / omega.max_abs(),
        integral: omega.integral(),
    }
}

/// `|∇|(fg) − f|∇|g − Σ ∂_j f R_j g`.
pub fn riesz_commutator_residual(sp: &Spectral, f: &RealField, g: &RealField) -> Result<RealField> {
    sp.grid().require_same(f.grid())?;
    sp.grid().require_same(g.grid())?;
    let mut r = sp.abs_grad_pow(&f.mul(g), 1.0).sub(&f.mul(&sp.abs_grad_pow(g, 1.0)));
    for axis in 0..sp.grid().dim() {
        r = r.sub(&sp.derivative(f, axis).mul(&sp.riesz(g, axis)));
    }
    Ok(r)
}

/// `‖residual‖₂ / (‖|∇|f‖_∞ ‖g‖₂)`.
pub fn riesz_commutator_ratio(sp: &Spectral, f: &RealField, g: &RealField) -> Result<f64> {
    let r = riesz_commutator_residual(sp, f, g)?;
    let df = sp.abs_grad_pow(f, 1.0).max_abs();
    if !(df > 1e-12) {
        return Err(Error::Precondition("‖|∇| f‖_∞ vanishes; ratio undefined".into()));
    }
    Ok(r.norm() / (df * g.norm()))
}

/// Ratios for `count` seeded smooth pairs.
pub fn riesz_commutator_sweep(sp: &Spectral, count: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = ProbeSpec {
        center_frac: 0.3,
        width: (1.0, 6.0),
        tilt_probability: 0.5,
    };
    let fields = crate::probe::random_smooth_fields(*sp.grid(), &spec, 2 * count, 2, seed);
    fields
        .chunks(2)
        .map(|p| riesz_commutator_ratio(sp, &p[0], &p[1]))
        .collect()
}
