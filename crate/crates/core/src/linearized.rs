//! The linearized operator `L = |∇|^α + c − Q` around a ground state, its
//! negative eigenpair, and the perturbations used by the instability runs.

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::GridSpec;
use crate::ground_state::GroundState;
use crate::krylov::pcg;
use crate::probe::{random_smooth_fields, ProbeSpec};
use crate::spectral::Spectral;
use crate::weights::scaling_generator;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    sp: Spectral,
    alpha: f64,
    c: f64,
    q: RealField,
    band_limited: bool,
}

impl LinearizedOperator {
    pub fn new(sp: &Spectral, gs: &GroundState) -> Result<Self> {
        sp.grid().require_same(gs.grid())?;
        Ok(Self {
            sp: sp.clone(),
            alpha: gs.alpha,
            c: gs.c,
            q: gs.q.clone(),
            band_limited: gs.band_limited,
        })
    }

    pub fn q(&self) -> &RealField {
        &self.q
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn band_limited(&self) -> bool {
        self.band_limited
    }

    pub fn grid(&self) -> &GridSpec {
        self.sp.grid()
    }

    /// `L f = |∇|^α f + c f − Q f`; for a band-limited `Q` the product is
    /// dealiased, which is the linearization of the dealiased equation.
    pub fn apply(&self, f: &RealField) -> Result<RealField> {
        self.grid().require_same(f.grid())?;
        Ok(self.apply_unchecked(f))
    }

    fn apply_unchecked(&self, f: &RealField) -> RealField {
        let mut qf = f.mul(&self.q);
        if self.band_limited {
            qf = self.sp.dealias(&qf);
        }
        self.sp.abs_grad_pow(f, self.alpha).axpy(self.c, f).sub(&qf)
    }

    /// `(L f, f)`.
    pub fn quadratic_form(&self, f: &RealField) -> f64 {
        self.apply_unchecked(f).inner(f)
    }

    /// `(L f, f) / ‖f‖²_{H^{1/2}}`.
    pub fn coercivity_ratio(&self, f: &RealField) -> f64 {
        self.quadratic_form(f) / self.sp.sobolev_half_norm_sq(f)
    }

    fn field(&self, v: Vec<f64>) -> RealField {
        RealField::from_raw(*self.grid(), v)
    }

    /// Solves `(L + shift) x = b` by preconditioned CG.
    fn shifted_solve(&self, shift: f64, b: &RealField, project: &[RealField]) -> Result<RealField> {
        let grid = *self.grid();
        let dv = grid.cell_volume();
        let proj = |v: &[f64]| -> Vec<f64> {
            let mut out = v.to_vec();
            for e in project {
                let ip: f64 = out.iter().zip(e.values()).map(|(a, b)| a * b).sum::<f64>() * dv;
                for (o, ev) in out.iter_mut().zip(e.values()) {
                    *o -= ip * ev;
                }
            }
            out
        };
        let apply = |v: &[f64]| {
            let f = self.field(proj(v));
            proj(self.apply_unchecked(&f).axpy(shift, &f).values())
        };
        let alpha = self.alpha;
        let base = self.c + shift;
        let precond = |r: &[f64]| {
            let f = self.field(proj(r));
            let out = self.sp.apply_multiplier(&f, |k1, k2, _, _| {
                Complex64::new(1.0 / (k1.hypot(k2).powf(alpha) + base.max(1e-3)), 0.0)
            });
            proj(out.values())
        };
        let rhs = proj(b.values());
        let (x, stats) = pcg(apply, precond, &rhs, None, 1e-11, 2000)?;
        log::trace!(
            "shifted solve: {} CG iterations, residual {:e}",
            stats.iterations,
            stats.relative_residual
        );
        Ok(self.field(x))
    }
}

/// Lowest eigenpair `(−μ0, ψ0)` and companion diagnostics.
#[derive(Debug, Clone)]
pub struct SpectrumBundle {
    pub mu0: f64,
    pub psi0: RealField,
    /// `‖L ψ0 + μ0 ψ0‖ / ‖ψ0‖`.
    pub eigen_residual: f64,
    /// `‖L ∂_j Q‖ / ‖∂_j Q‖` per axis.
    pub kernel_residuals: Vec<f64>,
    pub iterations: usize,
    pub final_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 300,
        }
    }
}

fn normalize(f: &RealField) -> RealField {
    f.scaled(1.0 / f.norm())
}

/// Shift-and-invert power iteration for the bottom of the spectrum of `L`.
///
/// The first shift `max Q − c + 1` makes `L + shift ≥ 1`. Once the Rayleigh
/// quotient `ρ` settles the shift moves to `−ρ + margin`, which stays above
/// `μ0` because `ρ` bounds the lowest eigenvalue from above. If CG still
/// meets negative curvature the margin is doubled.
pub fn lowest_eigenpair(op: &LinearizedOperator, opts: EigenOptions) -> Result<SpectrumBundle> {
    let q = op.q();
    let mut shift = q.max() - op.c + 1.0;
    let mut v = normalize(q);
    let mut residual = f64::INFINITY;
    let mut margin = f64::NAN;
    for it in 1..=opts.max_iterations {
        let w = match op.shifted_solve(shift, &v, &[]) {
            Ok(w) => w,
            Err(Error::Numerical(_)) => {
                margin = if margin.is_nan() { 1.0 } else { 2.0 * margin };
                shift += margin;
                continue;
            }
            Err(e) => return Err(e),
        };
        v = normalize(&w);
        let lv = op.apply_unchecked(&v);
        let rho = lv.inner(&v);
        residual = lv.axpy(-rho, &v).norm();
        if residual < opts.tolerance {
            return finish_eigen(op, v, rho, residual, it, shift);
        }
        if residual < 1e-2 * rho.abs().max(1.0) {
            let m = 0.05 * rho.abs() + 2.0 * residual;
            let candidate = -rho + if margin.is_nan() { m } else { m.max(margin) };
            shift = shift.min(candidate);
        }
    }
    Err(Error::NonConvergence {
        method: "shift-invert power iteration",
        iterations: opts.max_iterations,
        residual,
    })
}

fn finish_eigen(
    op: &LinearizedOperator,
    v: RealField,
    rho: f64,
    residual: f64,
    iterations: usize,
    shift: f64,
) -> Result<SpectrumBundle> {
    if rho >= 0.0 {
        return Err(Error::Numerical(format!(
            "lowest eigenvalue {rho:e} is not negative; the ground state is broken"
        )));
    }
    let psi0 = if v.center_value() < 0.0 { v.scaled(-1.0) } else { v };
    let kernel_residuals = op
        .sp
        .gradient(op.q())
        .iter()
        .map(|d| op.apply_unchecked(d).norm() / d.norm())
        .collect();
    Ok(SpectrumBundle {
        mu0: -rho,
        psi0,
        eigen_residual: residual,
        kernel_residuals,
        iterations,
        final_shift: shift,
    })
}

/// Index map of a 90° rotation about the box center (square grids only).
pub fn rotate_quarter(f: &RealField) -> Result<RealField> {
    let g = *f.grid();
    if g.dim() != 2 || g.n(0) != g.n(1) || g.length(0) != g.length(1) {
        return Err(Error::Precondition("rotation needs a square 2D grid".into()));
    }
    let n = g.n(0);
    let mut out = vec![0.0; g.len()];
    for j in 0..n {
        for i in 0..n {
            // new(x, y) = old(y, −x)
            out[g.index(i, j)] = f.at(j, (n - i) % n);
        }
    }
    Ok(RealField::from_raw(g, out))
}

/// `max ‖f − R f‖ / ‖f‖` over the three non-trivial quarter turns.
pub fn rotation_defect(f: &RealField) -> Result<f64> {
    let mut r = f.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        r = rotate_quarter(&r)?;
        worst = worst.max(f.sub(&r).norm() / f.norm());
    }
    Ok(worst)
}

/// Average over the symmetry group of the square (radial sector projector).
pub fn symmetrize_square(f: &RealField) -> Result<RealField> {
    let g = *f.grid();
    let n = g.n(0);
    let mut acc = f.clone();
    let mut r = f.clone();
    for _ in 0..3 {
        r = rotate_quarter(&r)?;
        acc = acc.add(&r);
    }
    let mut mirrored = vec![0.0; g.len()];
    for j in 0..n {
        for i in 0..n {
            mirrored[g.index(i, j)] = acc.at((n - i) % n, j);
        }
    }
    Ok(acc.add(&RealField::from_raw(g, mirrored)).scaled(1.0 / 8.0))
}

/// Rayleigh quotient reached by deflated inverse iteration in the radial
/// sector orthogonal to `ψ0`; a value `≥ 0` means `−μ0` is the only
/// negative eigenvalue there.
pub fn radial_gap_estimate(
    op: &LinearizedOperator,
    spectrum: &SpectrumBundle,
    iterations: usize,
) -> Result<f64> {
    let g = *op.grid();
    let psi = normalize(&spectrum.psi0);
    let deflate = |f: &RealField| f.axpy(-f.inner(&psi), &psi);
    let start = RealField::from_fn(g, |x, y| {
        let r2 = x * x + y * y;
        (1.0 - r2 / 8.0) * (-r2 / 16.0).exp()
    });
    let mut v = normalize(&deflate(&symmetrize_square(&start)?));
    let shift = 1.0;
    let mut best = f64::INFINITY;
    for _ in 0..iterations {
        let w = op.shifted_solve(shift, &v, std::slice::from_ref(&psi))?;
        v = normalize(&deflate(&symmetrize_square(&w)?));
        best = best.min(op.quadratic_form(&v));
    }
    Ok(best)
}

/// Residuals of `L(ΛQ) = −Q` (relative to `‖Q‖`) and `∫ Q ΛQ / ‖Q‖²`.
pub fn scaling_identities(op: &LinearizedOperator) -> (f64, f64) {
    let q = op.q();
    let lq = scaling_generator(&op.sp, q);
    let l_lq = op.apply_unchecked(&lq);
    (l_lq.add(q).norm() / q.norm(), q.inner(&lq) / q.norm_sq())
}

/// Orthonormal basis of `span{∂_j Q, ψ0}` (Gram–Schmidt in that order).
pub fn near_kernel_basis(op: &LinearizedOperator, psi0: &RealField) -> Vec<RealField> {
    let mut basis: Vec<RealField> = Vec::new();
    let mut vectors = op.sp.gradient(op.q());
    vectors.push(psi0.clone());
    for v in vectors {
        let mut w = v;
        for _ in 0..2 {
            for e in &basis {
                w = w.axpy(-w.inner(e), e);
            }
        }
        if w.norm() > 1e-14 {
            basis.push(normalize(&w));
        }
    }
    basis
}

pub fn project_out(f: &RealField, basis: &[RealField]) -> RealField {
    let mut w = f.clone();
    for _ in 0..2 {
        for e in basis {
            w = w.axpy(-w.inner(e), e);
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct CoercivityReport {
    pub min_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Minimum of `(Lf, f)/‖f‖²_{H^{1/2}}` over `trials` seeded smooth fields
/// projected off `{∂_j Q, ψ0}`.
pub fn coercivity_probe(
    op: &LinearizedOperator,
    spectrum: &SpectrumBundle,
    trials: usize,
    seed: u64,
) -> CoercivityReport {
    let basis = near_kernel_basis(op, &spectrum.psi0);
    let spec = ProbeSpec {
        center_frac: 0.3,
        width: (0.5, 4.0),
        tilt_probability: 0.5,
    };
    let ratios: Vec<f64> = random_smooth_fields(*op.grid(), &spec, trials, 3, seed)
        .iter()
        .map(|f| op.coercivity_ratio(&project_out(f, &basis)))
        .collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    CoercivityReport { min_ratio, ratios }
}

/// Smallest admissible `n` for a tube of radius `delta`:
/// `(1 + ‖ψ0‖_{H^{1/2}} / ‖ψ0‖) ‖Q‖_{H^{1/2}} / delta`.
pub fn minimal_n_index(sp: &Spectral, q: &RealField, psi0: &RealField, delta: f64) -> f64 {
    (1.0 + sp.sobolev_half_norm(psi0) / psi0.norm()) * sp.sobolev_half_norm(q) / delta
}

#[derive(Debug, Clone)]
pub struct InstabilityData {
    pub n_index: u32,
    pub a_coeff: f64,
    pub epsilon0: RealField,
    pub u0: RealField,
    /// `(ε0, e) / (‖ε0‖ ‖e‖)` for `e = ∂1 Q, ∂2 Q, ψ0` (1D: `∂1 Q, ψ0`).
    pub orthogonality: Vec<f64>,
}

impl InstabilityData {
    /// Same construction with `ε0 → −ε0`.
    pub fn flipped(&self, q: &RealField) -> Self {
        let epsilon0 = self.epsilon0.scaled(-1.0);
        Self {
            n_index: self.n_index,
            a_coeff: self.a_coeff,
            u0: q.add(&epsilon0),
            orthogonality: self.orthogonality.iter().map(|v| -v).collect(),
            epsilon0,
        }
    }
}

/// `ε0 = (Q + a ψ0) / n` with `a = −∫ψ0 Q / ‖ψ0‖²`, then `u0 = Q + ε0`.
pub fn build_instability_data(
    op: &LinearizedOperator,
    spectrum: &SpectrumBundle,
    n_index: u32,
    tube_radius: Option<f64>,
) -> Result<InstabilityData> {
    if n_index == 0 {
        return Err(Error::Precondition("n_index must be positive".into()));
    }
    let q = op.q();
    let psi0 = &spectrum.psi0;
    if let Some(delta) = tube_radius {
        let n0 = minimal_n_index(&op.sp, q, psi0, delta);
        if (n_index as f64) < n0 {
            return Err(Error::Precondition(format!(
                "n_index {n_index} below the admissible minimum {n0:.3} for tube radius {delta}"
            )));
        }
    }
    let a = -psi0.inner(q) / psi0.norm_sq();
    let raw = q.axpy(a, psi0).scaled(1.0 / n_index as f64);
    let basis = near_kernel_basis(op, psi0);
    let epsilon0 = project_out(&raw, &basis);
    let mut refs = op.sp.gradient(q);
    refs.push(psi0.clone());
    let en = epsilon0.norm();
    let orthogonality: Vec<f64> = refs
        .iter()
        .map(|e| epsilon0.inner(e) / (en * e.norm()))
        .collect();
    if orthogonality.iter().any(|v| v.abs() > 1e-6) {
        return Err(Error::Numerical(format!(
            "instability data not orthogonal: {orthogonality:?}"
        )));
    }
    Ok(InstabilityData {
        n_index,
        a_coeff: a,
        u0: q.add(&epsilon0),
        epsilon0,
        orthogonality,
    })
}

/// `‖f‖³_{L³} / (‖|∇|^{1/2} f‖² ‖f‖)` for seeded smooth fields.
pub fn gagliardo_nirenberg_ratios(sp: &Spectral, trials: usize, seed: u64) -> Vec<f64> {
    let spec = ProbeSpec {
        center_frac: 0.4,
        width: (0.5, 6.0),
        tilt_probability: 0.5,
    };
    random_smooth_fields(*sp.grid(), &spec, trials, 2, seed)
        .iter()
        .map(|f| {
            let l3 = f.map(|v| v.abs().powi(3)).integral();
            l3 / (sp.homogeneous_half_energy(f, 1.0) * f.norm())
        })
        .collect()
}
