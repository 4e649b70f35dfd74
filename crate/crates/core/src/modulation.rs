//! Modulated decomposition `λ u(λx + z) = Q + ε` of a solution near the
//! ground state, the functionals tracked along an instability run, and the
//! run itself.

use crate::error::{Error, Result};
use crate::evolution::{correlation_shift, Integrator, Scheme, SimConfig, SimState};
use crate::field::RealField;
use crate::fit::{decay_exponent, linear_fit};
use crate::ground_state::mass_energy;
use crate::linearized::{InstabilityData, LinearizedOperator, SpectrumBundle};
use crate::resample::resample_affine;
use crate::spectral::Spectral;
use crate::weights::{cutoff_x1_field, scaling_generator, x1_antiderivative, WeightParams};
use num_complex::Complex64;

/// Newton step for the Jacobian's centered differences.
const FD_STEP: f64 = 1e-5;
const MAX_NEWTON: usize = 50;
/// Tube radius as a fraction of `‖Q‖_{H^{1/2}}`.
pub const TUBE_FRACTION: f64 = 0.3;

/// Profiles derived from `Q` that every fit and functional needs.
#[derive(Debug, Clone)]
pub struct ModulationContext {
    op: LinearizedOperator,
    dq: [RealField; 2],
    psi0: RealField,
    mu0: f64,
    lambda_q: RealField,
    f_field: RealField,
    kappa: f64,
    q_half_norm: f64,
    mass_q: f64,
    energy_q: f64,
}

impl ModulationContext {
    pub fn new(op: &LinearizedOperator, spectrum: &SpectrumBundle) -> Result<Self> {
        let sp = op.spectral();
        if sp.grid().dim() != 2 || op.alpha() != 1.0 || op.c() != 1.0 {
            return Err(Error::Precondition(
                "the modulation pipeline is set up for n = 2, alpha = 1, c = 1".into(),
            ));
        }
        sp.grid().require_same(spectrum.psi0.grid())?;
        let q = op.q();
        let grad = sp.gradient(q);
        let lambda_q = scaling_generator(sp, q);
        let f_field = x1_antiderivative(sp, &lambda_q);
        let kappa = kappa_of(&lambda_q);
        let (mass_q, energy_q) = mass_energy(sp, q, op.alpha());
        Ok(Self {
            dq: [grad[0].clone(), grad[1].clone()],
            psi0: spectrum.psi0.clone(),
            mu0: spectrum.mu0,
            q_half_norm: sp.sobolev_half_norm(q),
            lambda_q,
            f_field,
            kappa,
            mass_q,
            energy_q,
            op: op.clone(),
        })
    }

    pub fn spectral(&self) -> &Spectral {
        self.op.spectral()
    }

    pub fn operator(&self) -> &LinearizedOperator {
        &self.op
    }

    pub fn q(&self) -> &RealField {
        self.op.q()
    }

    pub fn psi0(&self) -> &RealField {
        &self.psi0
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn lambda_q(&self) -> &RealField {
        &self.lambda_q
    }

    /// `F(x1, x2) = ∫_{-∞}^{x1} ΛQ(y, x2) dy`.
    pub fn f_field(&self) -> &RealField {
        &self.f_field
    }

    /// `κ = ½ ∫ (∫ ΛQ dx1)² dx2`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mass_q(&self) -> f64 {
        self.mass_q
    }

    /// `E[Q]` on the grid; zero on the whole plane, small but not zero on a box.
    pub fn energy_q(&self) -> f64 {
        self.energy_q
    }

    pub fn tube_radius(&self) -> f64 {
        TUBE_FRACTION * self.q_half_norm
    }

    /// `‖Q‖² − (∫Qψ0)² / ‖ψ0‖²`, positive unless `Q ∥ ψ0`.
    pub fn cauchy_schwarz_gap(&self) -> f64 {
        let qp = self.q().inner(&self.psi0);
        self.mass_q - qp * qp / self.psi0.norm_sq()
    }

    /// Lower bound `(1/8n)(‖Q‖² − (∫Qψ0)²/‖ψ0‖²)` for `dK/ds`.
    pub fn lower_bound_constant(&self, n_index: u32) -> f64 {
        self.cauchy_schwarz_gap() / (8.0 * n_index as f64)
    }

    /// `λ u(λx + z) − Q` with `z = (z1, 0)`.
    pub fn epsilon_of(&self, u: &RealField, lambda: f64, z1: f64) -> RealField {
        resample_affine(self.spectral(), u, lambda, [z1, 0.0])
            .scaled(lambda)
            .sub(self.q())
    }

    fn orthogonality(&self, eps: &RealField) -> [f64; 2] {
        [eps.inner(&self.dq[0]), eps.inner(&self.psi0)]
    }
}

fn kappa_of(lambda_q: &RealField) -> f64 {
    let g = *lambda_q.grid();
    let (nx, ny) = (g.n(0), g.n(1));
    let dx = g.spacing(0);
    let rows: Vec<f64> = (0..ny)
        .map(|j| lambda_q.values()[j * nx..(j + 1) * nx].iter().sum::<f64>() * dx)
        .collect();
    0.5 * rows.iter().map(|r| r * r).sum::<f64>() * g.spacing(1)
}

#[derive(Debug, Clone)]
pub struct ModulationState {
    pub t: f64,
    pub lambda: f64,
    pub z1: f64,
    /// Held at zero for data symmetric in `x2`.
    pub z2: f64,
    pub epsilon: RealField,
    /// `(ε, ∂1Q)`, `(ε, ∂2Q)`, `(ε, ψ0)`.
    pub residuals: [f64; 3],
    pub iterations: usize,
}

/// Newton iteration on `(λ, z1)` zeroing `(ε, ∂1Q)` and `(ε, ψ0)`.
///
/// Without a guess the search starts at `λ = 1` and the correlation peak.
pub fn modulation_fit(
    ctx: &ModulationContext,
    u: &RealField,
    t: f64,
    initial_guess: Option<(f64, f64)>,
) -> Result<ModulationState> {
    ctx.spectral().grid().require_same(u.grid())?;
    u.check_finite()?;
    let (mut lambda, mut z1) = match initial_guess {
        Some(g) => g,
        None => (1.0, correlation_shift(ctx.spectral(), u, ctx.q())[0]),
    };
    let scale = [ctx.dq[0].norm(), ctx.psi0.norm()];
    let g_of = |l: f64, z: f64| ctx.orthogonality(&ctx.epsilon_of(u, l, z));
    let mut g = g_of(lambda, z1);
    let mut iterations = 0;
    loop {
        let small = (0..2).all(|i| g[i].abs() <= 1e-13 * scale[i] * ctx.q().norm());
        if small {
            break;
        }
        if iterations == MAX_NEWTON {
            return Err(Error::NonConvergence {
                method: "modulation Newton",
                iterations,
                residual: g[0].abs().max(g[1].abs()),
            });
        }
        let gl_p = g_of(lambda + FD_STEP, z1);
        let gl_m = g_of(lambda - FD_STEP, z1);
        let gz_p = g_of(lambda, z1 + FD_STEP);
        let gz_m = g_of(lambda, z1 - FD_STEP);
        let j = [
            [(gl_p[0] - gl_m[0]) / (2.0 * FD_STEP), (gz_p[0] - gz_m[0]) / (2.0 * FD_STEP)],
            [(gl_p[1] - gl_m[1]) / (2.0 * FD_STEP), (gz_p[1] - gz_m[1]) / (2.0 * FD_STEP)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::Numerical("singular modulation Jacobian".into()));
        }
        let dl = (j[1][1] * g[0] - j[0][1] * g[1]) / det;
        let dz = (j[0][0] * g[1] - j[1][0] * g[0]) / det;
        lambda -= dl;
        z1 -= dz;
        iterations += 1;
        if !(lambda > 0.0) || !lambda.is_finite() || !z1.is_finite() {
            return Err(Error::Numerical(format!(
                "modulation Newton left the admissible set (lambda = {lambda})"
            )));
        }
        g = g_of(lambda, z1);
        if dl.abs() + dz.abs() < 1e-13 {
            break;
        }
    }
    let epsilon = ctx.epsilon_of(u, lambda, z1);
    let eps_half = ctx.spectral().sobolev_half_norm(&epsilon);
    if eps_half > ctx.tube_radius() {
        return Err(Error::Precondition(format!(
            "tube violation: ‖ε‖_H1/2 = {eps_half:.4e} exceeds {:.4e}",
            ctx.tube_radius()
        )));
    }
    let residuals = [g[0], epsilon.inner(&ctx.dq[1]), g[1]];
    Ok(ModulationState {
        t,
        lambda,
        z1,
        z2: 0.0,
        epsilon,
        residuals,
        iterations,
    })
}

/// `inf_z ‖u − Q(· − z)‖_{H^{1/2}}`, evaluated at the correlation peak
/// refined by Newton on the spectral cross term.
pub fn tube_distance(sp: &Spectral, u: &RealField, q: &RealField) -> f64 {
    let g = *sp.grid();
    let uh = sp.forward_unchecked(u);
    let qh = sp.forward_unchecked(q);
    let mut d = correlation_shift(sp, u, q);
    let nx = g.n(0);
    let weights: Vec<(f64, f64, f64, Complex64)> = uh
        .coeffs()
        .iter()
        .zip(qh.coeffs())
        .enumerate()
        .map(|(idx, (a, b))| {
            let (i, j) = (idx % nx, idx / nx);
            let k1 = sp.k(0)[i];
            let k2 = if g.dim() == 2 { sp.k(1)[j] } else { 0.0 };
            let w = (1.0 + k1 * k1 + k2 * k2).sqrt();
            (k1, k2, w, a * b.conj())
        })
        .collect();
    for _ in 0..20 {
        let mut grad = [0.0; 2];
        let mut hess = [[0.0; 2]; 2];
        for &(k1, k2, w, c) in &weights {
            let e = c * Complex64::from_polar(1.0, k1 * d[0] + k2 * d[1]);
            let k = [k1, k2];
            for a in 0..2 {
                grad[a] -= w * k[a] * e.im;
                for b in 0..2 {
                    hess[a][b] -= w * k[a] * k[b] * e.re;
                }
            }
        }
        let step = if g.dim() == 2 {
            let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
            if !(det > 0.0) {
                break;
            }
            [
                (hess[1][1] * grad[0] - hess[0][1] * grad[1]) / det,
                (hess[0][0] * grad[1] - hess[1][0] * grad[0]) / det,
            ]
        } else {
            if !(hess[0][0] < 0.0) {
                break;
            }
            [grad[0] / hess[0][0], 0.0]
        };
        // stay inside the basin found by the correlation peak
        if step[0].abs().max(step[1].abs()) > g.spacing(0) {
            break;
        }
        d = [d[0] - step[0], d[1] - step[1]];
        if step[0].abs() + step[1].abs() < 1e-14 {
            break;
        }
    }
    let diff: Vec<Complex64> = weights
        .iter()
        .zip(uh.coeffs())
        .zip(qh.coeffs())
        .map(|((&(k1, k2, _, _), a), b)| a - b * Complex64::from_polar(1.0, -(k1 * d[0] + k2 * d[1])))
        .collect();
    let acc: f64 = weights
        .iter()
        .zip(&diff)
        .map(|(&(_, _, w, _), c)| w * c.norm_sqr())
        .sum();
    (acc * g.cell_volume() / g.len() as f64).sqrt()
}

/// Conservation laws restated for `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    /// `M[ε] = 2∫Qε + ∫ε²`.
    pub mass: f64,
    /// `E[Q + ε]` by definition.
    pub energy: f64,
    /// `λ E[u0]`.
    pub scaled_energy: f64,
    /// `E[Q] − ∫Qε + ½(Lε, ε) − ½∫ε² − ⅙∫ε³`.
    pub expansion: f64,
}

impl EpsilonBudget {
    pub fn expansion_residual(&self) -> f64 {
        (self.energy - self.expansion).abs()
    }

    pub fn energy_defect(&self) -> f64 {
        (self.energy - self.scaled_energy).abs()
    }
}

pub fn epsilon_budget(ctx: &ModulationContext, eps: &RealField, lambda: f64, energy_u0: f64) -> EpsilonBudget {
    let sp = ctx.spectral();
    let q = ctx.q();
    let alpha = ctx.op.alpha();
    let qe = q.inner(eps);
    let e2 = eps.norm_sq();
    let (_, energy) = mass_energy(sp, &q.add(eps), alpha);
    let l_form = sp.homogeneous_half_energy(eps, alpha) + ctx.op.c() * e2 - q.inner(&eps.mul(eps));
    let cubic = eps.map(|v| v * v * v).integral();
    EpsilonBudget {
        mass: 2.0 * qe + e2,
        energy,
        scaled_energy: lambda * energy_u0,
        expansion: ctx.energy_q + 0.5 * l_form - qe - 0.5 * e2 - cubic / 6.0,
    }
}

/// `J_A = ∫ ε F χ_A(x1)`.
pub fn j_functional(ctx: &ModulationContext, eps: &RealField, a: f64) -> f64 {
    let chi = cutoff_x1_field(*eps.grid(), a);
    eps.mul(&ctx.f_field).inner(&chi)
}

/// `K_A = λ (J_A − κ)`.
pub fn k_functional(j_a: f64, lambda: f64, kappa: f64) -> f64 {
    lambda * (j_a - kappa)
}

/// `η = u − λ^{-1} Q((x − z) / λ)`.
pub fn eta_field(sp: &Spectral, u: &RealField, lambda: f64, z1: f64, q: &RealField) -> RealField {
    let qlz = resample_affine(sp, q, 1.0 / lambda, [-z1 / lambda, 0.0]).scaled(1.0 / lambda);
    u.sub(&qlz)
}

/// `∫∫_{x1 > x0} η²(x1 + z1, x2)`.
pub fn right_mass(eta: &RealField, x0: f64, z1: f64) -> Result<f64> {
    let g = eta.grid();
    let edge = x0 + z1;
    if !(edge < g.half_length(0)) || !(edge >= -g.half_length(0)) {
        return Err(Error::Precondition(format!(
            "x0 + z1 = {edge} lies outside the box"
        )));
    }
    Ok(eta.map_with_point(|p, v| if p[0] > edge { v * v } else { 0.0 }).integral())
}

/// `∫∫_{x1 > 0} ⟨x1⟩^m ε²`.
pub fn weighted_eps_mass(eps: &RealField, m: f64) -> f64 {
    eps.map_with_point(|p, v| {
        if p[0] > 0.0 {
            (1.0 + p[0] * p[0]).powf(0.5 * m) * v * v
        } else {
            0.0
        }
    })
    .integral()
}

/// The `η`-mass weight `varphi` of the monotonicity functionals: `σ = (1, 0)`,
/// `γ = 3/2`, scale `M`.
pub fn eta_weight(m_scale: f64) -> Result<WeightParams> {
    WeightParams::unrestricted(&[1.0, 0.0], 0.0, 1.5, m_scale)
}

/// One `η` sample. Grid point `x1` sits at `x1 + frame_offset` in the lab,
/// and `z1` is the lab position of the soliton.
#[derive(Debug, Clone)]
pub struct EtaSnapshot {
    pub t: f64,
    pub z1: f64,
    pub frame_offset: f64,
    pub eta: RealField,
}

/// `∫ η²(t) varphi(x1 − z1(t0) + ½(t0 − t) − x0, x2)`.
pub fn j_x0t0(snap: &EtaSnapshot, z1_t0: f64, t0: f64, x0: f64, w: &WeightParams) -> f64 {
    let shift = snap.frame_offset - z1_t0 + 0.5 * (t0 - snap.t) - x0;
    let weight = w.with_omega(shift / w.m_scale()).varphi_field(*snap.eta.grid());
    snap.eta.mul(&snap.eta).inner(&weight)
}

/// `∫ η²(t) (varphi(x̃) − varphi(x*))` with `x̃ = x1 − z1(t) − ν(t0 − t) − x0`
/// and `x* = −ν(t0 − t) − x0`.
pub fn rho_x0t0(snap: &EtaSnapshot, t0: f64, x0: f64, nu: f64, w: &WeightParams) -> f64 {
    let lag = nu * (t0 - snap.t) + x0;
    let shift = snap.frame_offset - snap.z1 - lag;
    let weight = w.with_omega(shift / w.m_scale()).varphi_field(*snap.eta.grid());
    let base = w.with_omega(0.0).varphi([-lag, 0.0]);
    snap.eta.mul(&snap.eta).inner(&weight.map(|v| v - base))
}

/// Both monotonicity functionals along a stored run, with `t0` the last
/// snapshot time.
pub fn monotone_series(
    snaps: &[EtaSnapshot],
    x0: f64,
    nu: f64,
    w: &WeightParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let last = snaps
        .last()
        .ok_or_else(|| Error::Precondition("empty snapshot series".into()))?;
    if snaps.windows(2).any(|p| !(p[1].t > p[0].t)) {
        return Err(Error::Precondition(
            "snapshot times must increase strictly".into(),
        ));
    }
    if !(nu > 0.0 && nu < 0.375) {
        return Err(Error::OutOfRange {
            name: "nu",
            value: nu,
            range: "(0, 3/8)".into(),
        });
    }
    for s in snaps {
        last.eta.grid().require_same(s.eta.grid())?;
    }
    let (t0, z0) = (last.t, last.z1);
    Ok(snaps
        .iter()
        .map(|s| (j_x0t0(s, z0, t0, x0, w), rho_x0t0(s, t0, x0, nu, w)))
        .unzip())
}

/// `(λ_s/λ, z1_s/λ − 1)` in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationRates {
    pub lambda_rate: f64,
    pub shift_rate: f64,
}

/// Solves the projected `ε` equation for the modulation rates.
///
/// With `v = Q + ε = λ u(λy + z)` and `N(u) = ∂1|∇|u − ½∂1 u²` (dealiased
/// when the run is), `ε_s = r + a Λv + b ∂1v` with `r = λ³ N(u)(λy + z) + ∂1v`.
/// Evaluating `N` on the simulation grid keeps `r` consistent with the
/// discrete flow. The orthogonality conditions give
/// `a (Λv, e) + b (∂1 v, e) = −(r, e)` for `e = ∂1Q, ψ0`.
pub fn modulation_rates(ctx: &ModulationContext, u: &RealField, state: &ModulationState) -> Result<ModulationRates> {
    let sp = ctx.spectral();
    sp.grid().require_same(u.grid())?;
    let lambda = state.lambda;
    let mut sq = u.mul(u);
    if ctx.op.band_limited() {
        sq = sp.dealias(&sq);
    }
    let flux = sp.abs_grad_pow(u, ctx.op.alpha()).axpy(-0.5, &sq);
    let n = sp.derivative(&flux, 0);
    let v = ctx.q().add(&state.epsilon);
    let dv = sp.derivative(&v, 0);
    let r = resample_affine(sp, &n, lambda, [state.z1, state.z2])
        .scaled(lambda.powi(3))
        .add(&dv);
    let lv = scaling_generator(sp, &v);
    let refs = [&ctx.dq[0], &ctx.psi0];
    let m: Vec<[f64; 2]> = refs.iter().map(|e| [lv.inner(e), dv.inner(e)]).collect();
    let rhs: Vec<f64> = refs.iter().map(|e| -r.inner(e)).collect();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = (m[0][0].abs() + m[0][1].abs()) * (m[1][0].abs() + m[1][1].abs());
    if !(det.abs() > 1e-8 * scale) {
        return Err(Error::Numerical(format!(
            "modulation system singular (det = {det:e})"
        )));
    }
    Ok(ModulationRates {
        lambda_rate: (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
        shift_rate: (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    })
}

/// One sample of an instability run.
#[derive(Debug, Clone, PartialEq)]
pub struct VirialRecord {
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    /// Lab-frame soliton position.
    pub z1: f64,
    pub j_a: f64,
    pub k_a: f64,
    /// Centered difference of `K_A` in `s`; one-sided at the ends.
    pub dk_ds: f64,
    /// One entry per configured `x0`.
    pub right_mass: Vec<f64>,
    pub weighted_mass: f64,
    pub tube_distance: f64,
    pub eps_norm: f64,
    pub budget: EpsilonBudget,
    /// `(‖u‖², E[u])` of the simulated field.
    pub mass_u: f64,
    pub energy_u: f64,
    pub rates: Option<ModulationRates>,
    /// `J_{x0,t}(t) − J_{x0,t}(0)` per `x0`.
    pub j_increment: Vec<f64>,
    /// `∫η²ρ` at `t` minus its value at time 0, per `x0`.
    pub rho_increment: Vec<f64>,
}

/// Centered differences on a nonuniform grid, one-sided at the ends.
pub fn finite_difference(s: &[f64], y: &[f64]) -> Vec<f64> {
    let n = s.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (y[b] - y[a]) / (s[b] - s[a])
        })
        .collect()
}

/// Finite-difference check of [`modulation_rates`] along a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeResidualReport {
    /// `max |ode − fd| / max |fd|` for `λ_s/λ` and `z1_s/λ − 1` on the window.
    pub discrepancy: [f64; 2],
    /// `max (|λ_s/λ| + |z1_s/λ − 1|) / (‖ε‖ + ‖ε‖²)`.
    pub bound_ratio: f64,
    pub samples: usize,
    /// Largest `s` step in the window.
    pub max_ds: f64,
}

pub fn modulation_ode_residual(records: &[VirialRecord], window: (f64, f64)) -> Result<OdeResidualReport> {
    let s: Vec<f64> = records.iter().map(|r| r.s).collect();
    let lnl: Vec<f64> = records.iter().map(|r| r.lambda.ln()).collect();
    let z: Vec<f64> = records.iter().map(|r| r.z1).collect();
    let dl = finite_difference(&s, &lnl);
    let dz = finite_difference(&s, &z);
    let mut worst = [0.0f64; 2];
    let mut scale = [0.0f64; 2];
    let mut ratio = 0.0f64;
    let mut count = 0;
    let mut max_ds = 0.0f64;
    for (i, r) in records.iter().enumerate() {
        if i == 0 || i + 1 == records.len() || r.s < window.0 || r.s > window.1 {
            continue;
        }
        let rates = r
            .rates
            .ok_or_else(|| Error::Precondition("record without modulation rates".into()))?;
        let fd = [dl[i], dz[i] / r.lambda - 1.0];
        let ode = [rates.lambda_rate, rates.shift_rate];
        for k in 0..2 {
            worst[k] = worst[k].max((ode[k] - fd[k]).abs());
            scale[k] = scale[k].max(fd[k].abs());
        }
        let e = r.eps_norm;
        ratio = ratio.max((ode[0].abs() + ode[1].abs()) / (e + e * e));
        max_ds = max_ds.max(s[i + 1] - s[i]).max(s[i] - s[i - 1]);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Precondition("no samples inside the window".into()));
    }
    Ok(OdeResidualReport {
        discrepancy: [worst[0] / scale[0], worst[1] / scale[1]],
        bound_ratio: ratio,
        samples: count,
        max_ds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityConfig {
    /// Run length in rescaled time `s`.
    pub s_end: f64,
    pub dt: f64,
    /// Steps between samples.
    pub sample_every: usize,
    pub a_cutoff: f64,
    pub x0_list: Vec<f64>,
    pub m_exponent: f64,
    /// Speed of the simulation frame; the ground state is stationary at 1.
    pub frame_speed: f64,
    /// Scale `M` of the `η` weight.
    pub weight_scale: f64,
    pub nu: f64,
    pub scheme: Scheme,
}

impl Default for InstabilityConfig {
    fn default() -> Self {
        Self {
            s_end: 20.0,
            dt: 5e-3,
            sample_every: 10,
            a_cutoff: 16.0,
            x0_list: vec![2.0, 4.0, 8.0],
            m_exponent: 1.25,
            frame_speed: 1.0,
            weight_scale: 1.0,
            nu: 0.25,
            scheme: Scheme::EtdRk4,
        }
    }
}

impl InstabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_end > 0.0) {
            return Err(Error::Precondition("s_end must be positive".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Precondition("sample_every must be at least 1".into()));
        }
        if !(self.m_exponent > 1.0 && self.m_exponent < 1.5) {
            return Err(Error::OutOfRange {
                name: "m_exponent",
                value: self.m_exponent,
                range: "(1, 3/2)".into(),
            });
        }
        if !(self.nu > 0.0 && self.nu < 0.375) {
            return Err(Error::OutOfRange {
                name: "nu",
                value: self.nu,
                range: "(0, 3/8)".into(),
            });
        }
        if self.x0_list.is_empty() || self.x0_list.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::Precondition("x0 values must be positive".into()));
        }
        if !(self.a_cutoff > 0.0) {
            return Err(Error::Precondition("A must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Blowup,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Blowup => "BLOWUP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct InstabilityReport {
    pub n_index: u32,
    pub verdict: Verdict,
    pub records: Vec<VirialRecord>,
    pub x0_list: Vec<f64>,
    pub lower_bound: f64,
    /// Mean `dK/ds` over `s ≥ 2`.
    pub mean_dk_ds: Option<f64>,
    pub k_monotone: bool,
    pub tube_exceeded: bool,
    pub initial_mass: f64,
    pub energy_u0: f64,
    /// Why the run stopped before `s_end`, if it did.
    pub stopped: Option<String>,
}

impl InstabilityReport {
    /// `max_s |M[ε](s) − M[ε](0)| / ‖Q‖²`.
    pub fn mass_drift(&self, mass_q: f64) -> f64 {
        let m0 = self.records[0].budget.mass;
        self.records
            .iter()
            .map(|r| (r.budget.mass - m0).abs())
            .fold(0.0, f64::max)
            / mass_q
    }

    /// `max_s |‖u(t)‖² − ‖u0‖²| / ‖Q‖²`: the part of the `M[ε]` drift owed to
    /// the time stepper. The rest is the dilation defect `‖λu(λ·+z)‖² − ‖u‖²`
    /// of the finite box.
    pub fn solver_mass_drift(&self, mass_q: f64) -> f64 {
        let m0 = self.records[0].mass_u;
        self.records.iter().map(|r| (r.mass_u - m0).abs()).fold(0.0, f64::max) / mass_q
    }

    /// `max_s |E[Q + ε] − λ E[u]|`, the energy dilation defect of the box.
    pub fn energy_dilation_defect(&self) -> f64 {
        self.records
            .iter()
            .map(|r| (r.budget.energy - r.lambda * r.energy_u).abs())
            .fold(0.0, f64::max)
    }

    /// `max_s |E[u(t)] − E[u0]|`.
    pub fn solver_energy_drift(&self) -> f64 {
        let e0 = self.records[0].energy_u;
        self.records.iter().map(|r| (r.energy_u - e0).abs()).fold(0.0, f64::max)
    }

    /// `max_s |E[Q + ε] − λ E[u0]|`.
    pub fn energy_defect(&self) -> f64 {
        self.records.iter().map(|r| r.budget.energy_defect()).fold(0.0, f64::max)
    }

    /// Decay exponent of the time-maximal right mass over `x0`.
    pub fn right_mass_exponent(&self) -> Option<f64> {
        let peak: Vec<f64> = (0..self.x0_list.len())
            .map(|k| self.records.iter().map(|r| r.right_mass[k]).fold(0.0, f64::max))
            .collect();
        decay_exponent(&self.x0_list, &peak)
    }

    /// `max_s weighted_mass(s) / weighted_mass(0)`.
    pub fn weighted_mass_growth(&self) -> f64 {
        let w0 = self.records[0].weighted_mass;
        self.records.iter().map(|r| r.weighted_mass).fold(0.0, f64::max) / w0
    }

    /// `max_t [J(t0) − J(0)] x0^{2γ−2}` and `max_t [ρ(t0) − ρ(0)] x0^{3/2}` per `x0`.
    pub fn monotonicity_constants(&self) -> (Vec<f64>, Vec<f64>) {
        let gamma = 1.5;
        self.x0_list
            .iter()
            .enumerate()
            .map(|(k, &x0)| {
                let j = self.records.iter().map(|r| r.j_increment[k]).fold(f64::NEG_INFINITY, f64::max);
                let r = self.records.iter().map(|r| r.rho_increment[k]).fold(f64::NEG_INFINITY, f64::max);
                (j * x0.powf(2.0 * gamma - 2.0), r * x0.powf(1.5))
            })
            .unzip()
    }

    /// Mean `dK/ds` over `s ∈ [lo, hi]`, as the difference quotient of `K_A`.
    pub fn mean_dk_ds_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let inside: Vec<&VirialRecord> = self.records.iter().filter(|r| r.s >= lo && r.s <= hi).collect();
        match (inside.first(), inside.last()) {
            (Some(a), Some(b)) if b.s > a.s => Some((b.k_a - a.k_a) / (b.s - a.s)),
            _ => None,
        }
    }
}

/// Evolves `u0 = Q + ε0` and tracks the modulation, the virial functional and
/// the localized masses until `s_end`, a blow-up, or exit from the tube.
pub fn instability_experiment(
    ctx: &ModulationContext,
    data: &InstabilityData,
    cfg: &InstabilityConfig,
) -> Result<InstabilityReport> {
    cfg.validate()?;
    let sp = ctx.spectral();
    let alpha = ctx.op.alpha();
    let sim = SimConfig {
        alpha,
        dt: cfg.dt,
        t_end: f64::MAX,
        dealias: ctx.op.band_limited(),
        diagnostics_every: cfg.sample_every,
        nonlinearity: true,
        frame_speed: cfg.frame_speed,
        scheme: cfg.scheme,
    };
    let integrator = Integrator::new(sp, sim)?;
    let (_, energy_u0) = mass_energy(sp, &data.u0, alpha);
    let weight = eta_weight(cfg.weight_scale)?;
    let mut state = SimState::new(data.u0.clone());
    let mut records: Vec<VirialRecord> = Vec::new();
    let mut guess = None;
    let mut s = 0.0;
    let mut last_inv_l2 = 0.0;
    let mut eta0: Option<EtaSnapshot> = None;
    let mut stopped = None;
    loop {
        let fit = match modulation_fit(ctx, &state.u, state.t, guess) {
            Ok(f) => f,
            Err(e @ (Error::Precondition(_) | Error::NonConvergence { .. } | Error::Numerical(_))) => {
                stopped = Some(format!("modulation lost at t = {:.4}: {e}", state.t));
                break;
            }
            Err(e) => return Err(e),
        };
        guess = Some((fit.lambda, fit.z1));
        let inv_l2 = 1.0 / (fit.lambda * fit.lambda);
        if let Some(prev) = records.last() {
            s += 0.5 * (inv_l2 + last_inv_l2) * (state.t - prev.t);
        }
        last_inv_l2 = inv_l2;
        let offset = cfg.frame_speed * state.t;
        let eta = eta_field(sp, &state.u, fit.lambda, fit.z1, ctx.q());
        let snap = EtaSnapshot {
            t: state.t,
            z1: fit.z1 + offset,
            frame_offset: offset,
            eta,
        };
        let start = eta0.get_or_insert_with(|| snap.clone()).clone();
        let mut right = Vec::with_capacity(cfg.x0_list.len());
        let mut j_inc = Vec::with_capacity(cfg.x0_list.len());
        let mut rho_inc = Vec::with_capacity(cfg.x0_list.len());
        for &x0 in &cfg.x0_list {
            right.push(right_mass(&snap.eta, x0, fit.z1)?);
            j_inc.push(
                j_x0t0(&snap, snap.z1, snap.t, x0, &weight) - j_x0t0(&start, snap.z1, snap.t, x0, &weight),
            );
            rho_inc.push(
                rho_x0t0(&snap, snap.t, x0, cfg.nu, &weight)
                    - rho_x0t0(&start, snap.t, x0, cfg.nu, &weight),
            );
        }
        let j_a = j_functional(ctx, &fit.epsilon, cfg.a_cutoff);
        let (mass_u, energy_u) = mass_energy(sp, &state.u, alpha);
        let rates = modulation_rates(ctx, &state.u, &fit).ok();
        records.push(VirialRecord {
            s,
            t: state.t,
            lambda: fit.lambda,
            z1: fit.z1 + offset,
            j_a,
            k_a: k_functional(j_a, fit.lambda, ctx.kappa),
            dk_ds: 0.0,
            right_mass: right,
            weighted_mass: weighted_eps_mass(&fit.epsilon, cfg.m_exponent),
            tube_distance: tube_distance(sp, &state.u, ctx.q()),
            eps_norm: fit.epsilon.norm(),
            budget: epsilon_budget(ctx, &fit.epsilon, fit.lambda, energy_u0),
            mass_u,
            energy_u,
            rates,
            j_increment: j_inc,
            rho_increment: rho_inc,
        });
        log::debug!(
            "s = {s:.3} t = {:.3} lambda = {:.6} z1 = {:.4} K = {:.6e}",
            state.t,
            fit.lambda,
            fit.z1 + offset,
            records.last().map(|r| r.k_a).unwrap_or(0.0)
        );
        if s >= cfg.s_end {
            break;
        }
        let mut failed = None;
        for _ in 0..cfg.sample_every {
            if let Err(e) = integrator.step(&mut state) {
                failed = Some(e);
                break;
            }
        }
        if let Some(e) = failed {
            match e {
                Error::Numerical(msg) => {
                    stopped = Some(format!("blow-up at t = {:.4}: {msg}", state.t));
                    break;
                }
                other => return Err(other),
            }
        }
    }
    let ss: Vec<f64> = records.iter().map(|r| r.s).collect();
    let ks: Vec<f64> = records.iter().map(|r| r.k_a).collect();
    for (r, d) in records.iter_mut().zip(finite_difference(&ss, &ks)) {
        r.dk_ds = d;
    }
    let mut report = InstabilityReport {
        n_index: data.n_index,
        verdict: Verdict::Fail,
        x0_list: cfg.x0_list.clone(),
        lower_bound: ctx.lower_bound_constant(data.n_index),
        mean_dk_ds: None,
        k_monotone: ks.windows(2).all(|w| w[1] > w[0]),
        tube_exceeded: false,
        initial_mass: records.first().map(|r| r.budget.mass).unwrap_or(0.0),
        energy_u0,
        stopped,
        records,
    };
    let blew_up = report.stopped.as_deref().is_some_and(|m| m.starts_with("blow-up"));
    let last_s = report.records.last().map(|r| r.s).unwrap_or(0.0);
    let d0 = report.records.first().map(|r| r.tube_distance).unwrap_or(0.0);
    report.tube_exceeded = report.records.iter().any(|r| r.tube_distance > 3.0 * d0);
    report.mean_dk_ds = report.mean_dk_ds_between(2.0, f64::INFINITY);
    report.verdict = if blew_up && last_s < 2.0 {
        Verdict::Blowup
    } else {
        let growing = report.mean_dk_ds.is_some_and(|d| d > 0.0);
        if growing && (report.tube_exceeded || report.k_monotone) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    Ok(report)
}

/// Log-log slope of early `dK/ds` against `n`; `−1` for linear decay in `1/n`.
pub fn early_growth_slope(n_values: &[f64], early_dk: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = n_values
        .iter()
        .zip(early_dk)
        .filter(|(_, d)| **d > 0.0)
        .map(|(n, d)| (n.ln(), d.ln()))
        .unzip();
    if x.len() != n_values.len() {
        return None;
    }
    linear_fit(&x, &y).map(|(slope, _)| slope)
}

/// `|J_A| / ‖ε‖` across cutoffs, and the fitted growth exponent in `A`.
pub fn j_growth_exponent(ctx: &ModulationContext, eps: &RealField, a_values: &[f64]) -> Option<f64> {
    let vals: Vec<f64> = a_values.iter().map(|&a| j_functional(ctx, eps, a).abs()).collect();
    decay_exponent(a_values, &vals).map(|p| -p)
}
