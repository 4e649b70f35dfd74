//! Time stepping for `u_t = ∂x1 |∇|^α u − ½ ∂x1(u²)` on the periodic box.
//!
//! Exponential RK4 schemes: the dispersive part is propagated exactly in
//! Fourier space, the quadratic term goes through four stages with the 2/3
//! rule applied to every product. An optional co-moving frame of
//! speed `s` adds `s ∂x1 u` to the linear part.

use crate::error::{check_range, Error, Result};
use crate::field::{RealField, SpectralField};
use crate::ground_state::mass_energy;
use crate::spectral::Spectral;
use num_complex::Complex64;

const BLOWUP_LEVEL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub alpha: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    pub diagnostics_every: usize,
    pub nonlinearity: bool,
    /// Speed of the co-moving frame (0 for the lab frame).
    pub frame_speed: f64,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Integrating-factor RK4.
    IfRk4,
    /// Cox–Matthews exponential time differencing RK4. Traveling waves in
    /// their own frame are fixed points of this scheme.
    #[default]
    EtdRk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ifrk4" => Ok(Self::IfRk4),
            "etdrk4" => Ok(Self::EtdRk4),
            _ => Err(Error::Precondition(format!("unknown scheme '{s}' (ifrk4 | etdrk4)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::IfRk4 => "ifrk4",
            Self::EtdRk4 => "etdrk4",
        })
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            dt: 1e-3,
            t_end: 1.0,
            dealias: true,
            diagnostics_every: 10,
            nonlinearity: true,
            frame_speed: 0.0,
            scheme: Scheme::EtdRk4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, sp: &Spectral) -> Result<()> {
        check_range("alpha", self.alpha, 1.0, 2.0)?;
        if !(self.dt.is_finite() && self.dt != 0.0) {
            return Err(Error::OutOfRange {
                name: "dt",
                value: self.dt,
                range: "nonzero finite".into(),
            });
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::OutOfRange {
                name: "t_end",
                value: self.t_end,
                range: "[0, inf)".into(),
            });
        }
        if self.diagnostics_every == 0 {
            return Err(Error::Precondition("diagnostics_every must be at least 1".into()));
        }
        let stiff = self.dt.abs() * max_symbol(sp, self.alpha, self.frame_speed);
        if stiff > 10.0 {
            return Err(Error::Precondition(format!(
                "dt * max|k1|(|k|^alpha + |s|) = {stiff:.3} exceeds 10"
            )));
        }
        Ok(())
    }
}

fn max_symbol(sp: &Spectral, alpha: f64, s: f64) -> f64 {
    let g = sp.grid();
    let mut m: f64 = 0.0;
    for j in 0..g.n(1) {
        for i in 0..g.n(0) {
            let k1 = sp.k(0)[i];
            let k2 = sp.k(1)[if g.dim() == 2 { j } else { 0 }];
            m = m.max(k1.abs() * (k1.hypot(k2).powf(alpha) + s.abs()));
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: RealField,
    pub step_index: u64,
}

impl SimState {
    pub fn new(u: RealField) -> Self {
        Self {
            t: 0.0,
            u,
            step_index: 0,
        }
    }
}

/// Reusable stepper holding the propagator tables for one `(grid, config)`.
#[derive(Debug, Clone)]
pub struct Integrator {
    sp: Spectral,
    cfg: SimConfig,
    symbol: Vec<f64>,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    nonlinear: Vec<Complex64>,
    etd: Option<EtdCoefficients>,
}

/// Per-mode ETDRK4 weights, already multiplied by `dt`.
#[derive(Debug, Clone)]
struct EtdCoefficients {
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl EtdCoefficients {
    /// Contour-averaged evaluation (Kassam–Trefethen) avoids the
    /// cancellation of the closed forms near `z = 0`.
    fn new(symbol: &[f64], dt: f64) -> Self {
        const POINTS: usize = 32;
        let roots: Vec<Complex64> = (0..POINTS)
            .map(|m| Complex64::from_polar(1.0, std::f64::consts::TAU * (m as f64 + 0.5) / POINTS as f64))
            .collect();
        let n = symbol.len();
        let mut out = Self {
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &w in symbol {
            let z0 = Complex64::new(0.0, w * dt);
            let mut acc = [Complex64::new(0.0, 0.0); 4];
            for r in &roots {
                let z = z0 + r;
                let ez = z.exp();
                let z3 = z * z * z;
                acc[0] += ((z / 2.0).exp() - 1.0) / z;
                acc[1] += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                acc[2] += (2.0 + z + ez * (z - 2.0)) / z3;
                acc[3] += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            let s = dt / POINTS as f64;
            out.q.push(acc[0] * s);
            out.f1.push(acc[1] * s);
            out.f2.push(acc[2] * s);
            out.f3.push(acc[3] * s);
        }
        out
    }
}

impl Integrator {
    pub fn new(sp: &Spectral, cfg: SimConfig) -> Result<Self> {
        cfg.validate(sp)?;
        let g = *sp.grid();
        let mut symbol = Vec::with_capacity(g.len());
        let mut nonlinear = Vec::with_capacity(g.len());
        for j in 0..g.n(1) {
            for i in 0..g.n(0) {
                let k1 = sp.k(0)[i];
                let d = sp.dispersion_symbol(cfg.alpha, i, j);
                let nyq = g.is_nyquist(0, i);
                symbol.push(if nyq { 0.0 } else { d + cfg.frame_speed * k1 });
                let keep = !nyq && (!cfg.dealias || sp.retained(i, j)) && cfg.nonlinearity;
                nonlinear.push(if keep { Complex64::new(0.0, -0.5 * k1) } else { Complex64::new(0.0, 0.0) });
            }
        }
        let phase = |tau: f64| -> Vec<Complex64> {
            symbol.iter().map(|&w| Complex64::from_polar(1.0, w * tau)).collect()
        };
        let half = phase(0.5 * cfg.dt);
        let full = phase(cfg.dt);
        let etd = match cfg.scheme {
            Scheme::EtdRk4 => Some(EtdCoefficients::new(&symbol, cfg.dt)),
            Scheme::IfRk4 => None,
        };
        Ok(Self {
            sp: sp.clone(),
            cfg,
            symbol,
            half,
            full,
            nonlinear,
            etd,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    /// Fourier coefficients of `−½ ∂x1 P(u²)` from those of `u`.
    fn rhs(&self, v: &[Complex64]) -> Vec<Complex64> {
        let g = *self.sp.grid();
        if !self.cfg.nonlinearity {
            return vec![Complex64::new(0.0, 0.0); v.len()];
        }
        let u = self.sp.inverse(&SpectralField::from_raw(g, v.to_vec()));
        let sq = u.map(|x| x * x);
        let mut h = self.sp.forward_unchecked(&sq);
        for (c, m) in h.coeffs_mut().iter_mut().zip(&self.nonlinear) {
            *c *= m;
        }
        h.coeffs().to_vec()
    }

    /// One IF-RK4 step. On blow-up the state is left untouched.
    pub fn step(&self, state: &mut SimState) -> Result<()> {
        let g = *self.sp.grid();
        let v = self.sp.forward_unchecked(&state.u).coeffs().to_vec();
        let next = match &self.etd {
            Some(co) => self.etd_stages(&v, co),
            None => self.if_stages(&v),
        };
        let u = self.sp.inverse(&SpectralField::from_raw(g, next));
        let peak = u.max_abs();
        if !(peak <= BLOWUP_LEVEL) {
            return Err(Error::Numerical(format!(
                "blow-up detected at t = {:.6} (max |u| = {peak:e})",
                state.t + self.cfg.dt
            )));
        }
        state.u = u;
        state.step_index += 1;
        state.t = state.step_index as f64 * self.cfg.dt;
        Ok(())
    }

    fn etd_stages(&self, v: &[Complex64], co: &EtdCoefficients) -> Vec<Complex64> {
        let e = &self.half;
        let e2 = &self.full;
        let n = v.len();
        let nv = self.rhs(v);
        let a: Vec<Complex64> = (0..n).map(|i| e[i] * v[i] + co.q[i] * nv[i]).collect();
        let na = self.rhs(&a);
        let b: Vec<Complex64> = (0..n).map(|i| e[i] * v[i] + co.q[i] * na[i]).collect();
        let nb = self.rhs(&b);
        let c: Vec<Complex64> = (0..n)
            .map(|i| e[i] * a[i] + co.q[i] * (2.0 * nb[i] - nv[i]))
            .collect();
        let nc = self.rhs(&c);
        (0..n)
            .map(|i| {
                e2[i] * v[i] + co.f1[i] * nv[i] + 2.0 * co.f2[i] * (na[i] + nb[i]) + co.f3[i] * nc[i]
            })
            .collect()
    }

    fn if_stages(&self, v: &[Complex64]) -> Vec<Complex64> {
        let dt = self.cfg.dt;
        let e = &self.half;
        let e2 = &self.full;
        let n = v.len();

        let a = self.rhs(v);
        let stage: Vec<Complex64> = (0..n).map(|i| e[i] * (v[i] + 0.5 * dt * a[i])).collect();
        let b = self.rhs(&stage);
        let stage: Vec<Complex64> = (0..n).map(|i| e[i] * v[i] + 0.5 * dt * b[i]).collect();
        let c = self.rhs(&stage);
        let stage: Vec<Complex64> = (0..n).map(|i| e2[i] * v[i] + dt * e[i] * c[i]).collect();
        let d = self.rhs(&stage);
        (0..n)
            .map(|i| {
                e2[i] * v[i] + dt / 6.0 * (e2[i] * a[i] + 2.0 * e[i] * (b[i] + c[i]) + d[i])
            })
            .collect()
    }

    /// Exact linear propagation over time `tau` (any sign).
    pub fn propagate_linear(&self, u: &RealField, tau: f64) -> RealField {
        let mut h = self.sp.forward_unchecked(u);
        for (c, &w) in h.coeffs_mut().iter_mut().zip(&self.symbol) {
            *c *= Complex64::from_polar(1.0, w * tau);
        }
        self.sp.inverse(&h)
    }

    /// Number of steps needed to reach `t_end` from 0.
    pub fn steps_to_end(&self) -> u64 {
        (self.cfg.t_end / self.cfg.dt.abs()).round() as u64
    }
}

/// Named pure function of `(t, u)` sampled during [`run`].
pub struct Observer<'a> {
    pub names: Vec<String>,
    pub eval: Box<dyn Fn(f64, &RealField) -> Vec<f64> + 'a>,
}

impl<'a> Observer<'a> {
    pub fn new(names: &[&str], eval: impl Fn(f64, &RealField) -> Vec<f64> + 'a) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            eval: Box::new(eval),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlowUp {
    pub message: String,
    pub last_state: SimState,
}

/// Time-stamped table of diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DiagnosticSeries {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub series: DiagnosticSeries,
    pub final_state: SimState,
    pub blowup: Option<BlowUp>,
}

/// Steps `u0` to `t_end`, sampling `t, mass, energy, mean` and every
/// observer each `diagnostics_every` steps (and at the end).
pub fn run(integrator: &Integrator, u0: &RealField, observers: &[Observer<'_>]) -> Result<RunOutcome> {
    let sp = integrator.spectral();
    sp.grid().require_same(u0.grid())?;
    u0.check_finite()?;
    let cfg = *integrator.config();
    let mut columns: Vec<String> = ["t", "mass", "energy", "mean"].iter().map(|s| s.to_string()).collect();
    for o in observers {
        columns.extend(o.names.iter().cloned());
    }
    let mut series = DiagnosticSeries::new(columns);
    let sample = |state: &SimState, series: &mut DiagnosticSeries| {
        let (m, e) = mass_energy(sp, &state.u, cfg.alpha);
        let mut row = vec![state.t, m, e, state.u.mean()];
        for o in observers {
            row.extend((o.eval)(state.t, &state.u));
        }
        series.rows.push(row);
    };
    let mut state = SimState::new(u0.clone());
    sample(&state, &mut series);
    let steps = integrator.steps_to_end();
    for k in 1..=steps {
        if let Err(e) = integrator.step(&mut state) {
            return Ok(RunOutcome {
                series,
                blowup: Some(BlowUp {
                    message: e.to_string(),
                    last_state: state.clone(),
                }),
                final_state: state,
            });
        }
        if k % cfg.diagnostics_every as u64 == 0 || k == steps {
            sample(&state, &mut series);
        }
    }
    Ok(RunOutcome {
        series,
        final_state: state,
        blowup: None,
    })
}

/// `∫_{σ·x − c t ≥ β} u²`.
pub fn region_mass(u: &RealField, sigma: &[f64], beta: f64, c: f64, t: f64) -> f64 {
    let s = [sigma[0], sigma.get(1).copied().unwrap_or(0.0)];
    let masked = u.map_with_point(|p, v| {
        if s[0] * p[0] + s[1] * p[1] - c * t >= beta {
            v * v
        } else {
            0.0
        }
    });
    masked.integral()
}

/// Shift `d` maximizing the periodic cross-correlation of `u` with `reference`,
/// refined to sub-grid accuracy by a parabola through the peak.
pub fn correlation_shift(sp: &Spectral, u: &RealField, reference: &RealField) -> [f64; 2] {
    let g = *sp.grid();
    let a = sp.forward_unchecked(u);
    let b = sp.forward_unchecked(reference);
    let prod: Vec<Complex64> = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x * y.conj()).collect();
    let corr = sp.inverse(&SpectralField::from_raw(g, prod));
    let (best, _) = corr
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let nx = g.n(0);
    let (bi, bj) = (best % nx, best / nx);
    let mut shift = [0.0; 2];
    for axis in 0..g.dim() {
        let n = g.n(axis);
        let idx = if axis == 0 { bi } else { bj };
        let at = |k: usize| {
            if axis == 0 {
                corr.at(k % n, bj)
            } else {
                corr.at(bi, k % n)
            }
        };
        let (ym, y0, yp) = (at(idx + n - 1), at(idx), at(idx + 1));
        let denom = ym - 2.0 * y0 + yp;
        let frac = if denom != 0.0 { 0.5 * (ym - yp) / denom } else { 0.0 };
        let m = if idx > n / 2 { idx as f64 - n as f64 } else { idx as f64 };
        shift[axis] = (m + frac) * g.spacing(axis);
    }
    shift
}
