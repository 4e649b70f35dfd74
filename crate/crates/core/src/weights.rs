//! Soliton-tail weights, the smooth cutoff, the scaling generator and the
//! x1-antiderivative of `ΛQ`.
//!
//! With `t = σ·x / M + ω` the two weights are
//!
//! ```text
//! varphi(x) = G(t),   G(t) = ∫_{-∞}^t ⟨r⟩^{-2γ} dr
//! phi(x)    = ⟨t⟩^{-γ}
//! ```
//!
//! so that `∂_j varphi = (σ_j / M) phi²`.

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::GridSpec;
use crate::quad;
use crate::spectral::Spectral;
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

fn japanese(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    sigma: [f64; 2],
    dim: usize,
    omega: f64,
    gamma: f64,
    m_scale: f64,
}

impl WeightParams {
    /// Validates `γ ∈ (1/2, (α+1)/2]`, `σ ≠ 0` and `M > 0`.
    pub fn new(sigma: &[f64], omega: f64, gamma: f64, m_scale: f64, alpha: f64) -> Result<Self> {
        let hi = 0.5 * (alpha + 1.0);
        if !(gamma > 0.5 && gamma <= hi) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: gamma,
                range: format!("(1/2, {hi}] for alpha = {alpha}"),
            });
        }
        Self::unrestricted(sigma, omega, gamma, m_scale)
    }

    /// Only requires `γ > 1/2` (integrable weight), for uses outside the
    /// commutator estimate such as the `γ = 3/2` weight at `α = 1`.
    pub fn unrestricted(sigma: &[f64], omega: f64, gamma: f64, m_scale: f64) -> Result<Self> {
        if sigma.is_empty() || sigma.len() > 2 {
            return Err(Error::Precondition(format!(
                "sigma must have 1 or 2 components, got {}",
                sigma.len()
            )));
        }
        if sigma.iter().all(|&s| s == 0.0) || sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::Precondition("sigma must be a finite nonzero vector".into()));
        }
        if !(gamma > 0.5 && gamma.is_finite()) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: gamma,
                range: "(1/2, inf)".into(),
            });
        }
        if !(m_scale > 0.0 && m_scale.is_finite()) {
            return Err(Error::OutOfRange {
                name: "m_scale",
                value: m_scale,
                range: "(0, inf)".into(),
            });
        }
        if !omega.is_finite() {
            return Err(Error::OutOfRange {
                name: "omega",
                value: omega,
                range: "finite".into(),
            });
        }
        let mut s = [0.0; 2];
        s[..sigma.len()].copy_from_slice(sigma);
        Ok(Self {
            sigma: s,
            dim: sigma.len(),
            omega,
            gamma,
            m_scale,
        })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma[..self.dim]
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn m_scale(&self) -> f64 {
        self.m_scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `γ ∈ (1/2, (α+1)/2]`.
    pub fn gamma_admissible(&self, alpha: f64) -> bool {
        self.gamma > 0.5 && self.gamma <= 0.5 * (alpha + 1.0)
    }

    /// Same weight with a different `M`.
    pub fn with_m_scale(&self, m_scale: f64) -> Self {
        Self { m_scale, ..*self }
    }

    /// Same weight with a different shift `ω`.
    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }

    /// `σ·x / M + ω`.
    pub fn argument(&self, p: [f64; 2]) -> f64 {
        (self.sigma[0] * p[0] + self.sigma[1] * p[1]) / self.m_scale + self.omega
    }

    pub fn varphi(&self, p: [f64; 2]) -> f64 {
        antiderivative(self.gamma, self.argument(p))
    }

    pub fn phi(&self, p: [f64; 2]) -> f64 {
        japanese(self.argument(p)).powf(-self.gamma)
    }

    /// `sup varphi = ∫_ℝ ⟨r⟩^{-2γ} dr`.
    pub fn varphi_sup(&self) -> f64 {
        antiderivative(self.gamma, f64::INFINITY)
    }

    /// Without a closed form, values are accumulated along the sorted
    /// arguments so each grid point costs one short quadrature.
    pub fn varphi_field(&self, grid: GridSpec) -> RealField {
        if self.gamma == 1.0 || self.gamma == 1.5 {
            return RealField::from_fn(grid, |x, y| self.varphi([x, y]));
        }
        let args: Vec<f64> = (0..grid.len()).map(|i| self.argument(grid.point(i))).collect();
        let mut order: Vec<usize> = (0..args.len()).collect();
        order.sort_by(|&a, &b| args[a].total_cmp(&args[b]));
        let mut out = vec![0.0; args.len()];
        let mut prev = args[order[0]];
        let mut value = antiderivative(self.gamma, prev);
        let g = self.gamma;
        for &i in &order {
            let t = args[i];
            if t > prev {
                value += quad::integrate(|r| (1.0 + r * r).powf(-g), prev, t, 1e-13);
                prev = t;
            }
            out[i] = value;
        }
        RealField::from_raw(grid, out)
    }

    pub fn phi_field(&self, grid: GridSpec) -> RealField {
        RealField::from_fn(grid, |x, y| self.phi([x, y]))
    }
}

/// `G_γ(t) = ∫_{-∞}^t (1 + r²)^{-γ} dr`.
///
/// Closed forms for `γ = 1` and `γ = 3/2`. Otherwise `r = tan θ` turns the
/// integral into `∫ cos^{2γ-2} θ dθ` from `-π/2`, and `θ = -π/2 + v^p` with
/// `p = 1/(2γ-1)` removes the endpoint singularity when `γ < 1`.
pub fn antiderivative(gamma: f64, t: f64) -> f64 {
    if gamma == 1.0 {
        return if t == f64::INFINITY { 2.0 * FRAC_PI_2 } else { t.atan() + FRAC_PI_2 };
    }
    if gamma == 1.5 {
        return if t == f64::INFINITY { 2.0 } else { t / japanese(t) + 1.0 };
    }
    let top = if t == f64::INFINITY { 2.0 * FRAC_PI_2 } else { t.atan() + FRAC_PI_2 };
    let e = 2.0 * gamma - 2.0;
    let p = if gamma < 1.0 { 1.0 / (2.0 * gamma - 1.0) } else { 1.0 };
    let vmax = top.powf(1.0 / p);
    quad::integrate(
        |v| {
            let s = v.powf(p).sin();
            if s <= 0.0 {
                return 0.0;
            }
            s.powf(e) * p * v.powf(p - 1.0)
        },
        0.0,
        vmax,
        1e-12,
    )
}

/// Smooth step equal to 1 on `[0, 1]` and 0 on `[2, ∞)`.
pub fn smooth_step(r: f64) -> f64 {
    fn psi(t: f64) -> f64 {
        if t > 0.0 {
            (-1.0 / t).exp()
        } else {
            0.0
        }
    }
    let r = r.abs();
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let a = psi(2.0 - r);
    a / (a + psi(r - 1.0))
}

/// Radial cutoff `χ(x / A)`.
pub fn cutoff_chi(p: [f64; 2], a: f64) -> f64 {
    smooth_step(p[0].hypot(p[1]) / a)
}

/// `χ_A(x1)` on the grid.
pub fn cutoff_x1_field(grid: GridSpec, a: f64) -> RealField {
    RealField::from_fn(grid, |x, _| smooth_step(x / a))
}

/// `Λf = f + x·∇f`, coordinates measured from the box center.
pub fn scaling_generator(sp: &Spectral, f: &RealField) -> RealField {
    let grad = sp.gradient(f);
    let mut out = f.clone();
    for (axis, g) in grad.iter().enumerate() {
        out = out.zip_map(&g.map_with_point(|p, v| p[axis] * v), |a, b| a + b);
    }
    out
}

/// `F(x1, x2) = ∫_{-L/2}^{x1} f(z, x2) dz` per grid row.
///
/// The zero-mean part of each row is integrated spectrally and its row mean
/// contributes the linear ramp, so `∂x1 F = f` to spectral accuracy.
pub fn x1_antiderivative(sp: &Spectral, f: &RealField) -> RealField {
    let grid = *f.grid();
    let nx = grid.n(0);
    let ny = grid.n(1);
    let len = grid.length(0);
    let mut h = sp.forward_unchecked(f);
    let mut means = vec![0.0; ny];
    {
        // the k1 = 0 column is the x2-transform of the row means
        let c = h.coeffs_mut();
        let row_mean_hat: Vec<Complex64> = (0..ny).map(|j| c[j * nx]).collect();
        for j in 0..ny {
            c[j * nx] = Complex64::new(0.0, 0.0);
        }
        let row_means = inverse_x2(&grid, &row_mean_hat);
        means.copy_from_slice(&row_means);
    }
    sp.multiply_in_place(&mut h, |k1, _, i, _| {
        if k1 == 0.0 || grid.is_nyquist(0, i) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -1.0 / k1)
        }
    });
    let periodic = sp.inverse(&h);
    let x0 = -0.5 * len;
    let mut values = periodic.into_values();
    for j in 0..ny {
        let row = &mut values[j * nx..(j + 1) * nx];
        let base = row[0];
        for (i, v) in row.iter_mut().enumerate() {
            let x = grid.coord(0, i);
            *v = *v - base + means[j] * (x - x0);
        }
    }
    RealField::from_raw(grid, values)
}

/// Row means of `f` from the `k1 = 0` column of its 2D transform.
fn inverse_x2(grid: &GridSpec, col: &[Complex64]) -> Vec<f64> {
    let nx = grid.n(0) as f64;
    if grid.dim() == 1 {
        return vec![col[0].re / nx];
    }
    let ny = col.len();
    let mut data = col.to_vec();
    let mut planner = rustfft::FftPlanner::<f64>::new();
    planner.plan_fft_inverse(ny).process(&mut data);
    data.iter().map(|c| c.re / (nx * ny as f64)).collect()
}

/// Decay report for `F`: profile of `sup_{x1} |F(·, x2)|` and its fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FDecayReport {
    pub x2: Vec<f64>,
    pub sup_abs: Vec<f64>,
    pub exponent: Option<f64>,
    pub left_edge_max: f64,
}

/// Fits the decay of `sup_{x1} |F(x1, x2)|` over `x2 ∈ [lo, hi]`.
pub fn f_decay_check(f: &RealField, lo: f64, hi: f64) -> FDecayReport {
    let grid = *f.grid();
    let nx = grid.n(0);
    let ny = grid.n(1);
    let mut x2 = Vec::new();
    let mut sup_abs = Vec::new();
    for j in 0..ny {
        let y = grid.coord(1, j);
        if y < lo || y > hi {
            continue;
        }
        let s = (0..nx).fold(0.0_f64, |m, i| m.max(f.at(i, j).abs()));
        x2.push(y);
        sup_abs.push(s);
    }
    let exponent = crate::fit::decay_exponent(&x2, &sup_abs);
    let left_edge_max = (0..ny).fold(0.0_f64, |m, j| m.max(f.at(0, j).abs()));
    FDecayReport {
        x2,
        sup_abs,
        exponent,
        left_edge_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms() {
        let w = WeightParams::new(&[1.0], 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!((w.varphi([0.0, 0.0]) - PI / 2.0).abs() < 1e-15);
        let w = WeightParams::new(&[1.0], 0.0, 1.5, 1.0, 2.0).unwrap();
        assert!((w.varphi([1e12, 0.0]) - 2.0).abs() < 1e-12);
        assert_eq!(w.varphi_sup(), 2.0);
    }

    #[test]
    fn quadrature_matches_oracle() {
        // high-precision quadrature, 30 digits
        let w = WeightParams::new(&[1.0], 0.5, 1.2, 1.0, 1.5).unwrap();
        assert!((w.varphi([1.0, 0.0]) - 2.169_391_577_863_424_4).abs() < 1e-9);
        assert!((w.varphi_sup() - 2.505_795_576_340_678_8).abs() < 1e-9);
        assert!((antiderivative(0.75, -2.0) - 1.366_756_920_896_167_1).abs() < 1e-9);
        // generic path agrees with the closed forms
        assert!((antiderivative(1.0 + 1e-13, 0.7) - antiderivative(1.0, 0.7)).abs() < 1e-9);
    }

    #[test]
    fn phi_values() {
        let w = WeightParams::new(&[1.0, 0.0], 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(w.phi([0.0, 3.0]), 1.0);
        assert!((w.phi([3f64.sqrt(), 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(WeightParams::new(&[0.0, 0.0], 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(WeightParams::new(&[1.0], 0.0, 2.0, 1.0, 1.0).is_err());
        assert!(WeightParams::new(&[1.0], 0.0, 0.5, 1.0, 1.0).is_err());
        assert!(WeightParams::new(&[1.0], 0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn chi_support_and_monotone() {
        assert_eq!(cutoff_chi([0.5, 0.0], 1.0), 1.0);
        assert_eq!(cutoff_chi([3.0, 0.0], 1.0), 0.0);
        assert_eq!(cutoff_chi([0.0, 3.9], 4.0), 1.0);
        assert_eq!(cutoff_chi([6.0, 6.0], 4.0), 0.0);
        let mut prev = 1.0;
        for i in 0..1000 {
            let v = cutoff_chi([i as f64 * 0.003, 0.0], 1.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
    }

    #[test]
    fn scaling_generator_on_modes() {
        let g = GridSpec::new_1d(64, 2.0 * PI).unwrap();
        let sp = Spectral::new(&g);
        let one = scaling_generator(&sp, &RealField::constant(g, 1.0));
        assert!(one.sub(&RealField::constant(g, 1.0)).max_abs() < 1e-13);
        let f = RealField::from_fn(g, |x, _| x.cos());
        let e = RealField::from_fn(g, |x, _| x.cos() - x * x.sin());
        assert!(scaling_generator(&sp, &f).sub(&e).max_abs() < 1e-12);
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let g = GridSpec::new_2d(128, 64, 40.0, 30.0).unwrap();
        let sp = Spectral::new(&g);
        let f = RealField::from_fn(g, |x, y| (-(x - 1.0).powi(2) - 0.3 * y * y).exp() * (1.0 + 0.2 * x));
        let big_f = x1_antiderivative(&sp, &f);
        for j in 0..g.n(1) {
            assert!(big_f.at(0, j).abs() < 1e-14);
        }
        assert!(sp.derivative(&big_f.sub(&linear_part(&f)), 0).add(&row_means(&f)).sub(&f).max_abs() < 1e-10);
        // last point holds the row integral minus one cell
        let y = g.coord(1, 40);
        let exact = (-0.3 * y * y).exp() * PI.sqrt() * 1.2;
        let dx = g.spacing(0);
        assert!((big_f.at(g.n(0) - 1, 40) + dx * f.at(g.n(0) - 1, 40) - exact).abs() < 1e-9);
    }

    fn row_means(f: &RealField) -> RealField {
        let g = *f.grid();
        let nx = g.n(0);
        let m: Vec<f64> = (0..g.n(1))
            .map(|j| (0..nx).map(|i| f.at(i, j)).sum::<f64>() / nx as f64)
            .collect();
        RealField::from_fn(g, |_, _| 0.0).map_with_point(|p, _| {
            let j = ((p[1] + g.half_length(1)) / g.spacing(1)).round() as usize;
            m[j]
        })
    }

    fn linear_part(f: &RealField) -> RealField {
        let g = *f.grid();
        let m = row_means(f);
        m.map_with_point(|p, v| v * (p[0] + g.half_length(0)))
    }

    #[test]
    fn field_accumulation_matches_pointwise() {
        let g = GridSpec::new_2d(24, 16, 30.0, 20.0).unwrap();
        let w = WeightParams::new(&[0.8, 0.3], 0.4, 0.8, 2.0, 1.0).unwrap();
        let f = w.varphi_field(g);
        for idx in (0..g.len()).step_by(7) {
            let exact = w.varphi(g.point(idx));
            assert!((f.values()[idx] - exact).abs() < 1e-12 * exact.max(1.0));
        }
    }
}
