//! Fourier-multiplier machinery on the periodic box.
//!
//! Forward transforms are unscaled sums, inverse transforms divide by the
//! point count. Multipliers singular at `k = 0` (`|k|^{-s}`, Riesz) map the
//! zero mode to 0. Odd multipliers zero the unpaired Nyquist mode so real
//! fields stay real.

use crate::error::{check_range, Result};
use crate::field::{RealField, SpectralField};
use crate::grid::GridSpec;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// `dst[i * rows + j] = src[j * cols + i]` for a `rows × cols` row-major `src`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 16;
    for j0 in (0..rows).step_by(B) {
        for i0 in (0..cols).step_by(B) {
            for j in j0..(j0 + B).min(rows) {
                for i in i0..(i0 + B).min(cols) {
                    dst[i * rows + j] = src[j * cols + i];
                }
            }
        }
    }
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    k: [Vec<f64>; 2],
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let axes = grid.dim();
        let fwd = (0..axes).map(|a| planner.plan_fft_forward(grid.n(a))).collect();
        let inv = (0..axes).map(|a| planner.plan_fft_inverse(grid.n(a))).collect();
        let k = [
            grid.wavenumbers(0),
            if axes == 2 { grid.wavenumbers(1) } else { vec![0.0] },
        ];
        Self {
            grid: *grid,
            fwd,
            inv,
            k,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Wavenumber lattice along `axis` in DFT order.
    pub fn k(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let plans = if forward { &self.fwd } else { &self.inv };
        plans[0].process(data);
        if self.grid.dim() == 2 {
            let (nx, ny) = (self.grid.n(0), self.grid.n(1));
            let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
            transpose(data, &mut t, nx, ny);
            plans[1].process(&mut t);
            transpose(&t, data, ny, nx);
        }
    }

    /// Unscaled forward DFT. Fails on non-finite input.
    pub fn forward(&self, f: &RealField) -> Result<SpectralField> {
        f.check_finite()?;
        Ok(self.forward_unchecked(f))
    }

    pub(crate) fn forward_unchecked(&self, f: &RealField) -> SpectralField {
        debug_assert!(f.grid().same_as(&self.grid));
        let mut data: Vec<Complex64> =
            f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        SpectralField::from_raw(self.grid, data)
    }

    /// Inverse DFT (divides by the point count), real part kept.
    pub fn inverse(&self, f: &SpectralField) -> RealField {
        let mut data = f.coeffs().to_vec();
        self.transform(&mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        RealField::from_raw(self.grid, data.iter().map(|c| c.re * scale).collect())
    }

    /// Multiplies coefficients in place by `m(k1, k2, i, j)`.
    pub fn multiply_in_place(
        &self,
        f: &mut SpectralField,
        m: impl Fn(f64, f64, usize, usize) -> Complex64,
    ) {
        let nx = self.grid.n(0);
        let ny = self.grid.n(1);
        let c = f.coeffs_mut();
        for j in 0..ny {
            let k2 = self.k[1][if self.grid.dim() == 2 { j } else { 0 }];
            for i in 0..nx {
                c[j * nx + i] *= m(self.k[0][i], k2, i, j);
            }
        }
    }

    pub fn apply_multiplier(
        &self,
        f: &RealField,
        m: impl Fn(f64, f64, usize, usize) -> Complex64,
    ) -> RealField {
        let mut h = self.forward_unchecked(f);
        self.multiply_in_place(&mut h, m);
        self.inverse(&h)
    }

    fn nyquist(&self, axis: usize, i: usize, j: usize) -> bool {
        match axis {
            0 => self.grid.is_nyquist(0, i),
            _ => self.grid.dim() == 2 && self.grid.is_nyquist(1, j),
        }
    }

    /// `|∇|^s f` for any real `s`; the zero mode maps to 0 whenever `s != 0`.
    pub fn abs_grad_pow(&self, f: &RealField, s: f64) -> RealField {
        if s == 0.0 {
            return f.clone();
        }
        self.apply_multiplier(f, |k1, k2, _, _| {
            let k = k1.hypot(k2);
            if k == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(k.powf(s), 0.0)
            }
        })
    }

    /// Fractional Laplacian `|∇|^α`, `α ∈ [1, 2]`.
    pub fn fractional_laplacian(&self, f: &RealField, alpha: f64) -> Result<RealField> {
        check_range("alpha", alpha, 1.0, 2.0)?;
        Ok(self.abs_grad_pow(f, alpha))
    }

    /// Riesz transform `R_j`, multiplier `-i k_j / |k|` (0 at `k = 0`).
    /// `axis` is 0-based (`0` for `x1`).
    pub fn riesz(&self, f: &RealField, axis: usize) -> RealField {
        self.apply_multiplier(f, |k1, k2, i, j| {
            let k = k1.hypot(k2);
            if k == 0.0 || self.nyquist(axis, i, j) {
                return Complex64::new(0.0, 0.0);
            }
            let ka = if axis == 0 { k1 } else { k2 };
            -I * (ka / k)
        })
    }

    /// Dispersion operator `∂x1 |∇|^α`, multiplier `i k1 |k|^α`.
    pub fn dispersion(&self, f: &RealField, alpha: f64) -> Result<RealField> {
        check_range("alpha", alpha, 1.0, 2.0)?;
        Ok(self.apply_multiplier(f, |k1, k2, i, _| {
            if self.grid.is_nyquist(0, i) {
                return Complex64::new(0.0, 0.0);
            }
            I * (k1 * k1.hypot(k2).powf(alpha))
        }))
    }

    /// Symbol of the dispersion operator, Nyquist convention included.
    pub fn dispersion_symbol(&self, alpha: f64, i: usize, j: usize) -> f64 {
        if self.grid.is_nyquist(0, i) {
            return 0.0;
        }
        let k1 = self.k[0][i];
        let k2 = self.k[1][if self.grid.dim() == 2 { j } else { 0 }];
        k1 * k1.hypot(k2).powf(alpha)
    }

    /// `∂ f / ∂x_{axis+1}`.
    pub fn derivative(&self, f: &RealField, axis: usize) -> RealField {
        self.apply_multiplier(f, |k1, k2, i, j| {
            if self.nyquist(axis, i, j) {
                return Complex64::new(0.0, 0.0);
            }
            I * if axis == 0 { k1 } else { k2 }
        })
    }

    pub fn gradient(&self, f: &RealField) -> Vec<RealField> {
        (0..self.grid.dim()).map(|a| self.derivative(f, a)).collect()
    }

    /// `Σ w(k) |f̂(k)|² · dV / N`.
    fn weighted_spectral_sum(&self, f: &RealField, w: impl Fn(f64) -> f64) -> f64 {
        let h = self.forward_unchecked(f);
        let nx = self.grid.n(0);
        let mut acc = 0.0;
        for (idx, c) in h.coeffs().iter().enumerate() {
            let i = idx % nx;
            let j = idx / nx;
            let k = self.k[0][i].hypot(self.k[1][if self.grid.dim() == 2 { j } else { 0 }]);
            acc += w(k) * c.norm_sqr();
        }
        acc * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// `‖f‖²_{H^{1/2}} = Σ ⟨k⟩ |f̂|²` with Plancherel normalization.
    pub fn sobolev_half_norm_sq(&self, f: &RealField) -> f64 {
        self.weighted_spectral_sum(f, |k| (1.0 + k * k).sqrt())
    }

    pub fn sobolev_half_norm(&self, f: &RealField) -> f64 {
        self.sobolev_half_norm_sq(f).sqrt()
    }

    /// `∫ ||∇|^{α/2} f|²`.
    pub fn homogeneous_half_energy(&self, f: &RealField, alpha: f64) -> f64 {
        self.weighted_spectral_sum(f, |k| if k == 0.0 { 0.0 } else { k.powf(alpha) })
    }

    /// True when the mode `(i, j)` survives the 2/3 rule.
    pub fn retained(&self, i: usize, j: usize) -> bool {
        let g = &self.grid;
        let ok0 = g.mode(0, i).abs() <= g.dealias_cutoff(0);
        let ok1 = g.dim() == 1 || g.mode(1, j).abs() <= g.dealias_cutoff(1);
        ok0 && ok1
    }

    pub fn dealias_in_place(&self, f: &mut SpectralField) {
        let nx = self.grid.n(0);
        for (idx, c) in f.coeffs_mut().iter_mut().enumerate() {
            if !self.retained(idx % nx, idx / nx) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// 2/3-rule truncation.
    pub fn dealias(&self, f: &RealField) -> RealField {
        let mut h = self.forward_unchecked(f);
        self.dealias_in_place(&mut h);
        self.inverse(&h)
    }

    /// Translate: returns `f(x - d)` by phase multiplication.
    pub fn shift(&self, f: &RealField, d: [f64; 2]) -> RealField {
        self.apply_multiplier(f, |k1, k2, _, _| {
            Complex64::from_polar(1.0, -(k1 * d[0] + k2 * d[1]))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid1() -> GridSpec {
        GridSpec::new_1d(64, 2.0 * PI).unwrap()
    }

    fn grid2() -> GridSpec {
        GridSpec::square(32, 2.0 * PI).unwrap()
    }

    fn random_field(grid: GridSpec, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        RealField::new(grid, v).unwrap()
    }

    fn max_diff(a: &RealField, b: &RealField) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn constant_has_only_dc() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let h = sp.forward(&RealField::constant(g, 1.0)).unwrap();
        assert!((h.coeffs()[0].re - g.len() as f64).abs() < 1e-9);
        assert!(h.coeffs()[1..].iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn single_cosine_two_modes() {
        let g = grid1();
        let sp = Spectral::new(&g);
        let h = sp.forward(&RealField::from_fn(g, |x, _| x.cos())).unwrap();
        let big: Vec<usize> = (0..64).filter(|&i| h.coeffs()[i].norm() > 1e-8).collect();
        assert_eq!(big, vec![1, 63]);
        assert!((h.coeffs()[1] - h.coeffs()[63].conj()).norm() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let g = grid1();
        let sp = Spectral::new(&g);
        let mut f = RealField::zeros(g);
        f.values_mut()[3] = f64::NAN;
        assert!(sp.forward(&f).is_err());
    }

    #[test]
    fn round_trip_and_plancherel() {
        for g in [grid1(), grid2(), GridSpec::new_2d(48, 16, 3.0, 9.0).unwrap()] {
            let sp = Spectral::new(&g);
            let f = random_field(g, 7);
            let h = sp.forward(&f).unwrap();
            let back = sp.inverse(&h);
            assert!(max_diff(&f, &back) < 1e-12 * f.max_abs().max(1.0));
            let rel = (f.norm_sq() - h.norm_sq()).abs() / f.norm_sq();
            assert!(rel < 1e-10, "plancherel {rel}");
            assert!(h.hermitian_defect() < 1e-9);
        }
    }

    #[test]
    fn fractional_laplacian_modes() {
        let g = grid1();
        let sp = Spectral::new(&g);
        let c = sp.fractional_laplacian(&RealField::constant(g, 3.0), 1.5).unwrap();
        assert!(c.max_abs() < 1e-12);
        let f = RealField::from_fn(g, |x, _| x.cos());
        assert!(max_diff(&sp.fractional_laplacian(&f, 2.0).unwrap(), &f) < 1e-12);
        let f2 = RealField::from_fn(g, |x, _| (2.0 * x).cos());
        let out = sp.fractional_laplacian(&f2, 1.0).unwrap();
        assert!(max_diff(&out, &f2.scaled(2.0)) < 1e-12);
        assert!(sp.fractional_laplacian(&f, 2.5).is_err());
        assert!(sp.fractional_laplacian(&f, 0.5).is_err());
    }

    #[test]
    fn riesz_conventions() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let f = RealField::from_fn(g, |x, _| x.cos());
        let r = sp.riesz(&f, 0);
        assert!(max_diff(&r, &RealField::from_fn(g, |x, _| x.sin())) < 1e-12);
        assert!(sp.riesz(&RealField::constant(g, 2.0), 0).max_abs() < 1e-14);

        // Σ R_j² = -(identity - mean) once the Nyquist lines are removed,
        // since each odd multiplier kills its own Nyquist line
        let u = sp.apply_multiplier(&random_field(g, 11), |_, _, i, j| {
            if g.is_nyquist(0, i) || g.is_nyquist(1, j) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        let mean = u.mean();
        let s = sp.riesz(&sp.riesz(&u, 0), 0).add(&sp.riesz(&sp.riesz(&u, 1), 1));
        let expect = u.map(|v| -(v - mean));
        assert!(max_diff(&s, &expect) < 1e-10);
    }

    #[test]
    fn riesz_is_minus_dx_inverse_grad() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let u = sp.dealias(&random_field(g, 3));
        let lhs = sp.riesz(&u, 0);
        let rhs = sp.derivative(&sp.abs_grad_pow(&u, -1.0), 0).scaled(-1.0);
        assert!(max_diff(&lhs, &rhs) < 1e-11 * lhs.max_abs());
    }

    #[test]
    fn dispersion_single_mode_and_skew() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let f = RealField::from_fn(g, |x, _| x.cos());
        let d = sp.dispersion(&f, 1.0).unwrap();
        assert!(max_diff(&d, &RealField::from_fn(g, |x, _| -x.sin())) < 1e-12);
        assert!(sp.dispersion(&RealField::constant(g, 1.0), 1.3).unwrap().max_abs() < 1e-12);
        for alpha in [1.0, 1.5, 2.0] {
            let u = random_field(g, 5);
            let ip = sp.dispersion(&u, alpha).unwrap().inner(&u);
            assert!(ip.abs() < 1e-12 * u.norm_sq(), "{ip}");
        }
    }

    #[test]
    fn semigroup() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let u = random_field(g, 9);
        for alpha in [1.0, 1.4, 2.0] {
            let twice = sp.abs_grad_pow(&sp.abs_grad_pow(&u, alpha / 2.0), alpha / 2.0);
            let once = sp.abs_grad_pow(&u, alpha);
            assert!(max_diff(&twice, &once) < 1e-11 * once.max_abs());
        }
    }

    #[test]
    fn half_energy_single_mode() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let f = RealField::from_fn(g, |x, _| x.cos());
        let e = sp.homogeneous_half_energy(&f, 1.0);
        assert!((e - 0.5 * g.volume()).abs() < 1e-10);
        let d = sp.derivative(&RealField::constant(g, 4.0), 1);
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn dealias_idempotent() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let u = random_field(g, 2);
        let once = sp.dealias(&u);
        let twice = sp.dealias(&once);
        assert!(max_diff(&once, &twice) < 1e-13);
    }

    #[test]
    fn shift_moves_profile() {
        let g = GridSpec::new_1d(128, 40.0).unwrap();
        let sp = Spectral::new(&g);
        let f = RealField::from_fn(g, |x, _| (-x * x).exp());
        let s = sp.shift(&f, [1.7, 0.0]);
        let e = RealField::from_fn(g, |x, _| (-(x - 1.7) * (x - 1.7)).exp());
        assert!(max_diff(&s, &e) < 1e-10);
    }
}
