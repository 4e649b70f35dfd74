use crate::error::{Error, Result};
use crate::grid::GridSpec;
use num_complex::Complex64;

/// Real function sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Vec<f64>,
}

/// Discrete Fourier coefficients, DFT ordering, forward transform unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; used on hot paths where values come from
    /// already-validated arithmetic.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    /// Samples `f(x1, x2)` on the grid (`x2 = 0` in 1D).
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(p[0], p[1])
            })
            .collect();
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise map with access to the physical coordinates.
    pub fn map_with_point(&self, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(self.grid.point(idx), v))
            .collect();
        Self::from_raw(self.grid, values)
    }

    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid.same_as(&other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_raw(self.grid, values)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    /// Quadrature `∫ f` (rectangle rule, spectrally accurate for periodic data).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Discrete L² inner product `∫ f g`.
    pub fn inner(&self, other: &RealField) -> f64 {
        debug_assert!(self.grid.same_as(&other.grid));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at the grid point closest to the origin.
    pub fn center_value(&self) -> f64 {
        let i = self.grid.n(0) / 2;
        let j = if self.grid.dim() == 1 { 0 } else { self.grid.n(1) / 2 };
        self.values[self.grid.index(i, j)]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }
}

impl SpectralField {
    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for a grid of {} points",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub(crate) fn from_raw(grid: GridSpec, coeffs: Vec<Complex64>) -> Self {
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// `Σ |f̂|² · dV / N`, equal to `∫ f²` under the unscaled-forward convention.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
            / self.grid.len() as f64
    }

    /// Largest violation of `f̂(-k) = conj f̂(k)` over non-Nyquist modes.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.n(0), g.n(1));
        let mut worst: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                if g.is_nyquist(0, i) || (g.dim() == 2 && g.is_nyquist(1, j)) {
                    continue;
                }
                let im = (nx - i) % nx;
                let jm = (ny - j) % ny;
                let a = self.coeffs[g.index(i, j)];
                let b = self.coeffs[g.index(im, jm)];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }
}
