//! Periodic computational box standing in for `R^n`, `n` in {1, 2}.
//!
//! Coordinates are centered: along each axis `x_i = -L/2 + i*dx`, so the
//! index `n/2` sits at the origin. Fields are stored row-major with the
//! `x1` axis fastest: `values[j * nx + i]`.

use crate::error::{Error, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: [usize; 2],
    length: [f64; 2],
}

impl GridSpec {
    pub fn new_1d(n: usize, length: f64) -> Result<Self> {
        Self::validate_axis(n, length)?;
        Ok(Self {
            dim: 1,
            n: [n, 1],
            length: [length, 1.0],
        })
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::validate_axis(nx, lx)?;
        Self::validate_axis(ny, ly)?;
        Ok(Self {
            dim: 2,
            n: [nx, ny],
            length: [lx, ly],
        })
    }

    /// Square 2D grid, `n` points and box length `length` on both axes.
    pub fn square(n: usize, length: f64) -> Result<Self> {
        Self::new_2d(n, n, length, length)
    }

    fn validate_axis(n: usize, length: f64) -> Result<()> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 16, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {length}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.length[axis]
    }

    pub fn half_length(&self, axis: usize) -> f64 {
        0.5 * self.length[axis]
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.n[axis] as f64
    }

    /// Quadrature weight of one grid cell (`dx` or `dx*dy`).
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.spacing(0)
        } else {
            self.spacing(0) * self.spacing(1)
        }
    }

    /// Box measure (`L` or `Lx*Ly`).
    pub fn volume(&self) -> f64 {
        if self.dim == 1 {
            self.length[0]
        } else {
            self.length[0] * self.length[1]
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.length[axis] + i as f64 * self.spacing(axis)
    }

    /// Coordinates along one axis.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Signed integer mode number in standard DFT ordering.
    pub fn mode(&self, axis: usize, i: usize) -> i64 {
        let n = self.n[axis] as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumber(&self, axis: usize, i: usize) -> f64 {
        2.0 * PI * self.mode(axis, i) as f64 / self.length[axis]
    }

    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.wavenumber(axis, i)).collect()
    }

    /// True when index `i` is the unpaired Nyquist mode of `axis`.
    pub fn is_nyquist(&self, axis: usize, i: usize) -> bool {
        self.n[axis] > 1 && i == self.n[axis] / 2
    }

    /// Largest retained |mode| under the 2/3 rule.
    pub fn dealias_cutoff(&self, axis: usize) -> i64 {
        ((self.n[axis] - 1) / 3) as i64
    }

    /// Physical point of flat index `idx` (second component 0 in 1D).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let i = idx % self.n[0];
        let j = idx / self.n[0];
        if self.dim == 1 {
            [self.coord(0, i), 0.0]
        } else {
            [self.coord(0, i), self.coord(1, j)]
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    /// Same point counts and box lengths.
    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }

    pub(crate) fn require_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}
