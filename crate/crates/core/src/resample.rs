//! Spectral evaluation of a field at affinely mapped grid points.
//!
//! `resample_affine(f, s, b)` returns `g(x) = f(s x + b)` sampled on the
//! same grid, where `f` is read as its trigonometric interpolant (the
//! Nyquist mode split evenly between `±N/2`). Each axis is a chirp-z
//! transform evaluated with Bluestein's algorithm, so the cost is
//! `O(N log N)` per grid line instead of a dense non-uniform sum.
//!
//! Points `s x + b` that leave the box wrap periodically.

use crate::field::RealField;
use crate::grid::GridSpec;
use crate::spectral::Spectral;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

struct ChirpAxis {
    n: usize,
    p: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl ChirpAxis {
    fn new(grid: &GridSpec, axis: usize, scale: f64, offset: f64, planner: &mut FftPlanner<f64>) -> Self {
        let n = grid.n(axis);
        let length = grid.length(axis);
        let x0 = -0.5 * length;
        let b = (scale - 1.0) * x0 + offset;
        let theta = 2.0 * PI * scale / n as f64;
        let half = (n / 2) as i64;

        // m = p - N/2 for p = 0..=N
        let pre = (0..=n)
            .map(|p| {
                let m = p as i64 - half;
                let km = 2.0 * PI * m as f64 / length;
                let mf = m as f64;
                let w = if m.abs() == half { 0.5 } else { 1.0 };
                Complex64::from_polar(w / n as f64, km * b + 0.5 * theta * mf * mf)
            })
            .collect();
        let post = (0..n)
            .map(|j| {
                let jf = j as f64;
                Complex64::from_polar(1.0, 0.5 * theta * jf * jf)
            })
            .collect();

        let p = (3 * n).next_power_of_two();
        let mut kernel = vec![Complex64::new(0.0, 0.0); p];
        let h = |l: i64| {
            let lf = l as f64;
            Complex64::from_polar(1.0, -0.5 * theta * lf * lf)
        };
        for t in 0..=(3 * n / 2) {
            kernel[t] = h(t as i64);
        }
        for t in 1..=n {
            kernel[p - t] = h(-(t as i64));
        }
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        fwd.process(&mut kernel);
        Self {
            n,
            p,
            pre,
            post,
            kernel_hat: kernel,
            fwd,
            inv,
        }
    }

    /// `coeffs` in DFT order (length N); returns N point values.
    fn eval(&self, coeffs: &[Complex64], buf: &mut Vec<Complex64>, out: &mut [Complex64]) {
        let n = self.n;
        let half = n / 2;
        buf.clear();
        buf.resize(self.p, Complex64::new(0.0, 0.0));
        for p in 0..=n {
            let m = p as i64 - half as i64;
            let idx = if m < 0 { (m + n as i64) as usize } else { (m as usize) % n };
            buf[p] = coeffs[idx] * self.pre[p];
        }
        self.fwd.process(buf);
        for (a, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *a *= k;
        }
        self.inv.process(buf);
        let norm = 1.0 / self.p as f64;
        for j in 0..n {
            out[j] = buf[j + half] * self.post[j] * norm;
        }
    }
}

/// Samples `x -> f(scale * x + offset)` on `f`'s grid.
pub fn resample_affine(sp: &Spectral, f: &RealField, scale: f64, offset: [f64; 2]) -> RealField {
    let grid = *f.grid();
    if scale == 1.0 && offset == [0.0, 0.0] {
        return f.clone();
    }
    let mut planner = FftPlanner::new();
    let nx = grid.n(0);
    let ny = grid.n(1);
    let hat = sp.forward_unchecked(f);
    let mut data = hat.coeffs().to_vec();
    let mut buf = Vec::new();

    let ax0 = ChirpAxis::new(&grid, 0, scale, offset[0], &mut planner);
    let mut line = vec![Complex64::new(0.0, 0.0); nx];
    for j in 0..ny {
        let row = &mut data[j * nx..(j + 1) * nx];
        ax0.eval(row, &mut buf, &mut line);
        row.copy_from_slice(&line);
    }
    if grid.dim() == 2 {
        let ax1 = ChirpAxis::new(&grid, 1, scale, offset[1], &mut planner);
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        let mut out = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            ax1.eval(&col, &mut buf, &mut out);
            for j in 0..ny {
                data[j * nx + i] = out[j];
            }
        }
    }
    RealField::from_raw(grid, data.iter().map(|c| c.re).collect())
}
