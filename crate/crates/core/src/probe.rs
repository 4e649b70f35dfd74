//! Seeded families of smooth, localized test functions.

use crate::field::RealField;
use crate::grid::GridSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One Gaussian bump `a (1 + b·(x − x0)) exp(−|x − x0|² / w²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: f64,
    /// Linear prefactor coefficients; zero for a plain Gaussian.
    pub tilt: [f64; 2],
}

impl Bump {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let g = (-(dx * dx + dy * dy) / (self.width * self.width)).exp();
        self.amplitude * (1.0 + self.tilt[0] * dx + self.tilt[1] * dy) * g
    }

    pub fn field(&self, grid: GridSpec) -> RealField {
        RealField::from_fn(grid, |x, y| self.eval(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    /// Centers drawn uniformly from `[-r, r]` per axis with `r = center_frac · L/2`.
    pub center_frac: f64,
    pub width: (f64, f64),
    /// Probability that a bump carries an odd linear prefactor.
    pub tilt_probability: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            center_frac: 0.5,
            width: (1.0, 8.0),
            tilt_probability: 0.5,
        }
    }
}

/// Deterministic list of `count` bumps for `grid`.
pub fn bump_family(grid: &GridSpec, spec: &ProbeSpec, count: usize, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut center = [0.0; 2];
            let mut tilt = [0.0; 2];
            let with_tilt = rng.gen::<f64>() < spec.tilt_probability;
            for axis in 0..grid.dim() {
                let r = spec.center_frac * grid.half_length(axis);
                center[axis] = rng.gen_range(-r..=r);
            }
            let width = rng.gen_range(spec.width.0..=spec.width.1);
            if with_tilt {
                for t in tilt.iter_mut().take(grid.dim()) {
                    *t = rng.gen_range(-1.0..=1.0) / width;
                }
            }
            Bump {
                amplitude: rng.gen_range(0.5..=1.5),
                center,
                width,
                tilt,
            }
        })
        .collect()
}

/// Sum of `bumps_per_field` random bumps, repeated `count` times.
pub fn random_smooth_fields(
    grid: GridSpec,
    spec: &ProbeSpec,
    count: usize,
    bumps_per_field: usize,
    seed: u64,
) -> Vec<RealField> {
    let all = bump_family(&grid, spec, count * bumps_per_field, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    all.chunks(bumps_per_field)
        .map(|chunk| {
            let signs: Vec<f64> = chunk
                .iter()
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            RealField::from_fn(grid, |x, y| {
                chunk.iter().zip(&signs).map(|(b, s)| s * b.eval(x, y)).sum()
            })
        })
        .collect()
}
