//! Browser bindings: 1D ground states, a stepping wave for animation, and
//! the positivity check of the commutator matrix.
//!
//! The plain functions carry the logic and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use fdisp_core::evolution::{Integrator, SimConfig, SimState};
use fdisp_core::ground_state::{default_init, mass_energy, petviashvili_solve, SolverOptions};
use fdisp_core::monotonicity::{sigma_condition, MatrixM};
use fdisp_core::{GridSpec, RealField, Spectral};
use wasm_bindgen::prelude::*;

fn line(points: usize, length: f64) -> Result<(GridSpec, Spectral), String> {
    let g = GridSpec::new_1d(points, length).map_err(|e| e.to_string())?;
    let sp = Spectral::new(&g);
    Ok((g, sp))
}

fn profile(alpha: f64, points: usize, length: f64, band_limited: bool) -> Result<Vec<f64>, String> {
    let (g, sp) = line(points, length)?;
    let opts = SolverOptions {
        band_limited,
        ..Default::default()
    };
    let gs = petviashvili_solve(&sp, alpha, 1.0, &default_init(g), opts).map_err(|e| e.to_string())?;
    Ok(gs.q.into_values())
}

pub fn solve_profile(alpha: f64, points: usize, length: f64) -> Result<Vec<f64>, String> {
    profile(alpha, points, length, false)
}

/// Ground state of `Q + |∂x|^α Q = Q²/2` on `points` samples of `[-L/2, L/2)`.
#[wasm_bindgen]
pub fn ground_state(alpha: f64, points: usize, length: f64) -> Result<Vec<f64>, JsError> {
    solve_profile(alpha, points, length).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn coordinates(points: usize, length: f64) -> Result<Vec<f64>, JsError> {
    let g = GridSpec::new_1d(points, length).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(g.coords(0))
}

/// `[1 if the σ condition holds else 0, smallest eigenvalue of M]`.
pub fn sigma_report(alpha: f64, sigma1: f64, sigma2: f64) -> Result<Vec<f64>, String> {
    let sigma = [sigma1, sigma2];
    let m = MatrixM::build(alpha, &sigma).map_err(|e| e.to_string())?;
    Ok(vec![sigma_condition(&sigma, alpha) as u8 as f64, m.min_eigenvalue()])
}

#[wasm_bindgen]
pub fn sigma_check(alpha: f64, sigma1: f64, sigma2: f64) -> Result<Vec<f64>, JsError> {
    sigma_report(alpha, sigma1, sigma2).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct Wave {
    integrator: Integrator,
    state: SimState,
    alpha: f64,
    mass0: f64,
}

impl Wave {
    pub fn build(alpha: f64, points: usize, length: f64, amplitude: f64, gaussian: bool) -> Result<Wave, String> {
        let (g, sp) = line(points, length)?;
        let u0 = if gaussian {
            RealField::from_fn(g, |x, _| amplitude * (-x * x).exp())
        } else {
            // the dealiased stepper only conserves band-limited data
            let q = profile(alpha, points, length, true)?;
            RealField::new(g, q).map_err(|e| e.to_string())?.scaled(amplitude)
        };
        // the linear part is exact; keep dt·max|k|^(1+α) moderate for the stages
        let kmax = std::f64::consts::PI / g.spacing(0);
        let dt = (8.0 / kmax.powf(1.0 + alpha)).min(0.01);
        let cfg = SimConfig {
            alpha,
            dt,
            t_end: f64::MAX,
            ..Default::default()
        };
        let integrator = Integrator::new(&sp, cfg).map_err(|e| e.to_string())?;
        let (mass0, _) = mass_energy(&sp, &u0, alpha);
        Ok(Wave {
            integrator,
            state: SimState::new(u0),
            alpha,
            mass0,
        })
    }

    pub fn step_n(&mut self, steps: u32) -> Result<(), String> {
        for _ in 0..steps {
            self.integrator.step(&mut self.state).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn relative_mass_drift(&self) -> f64 {
        let (m, _) = mass_energy(self.integrator.spectral(), &self.state.u, self.alpha);
        (m - self.mass0).abs() / self.mass0
    }
}

#[wasm_bindgen]
impl Wave {
    /// Scaled ground state (`gaussian = false`) or `amplitude·exp(−x²)`.
    #[wasm_bindgen(constructor)]
    pub fn new(alpha: f64, points: usize, length: f64, amplitude: f64, gaussian: bool) -> Result<Wave, JsError> {
        Wave::build(alpha, points, length, amplitude, gaussian).map_err(|e| JsError::new(&e))
    }

    pub fn advance(&mut self, steps: u32) -> Result<(), JsError> {
        self.step_n(steps).map_err(|e| JsError::new(&e))
    }

    pub fn values(&self) -> Vec<f64> {
        self.state.u.values().to_vec()
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn mass_drift(&self) -> f64 {
        self.relative_mass_drift()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kdv_profile_peaks_at_three() {
        let q = solve_profile(2.0, 512, 80.0).unwrap();
        let peak = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - 3.0).abs() < 1e-6, "{peak}");
    }

    #[test]
    fn soliton_keeps_its_mass_and_moves_right() {
        let mut w = Wave::build(1.5, 256, 64.0, 1.0, false).unwrap();
        let argmax = |v: &[f64]| {
            v.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &x)| if x > a.1 { (i, x) } else { a }).0
        };
        let start = argmax(&w.values());
        w.step_n(200).unwrap();
        assert!(w.time() > 1.0);
        assert!(argmax(&w.values()) > start);
        assert!(w.relative_mass_drift() < 1e-6, "{}", w.relative_mass_drift());
    }

    #[test]
    fn sigma_report_flags() {
        let r = sigma_report(1.0, 1.0, 0.0).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r[1] > 0.0);
        assert_eq!(sigma_report(1.0, 0.1, 2.0).unwrap()[0], 0.0);
        assert!(solve_profile(1.0, 15, 10.0).is_err());
    }
}
