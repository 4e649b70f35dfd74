pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evolution;
pub mod field;
pub mod fit;
pub mod grid;
pub mod ground_state;
pub(crate) mod krylov;
pub mod linearized;
pub mod modulation;
pub mod monotonicity;
pub mod probe;
pub mod quad;
pub mod resample;
pub mod spectral;
pub mod table;
pub mod weights;

pub use error::{Error, Result};
pub use field::{RealField, SpectralField};
pub use grid::GridSpec;
pub use spectral::Spectral;
