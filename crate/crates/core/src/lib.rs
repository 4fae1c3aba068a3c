//! Hyperspectral phase imaging with a delay-line Fourier-transform
//! spectrometer and an iterative multi-wavelength phase retrieval solver.

pub mod cube;
pub mod denoise;
pub mod dispersion;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod phantom;
pub mod pipeline;
pub mod retrieval;
pub mod spectroscopy;

pub use cube::HyperCube;
pub use denoise::{DenoiserKind, DenoiserSpec, SigmaMode, SnsSpec};
pub use dispersion::DispersionModel;
pub use error::{Error, Result};
pub use optics::{ComplexField, PropagationGeometry, Propagator};
pub use phantom::{DepthMap, PhantomSpec};
pub use retrieval::{RetrievalResult, SolverConfig};
pub use spectroscopy::{DelayLineConfig, InterferogramStack, SpectralAmplitudeCube, WavelengthGrid};
