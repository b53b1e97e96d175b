//! Fourier ptychographic microscopy toolkit: LED-array forward model,
//! unrolled gradient-descent phase retrieval, and learned multiplexed
//! illumination designs trained by differentiating through the solver.

pub mod config;
pub mod design;
pub mod error;
pub mod fft;
pub mod field;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod phantom;
pub mod pipeline;
pub mod recon;
pub mod train;

pub use config::{Config, Context, ReconConfig, SystemConfig, TrainConfig};
pub use design::DesignMatrix;
pub use error::{FpmError, Result};
pub use field::ComplexField;
pub use optics::{build_led_geometry, ForwardModel, Led, LedGeometry, MeasurementStack, Pupil, Region};
pub use recon::{reconstruct, ReconTrace};
