//! Single-shot polarized hyperspectral imaging through a scattering fiber
//! bundle: speckle simulation, transmission-matrix calibration, spectral
//! recovery, per-channel deconvolution and evaluation.

// `!(x >= 0.0)` style checks are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod config;
pub mod emulate;
pub mod error;
pub mod fft;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod recover;
pub mod scenario;
pub mod shapes;
pub mod simulate;
pub mod tensor;
pub mod types;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use types::{
    column_to_image, image_to_column, CalibSourceMatrix, ColumnAxis, HyperCube, Image2D,
    SpectralGrid, Spectrum, TmSidecar, TransmissionMatrix,
};
