//! Compressive k-t video sensing with linear dynamical systems.
//!
//! The reconstruction pipeline estimates a low-dimensional state sequence
//! from a fixed set of k-space samples shared by all frames, then recovers
//! the observation matrix from every sample by ADMM on a joint-sparsity plus
//! wavelet-sparsity objective. The video estimate is `Ŷ = Ĉ X̂`.
//!
//! The numerical modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases. The experiment
//! pipeline and the file formats work in `f64`.

pub mod admm;
pub mod domain;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod sampling;
pub mod scalar;
pub mod sysid;
pub mod transforms;

pub use domain::{
    mat_frame, reconstruction_snr, vec_frame, FrameGeometry, LdsModel, ObservationMatrix, Snr,
    StateSequence, Video,
};
pub use error::{Error, Result};
pub use sampling::{DensityKind, KTMeasurements, SamplingPattern};
pub use scalar::Real;

pub type Video64 = Video<f64>;
pub type Video32 = Video<f32>;
pub type StateSequence64 = StateSequence<f64>;
pub type ObservationMatrix64 = ObservationMatrix<f64>;
pub type KTMeasurements64 = KTMeasurements<f64>;
pub type KTMeasurements32 = KTMeasurements<f32>;
pub type FourierOp64 = transforms::FourierOp<f64>;
pub type WaveletOp64 = transforms::WaveletOp<f64>;
