//! Mono-to-binaural audio generation at desk scale.
//!
//! The crate is organized around six pieces:
//!
//! - [`dsp`]: channel algebra, STFT analysis/synthesis, magnitude/phase
//!   decomposition and the Hilbert envelope.
//! - [`scene`]: a physical binaural renderer (delay + distance attenuation)
//!   and a deterministic synthetic dataset factory.
//! - [`metrics`]: the five evaluation distances plus the Mono-Mono baseline.
//! - [`autodiff`]: a minimal dense-tensor library with a reverse-mode tape
//!   and a finite-difference gradient checker.
//! - [`model`]: the binauralization network — audio encoder, image/depth
//!   encoders, hierarchical cross-modal attention, three decoder heads and
//!   the four-term loss.
//! - [`train`] / [`checkpoint`] / [`runconfig`]: optimizer, training loop,
//!   evaluation runner and persistence.

pub mod autodiff;
pub mod checkpoint;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod netpbm;
pub mod runconfig;
pub mod scene;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
