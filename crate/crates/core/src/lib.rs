//! Watchdog toolkit for detecting broadband jamming of a 5G-like radio band.
//!
//! The pipeline turns complex-baseband IQ captures into log-domain
//! spectrograms and classifies them either with an unsupervised
//! convolutional autoencoder (reconstruction-error test) or a supervised
//! convolutional classifier. Everything is seeded and deterministic so
//! experiments reproduce bit-for-bit.
//!
//! Modules, in pipeline order:
//!
//! - [`iqsim`] — synthetic IQ scenario generator (empty / active / jammed).
//! - [`spectrogram`] — windowed FFT, PSD stacking and the `-ln(x + eps)`
//!   transform that produces model inputs.
//! - [`nn`] — minimal neural-network engine (conv, pooling, transposed
//!   conv, dense, Adam, losses, finite-difference gradient checks).
//! - [`models`] — the CAE and CNN architectures plus desk-scale variants.
//! - [`detector`] — training with early stopping, the threshold test, and
//!   false-alarm / misdetection sweeps.
//! - [`bench`] — end-to-end per-sample classification latency.
//! - [`io`] — on-disk formats (IQ frames, spectrogram datasets, model
//!   checkpoints) and CSV writers.

pub mod bench;
pub mod detector;
pub mod error;
pub mod fft;
pub mod io;
pub mod iqsim;
pub mod models;
pub mod nn;
pub mod spectrogram;

pub use error::{Error, Result};
