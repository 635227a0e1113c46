//! Windowed PSD stacking and the log-domain transform.
//!
//! A frame of IQ samples is cut into contiguous, non-overlapping windows
//! of `n` samples. Each window goes through an FFT (rectangular window,
//! no taper, no averaging), the modulus square of every bin is scaled by
//! `1 / (n * sampling_rate)` and the result is centered at 0 Hz. Stacking
//! `rows` such PSD arrays gives the spectrogram matrix the models consume,
//! after mapping every entry through `-ln(x + eps)` so the tiny linear
//! powers become well-scaled features.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::iqsim::{IQFrame, Label, C32};

/// FFT window length used throughout the paper-scale pipeline.
pub const DEFAULT_WINDOW: usize = 1024;
/// PSD rows stacked per spectrogram.
pub const DEFAULT_ROWS: usize = 100;
/// Regularizer inside the log; keeps zero-power bins finite.
pub const DEFAULT_EPSILON: f64 = 1e-21;

/// Upper bound of the transformed domain: -ln(eps) for x = 0.
pub fn neg_log_ceiling(epsilon: f64) -> f64 {
    -(epsilon.ln())
}

/// One power spectral density array, linear scale, 0 Hz at index n/2.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdArray {
    pub values: Vec<f64>,
}

impl PsdArray {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Value domain of a spectrogram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Raw PSD values, all >= 0.
    Linear,
    /// After f(x) = -ln(x + eps); bounded above by -ln(eps).
    NegLog,
}

/// rows x cols real matrix of (possibly log-transformed) PSD values.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Row-major storage, rows * cols entries.
    pub data: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
    pub domain: Domain,
    pub label: Option<Label>,
}

impl Spectrogram {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Spectrogram {
            data: vec![0.0; rows * cols],
            rows,
            cols,
            domain: Domain::Linear,
            label: None,
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// PSD of one window: fftshift(|FFT(y)|^2 / (n * sampling_rate)).
///
/// Rectangular window, accumulation in double precision.
pub fn compute_psd(window: &[C32], sampling_rate: f64) -> Result<PsdArray> {
    let n = window.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::config(format!(
            "psd window length must be a power of two, got {n}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = window
        .iter()
        .map(|s| Complex::new(s.re as f64, s.im as f64))
        .collect();
    fft::fft(&mut buf)?;
    let scale = 1.0 / (n as f64 * sampling_rate);
    let mut values: Vec<f64> = buf.iter().map(|v| v.norm_sqr() * scale).collect();
    fft::fftshift(&mut values);
    Ok(PsdArray { values })
}

/// Stack `rows` contiguous window PSDs of a frame into a linear-domain
/// spectrogram. Row i covers samples [i*n, (i+1)*n); excess samples are
/// ignored.
pub fn build_spectrogram(frame: &IQFrame, n: usize, rows: usize) -> Result<Spectrogram> {
    let required = n * rows;
    if frame.samples.len() < required {
        return Err(Error::Length {
            required,
            actual: frame.samples.len(),
        });
    }
    let mut data = Vec::with_capacity(required);
    for i in 0..rows {
        let psd = compute_psd(&frame.samples[i * n..(i + 1) * n], frame.sampling_rate)?;
        data.extend(psd.values.iter().map(|&v| v as f32));
    }
    Ok(Spectrogram {
        data,
        rows,
        cols: n,
        domain: Domain::Linear,
        label: Some(frame.label),
    })
}

/// Elementwise f(x) = -ln(x + eps), taking the matrix into the NegLog
/// domain the models are trained on.
pub fn neg_log(s: &Spectrogram, epsilon: f64) -> Result<Spectrogram> {
    if s.domain != Domain::Linear {
        return Err(Error::State(
            "neg_log expects a linear-domain spectrogram".into(),
        ));
    }
    let data = s
        .data
        .iter()
        .map(|&x| (-(x as f64 + epsilon).ln()) as f32)
        .collect();
    Ok(Spectrogram {
        data,
        rows: s.rows,
        cols: s.cols,
        domain: Domain::NegLog,
        label: s.label,
    })
}
