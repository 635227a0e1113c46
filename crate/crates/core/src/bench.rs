//! End-to-end classification latency.
//!
//! One trial times the four per-sample steps back to back: copying the
//! IQ slice into working memory, building the neg-log spectrogram,
//! running the model, and comparing the score to the threshold. Timing
//! is single-threaded on a monotonic clock; the first trials warm caches
//! and are excluded from the percentiles.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detector::{decide, score};
use crate::error::{Error, Result};
use crate::iqsim::IQFrame;
use crate::models::ModelKind;
use crate::nn::Network;
use crate::spectrogram::{build_spectrogram, neg_log};

/// Trials excluded from percentile computation.
pub const WARMUP_TRIALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub trial: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub model_kind: ModelKind,
    /// All trials in order, warmup included.
    pub samples: Vec<LatencySample>,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl LatencyReport {
    pub fn measured(&self) -> &[LatencySample] {
        &self.samples[WARMUP_TRIALS.min(self.samples.len())..]
    }

    pub fn warmup(&self) -> &[LatencySample] {
        &self.samples[..WARMUP_TRIALS.min(self.samples.len())]
    }

    /// Empirical CDF over the measured trials: ascending (elapsed_ms,
    /// k/n) pairs ending at 1.0.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let mut sorted: Vec<f64> = self.measured().iter().map(|s| s.elapsed_ms).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        sorted
            .into_iter()
            .enumerate()
            .map(|(k, v)| (v, (k + 1) as f64 / n))
            .collect()
    }
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Time `trials` end-to-end classifications. `source` supplies the frame
/// for each trial (generation is not part of the measured pipeline).
#[allow(clippy::too_many_arguments)]
pub fn time_pipeline(
    net: &Network,
    kind: ModelKind,
    mut source: impl FnMut(usize) -> Result<IQFrame>,
    trials: usize,
    window: usize,
    rows: usize,
    epsilon: f64,
    tau: f64,
) -> Result<LatencyReport> {
    if trials <= WARMUP_TRIALS {
        return Err(Error::Argument(format!(
            "need more than {WARMUP_TRIALS} trials, got {trials}"
        )));
    }
    let needed = window * rows;
    let mut samples = Vec::with_capacity(trials);
    for trial in 0..trials {
        let frame = source(trial).map_err(|e| {
            Error::Argument(format!(
                "iq source failed after {trial} of {trials} completed trials: {e}"
            ))
        })?;
        if frame.samples.len() < needed {
            return Err(Error::Length {
                required: needed,
                actual: frame.samples.len(),
            });
        }

        let start = Instant::now();
        // 1. Load the slice of data into working memory.
        let slice = IQFrame {
            samples: frame.samples[..needed].to_vec(),
            sampling_rate: frame.sampling_rate,
            label: frame.label,
            seed: frame.seed,
        };
        // 2. PSD stacking and the log transform.
        let spec = neg_log(&build_spectrogram(&slice, window, rows)?, epsilon)?;
        // 3. Model output.
        let s = score(net, kind, &spec)?;
        // 4. Threshold comparison.
        let verdict = decide(s, tau);
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(verdict);

        samples.push(LatencySample {
            trial,
            elapsed_ms: elapsed,
        });
    }

    let mut measured: Vec<f64> = samples[WARMUP_TRIALS..].iter().map(|s| s.elapsed_ms).collect();
    measured.sort_by(f64::total_cmp);
    Ok(LatencyReport {
        model_kind: kind,
        p50: percentile(&measured, 0.50),
        p95: percentile(&measured, 0.95),
        p99: percentile(&measured, 0.99),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqsim::{gen_frame, Label, ScenarioConfig};
    use crate::models::{build_scaled, ModelKind};

    #[test]
    fn report_counts_and_cdf_shape() {
        let cfg = ScenarioConfig::desk();
        let net = build_scaled(ModelKind::Cnn, 32, 128, 0).unwrap();
        let frame = gen_frame(&cfg, Label::EmptyChannel, 1).unwrap();
        let report = time_pipeline(
            &net,
            ModelKind::Cnn,
            |_| Ok(frame.clone()),
            25,
            128,
            32,
            1e-21,
            0.5,
        )
        .unwrap();
        assert_eq!(report.samples.len(), 25);
        assert_eq!(report.measured().len(), 15);
        assert_eq!(report.warmup().len(), 10);
        let cdf = report.cdf();
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert!(report.samples.iter().all(|s| s.elapsed_ms > 0.0));
        assert!(report.p50 <= report.p95 && report.p95 <= report.p99);
    }

    #[test]
    fn source_failure_reports_completed_trials() {
        let cfg = ScenarioConfig::desk();
        let net = build_scaled(ModelKind::Cnn, 32, 128, 0).unwrap();
        let frame = gen_frame(&cfg, Label::EmptyChannel, 1).unwrap();
        let err = time_pipeline(
            &net,
            ModelKind::Cnn,
            |t| {
                if t < 12 {
                    Ok(frame.clone())
                } else {
                    Err(Error::Argument("out of frames".into()))
                }
            },
            100,
            128,
            32,
            1e-21,
            0.5,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("12 of 100"), "{msg}");
    }

    #[test]
    fn too_few_trials_rejected() {
        let net = build_scaled(ModelKind::Cnn, 32, 128, 0).unwrap();
        let err = time_pipeline(
            &net,
            ModelKind::Cnn,
            |_| unreachable!(),
            5,
            128,
            32,
            1e-21,
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
