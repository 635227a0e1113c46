//! Synthetic complex-baseband IQ scenarios.
//!
//! Stands in for over-the-air captures of a private 5G-like band: a gNB
//! beacons periodically, a UE exchanges TDD data bursts, and a broadband
//! jammer floods the whole observed band with uniform or Gaussian noise.
//! Three labeled cases come out of this: empty channel (beacons only),
//! active channel (beacons + data bursts), and jammed.
//!
//! Everything is driven by explicit seeds; a frame is a pure function of
//! `(config, label, seed)`, which makes corpus generation reproducible
//! and trivially parallelizable.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

pub type C32 = Complex<f32>;

/// Noise shape emitted by the jammer (and selectable for floor noise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// I and Q i.i.d. uniform on [-a, a] with a = sqrt(3 p / 2).
    Uniform,
    /// Circularly symmetric complex normal.
    Gaussian,
}

/// Channel condition of one captured frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    /// gNB beacons only, no user traffic.
    #[serde(rename = "empty")]
    EmptyChannel,
    /// Beacons plus TDD data bursts.
    #[serde(rename = "active")]
    ActiveChannel,
    /// Full-band jammer active; only sparse residual beacons get through.
    Jammed,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::EmptyChannel, Label::ActiveChannel, Label::Jammed];

    /// Trusted = either of the two no-jamming cases.
    pub fn is_trusted(self) -> bool {
        !matches!(self, Label::Jammed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::EmptyChannel => "empty",
            Label::ActiveChannel => "active",
            Label::Jammed => "jammed",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empty" => Ok(Label::EmptyChannel),
            "active" => Ok(Label::ActiveChannel),
            "jammed" => Ok(Label::Jammed),
            other => Err(Error::Argument(format!("unknown label `{other}`"))),
        }
    }
}

/// Parameters of the simulated radio scene.
///
/// Powers are linear mean-square per complex sample. The defaults model a
/// 120 MHz watchdog capture: 102400 samples per frame (100 windows of
/// 1024), a beacon every 20480 samples, data bursts at 20 dB above the
/// noise floor and a jammer 10 dB above the data bursts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sampling_rate: f64,
    pub frame_len: usize,
    pub noise_floor_power: f64,
    /// Samples between the starts of consecutive beacon bursts.
    pub beacon_period: usize,
    pub beacon_len: usize,
    /// Fraction of TDD slots carrying a data burst, in [0, 1].
    pub burst_duty: f64,
    pub signal_power: f64,
    pub jammer_power: f64,
    pub jammer_kind: NoiseKind,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sampling_rate: 120e6,
            frame_len: 102_400,
            noise_floor_power: 1e-6,
            beacon_period: 20_480,
            beacon_len: 1024,
            burst_duty: 0.5,
            signal_power: 1e-4,
            jammer_power: 1e-3,
            jammer_kind: NoiseKind::Gaussian,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Desk-scale variant sized for 32x128 spectrograms (4096-sample
    /// frames, one beacon per 1024 samples). Signal power sits closer to
    /// the floor than at capture scale and the jammer 30 dB above it,
    /// which keeps the quarter-width models' reconstruction contrast
    /// comfortably detectable.
    pub fn desk() -> Self {
        ScenarioConfig {
            frame_len: 4096,
            beacon_period: 1024,
            beacon_len: 128,
            signal_power: 5e-6,
            jammer_power: 1e-2,
            ..ScenarioConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0) {
            return Err(Error::config("sampling_rate must be > 0"));
        }
        for (name, p) in [
            ("noise_floor_power", self.noise_floor_power),
            ("signal_power", self.signal_power),
            ("jammer_power", self.jammer_power),
        ] {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::config(format!("{name} must be > 0, got {p}")));
            }
        }
        if !(0.0..=1.0).contains(&self.burst_duty) {
            return Err(Error::config(format!(
                "burst_duty must be in [0,1], got {}",
                self.burst_duty
            )));
        }
        if self.beacon_len == 0 || self.beacon_len > self.beacon_period {
            return Err(Error::config(format!(
                "beacon_len {} must be in 1..=beacon_period {}",
                self.beacon_len, self.beacon_period
            )));
        }
        if self.frame_len < self.beacon_period {
            return Err(Error::config(format!(
                "frame_len {} too small for one beacon period {}",
                self.frame_len, self.beacon_period
            )));
        }
        Ok(())
    }
}

/// One labeled window of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IQFrame {
    pub samples: Vec<C32>,
    pub sampling_rate: f64,
    pub label: Label,
    pub seed: u64,
}

impl IQFrame {
    /// Sample mean of |x|^2, accumulated in double precision.
    pub fn mean_square(&self) -> f64 {
        mean_square(&self.samples)
    }
}

pub fn mean_square(samples: &[C32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples
        .iter()
        .map(|s| s.re as f64 * s.re as f64 + s.im as f64 * s.im as f64)
        .sum();
    sum / samples.len() as f64
}

/// i.i.d. complex noise with per-sample mean-square `power`.
pub fn synth_noise<R: Rng>(n: usize, power: f64, kind: NoiseKind, rng: &mut R) -> Vec<C32> {
    if power == 0.0 {
        return vec![C32::new(0.0, 0.0); n];
    }
    match kind {
        NoiseKind::Gaussian => {
            let sigma = (power / 2.0).sqrt();
            (0..n)
                .map(|_| {
                    let (z0, z1) = box_muller(rng);
                    C32::new((z0 * sigma) as f32, (z1 * sigma) as f32)
                })
                .collect()
        }
        NoiseKind::Uniform => {
            // Per-component variance a^2/3 = power/2.
            let a = (3.0 * power / 2.0).sqrt();
            (0..n)
                .map(|_| {
                    let i = rng.gen_range(-a..a);
                    let q = rng.gen_range(-a..a);
                    C32::new(i as f32, q as f32)
                })
                .collect()
        }
    }
}

/// One pair of independent standard normals.
fn box_muller<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = 2.0 * std::f64::consts::PI * u2;
    (r * th.cos(), r * th.sin())
}

/// Dense multicarrier burst: concatenated inverse-FFT blocks of random
/// QPSK symbols on every subcarrier, scaled to per-sample mean-square
/// `power`. Stand-in for a TDD payload; it fills the band like one.
pub fn synth_multicarrier_burst<R: Rng>(
    n_subcarriers: usize,
    burst_len: usize,
    power: f64,
    rng: &mut R,
) -> Result<Vec<C32>> {
    if n_subcarriers == 0 || !n_subcarriers.is_power_of_two() {
        return Err(Error::config(format!(
            "n_subcarriers must be a power of two, got {n_subcarriers}"
        )));
    }
    if burst_len < n_subcarriers {
        return Err(Error::config(format!(
            "burst_len {burst_len} must be >= n_subcarriers {n_subcarriers}"
        )));
    }
    if power == 0.0 {
        return Ok(vec![C32::new(0.0, 0.0); burst_len]);
    }

    // Unit-power QPSK symbols through a 1/n-normalized inverse FFT give
    // per-sample mean-square 1/n; rescale to the requested power.
    let scale = (power * n_subcarriers as f64).sqrt();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(burst_len);
    let mut block = vec![Complex::new(0.0, 0.0); n_subcarriers];
    while out.len() < burst_len {
        for sym in block.iter_mut() {
            let bits: u8 = rng.gen_range(0..4);
            let re = if bits & 1 == 0 { inv_sqrt2 } else { -inv_sqrt2 };
            let im = if bits & 2 == 0 { inv_sqrt2 } else { -inv_sqrt2 };
            *sym = Complex::new(re, im);
        }
        fft::ifft(&mut block)?;
        for v in &block {
            if out.len() == burst_len {
                break;
            }
            out.push(C32::new((v.re * scale) as f32, (v.im * scale) as f32));
        }
    }
    Ok(out)
}

fn add_burst(frame: &mut [C32], start: usize, burst: &[C32]) {
    for (dst, src) in frame[start..].iter_mut().zip(burst.iter()) {
        *dst += *src;
    }
}

/// Largest power of two <= n, capped at 1024 subcarriers.
fn subcarriers_for(burst_len: usize) -> usize {
    let cap = burst_len.min(1024);
    1 << (usize::BITS - 1 - cap.leading_zeros())
}

/// Generate one labeled frame. Pure in `(cfg, label, seed)`.
pub fn gen_frame(cfg: &ScenarioConfig, label: Label, seed: u64) -> Result<IQFrame> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.frame_len;

    // Thermal floor is always Gaussian; the jammer kind only selects the
    // jammer's waveform.
    let mut samples = synth_noise(n, cfg.noise_floor_power, NoiseKind::Gaussian, &mut rng);

    if label == Label::Jammed {
        let jam = synth_noise(n, cfg.jammer_power, cfg.jammer_kind, &mut rng);
        add_burst(&mut samples, 0, &jam);
    }

    // Beacons at every beacon_period; under jamming only a sparse
    // residual of them survives (the gNB keeps trying, nothing gets
    // through).
    let n_sc = subcarriers_for(cfg.beacon_len);
    let mut pos = 0;
    while pos + cfg.beacon_len <= n {
        let keep = match label {
            Label::Jammed => rng.gen::<f64>() < 0.25,
            _ => true,
        };
        if keep {
            let beacon = synth_multicarrier_burst(n_sc, cfg.beacon_len, cfg.signal_power, &mut rng)?;
            add_burst(&mut samples, pos, &beacon);
        }
        pos += cfg.beacon_period;
    }

    if label == Label::ActiveChannel {
        // TDD slots the length of one beacon burst. A random subset of
        // exactly round(duty * n_slots) slots carries data, so every
        // active frame honors the configured duty cycle.
        let slot_len = cfg.beacon_len;
        let n_slots = n / slot_len;
        let k = (cfg.burst_duty * n_slots as f64).round() as usize;
        let mut slots: Vec<usize> = (0..n_slots).collect();
        slots.shuffle(&mut rng);
        slots.truncate(k);
        slots.sort_unstable();
        for &s in &slots {
            let burst = synth_multicarrier_burst(n_sc, slot_len, cfg.signal_power, &mut rng)?;
            add_burst(&mut samples, s * slot_len, &burst);
        }
    }

    Ok(IQFrame {
        samples,
        sampling_rate: cfg.sampling_rate,
        label,
        seed,
    })
}

/// Requested frame counts per label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub empty: usize,
    pub active: usize,
    pub jammed: usize,
}

impl LabelCounts {
    pub fn new(empty: usize, active: usize, jammed: usize) -> Self {
        LabelCounts {
            empty,
            active,
            jammed,
        }
    }

    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::EmptyChannel => self.empty,
            Label::ActiveChannel => self.active,
            Label::Jammed => self.jammed,
        }
    }

    pub fn total(&self) -> usize {
        self.empty + self.active + self.jammed
    }

    /// Trusted-only split used to train the autoencoder.
    pub fn trusted(per_label: usize) -> Self {
        LabelCounts::new(per_label, per_label, 0)
    }

    /// Equal three-way split used by the supervised recipe.
    pub fn balanced(per_label: usize) -> Self {
        LabelCounts::new(per_label, per_label, per_label)
    }
}

/// Per-frame provenance recorded in the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub index: usize,
    pub label: Label,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: ScenarioConfig,
    pub base_seed: u64,
    pub counts: LabelCounts,
    pub frames: Vec<FrameMeta>,
}

/// Generate a labeled corpus with per-frame seeds derived from
/// `(seed, index)`, so any frame can be regenerated in isolation.
pub fn gen_corpus(
    cfg: &ScenarioConfig,
    counts: LabelCounts,
    seed: u64,
) -> Result<(Vec<IQFrame>, CorpusManifest)> {
    cfg.validate()?;
    let mut frames = Vec::with_capacity(counts.total());
    let mut metas = Vec::with_capacity(counts.total());
    let mut index = 0usize;
    for label in Label::ALL {
        for _ in 0..counts.get(label) {
            let fseed = frame_seed(seed, index);
            frames.push(gen_frame(cfg, label, fseed)?);
            metas.push(FrameMeta {
                index,
                label,
                seed: fseed,
            });
            index += 1;
        }
    }
    let manifest = CorpusManifest {
        config: cfg.clone(),
        base_seed: seed,
        counts,
        frames: metas,
    };
    Ok((frames, manifest))
}

/// splitmix64 step; decorrelates per-frame seeds from a base seed.
pub fn frame_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_power_noise_is_exactly_zero() {
        let v = synth_noise(8, 0.0, NoiseKind::Gaussian, &mut rng(1));
        assert_eq!(v, vec![C32::new(0.0, 0.0); 8]);
    }

    #[test]
    fn gaussian_noise_power_matches_request() {
        let v = synth_noise(1_000_000, 2.0, NoiseKind::Gaussian, &mut rng(2));
        let ms = mean_square(&v);
        assert!((1.99..=2.01).contains(&ms), "mean square {ms}");
    }

    #[test]
    fn uniform_noise_power_and_support() {
        let v = synth_noise(1_000_000, 2.0, NoiseKind::Uniform, &mut rng(3));
        let ms = mean_square(&v);
        assert!((1.99..=2.01).contains(&ms), "mean square {ms}");
        // a = sqrt(3 * 2 / 2) = sqrt(3)
        let a = 3.0f32.sqrt();
        let max_i = v.iter().map(|s| s.re.abs().max(s.im.abs())).fold(0.0, f32::max);
        assert!(max_i <= a, "components must stay within [-sqrt(3), sqrt(3)]");
    }

    #[test]
    fn burst_zero_power_is_zero() {
        let v = synth_multicarrier_burst(64, 640, 0.0, &mut rng(4)).unwrap();
        assert!(v.iter().all(|s| s.re == 0.0 && s.im == 0.0));
        assert_eq!(v.len(), 640);
    }

    #[test]
    fn burst_power_and_length() {
        let v = synth_multicarrier_burst(64, 640, 1.0, &mut rng(5)).unwrap();
        assert_eq!(v.len(), 640);
        let ms = mean_square(&v);
        assert!((0.9..=1.1).contains(&ms), "mean square {ms}");
    }

    #[test]
    fn burst_rejects_bad_sizes() {
        assert!(synth_multicarrier_burst(63, 640, 1.0, &mut rng(6)).is_err());
        assert!(synth_multicarrier_burst(64, 32, 1.0, &mut rng(6)).is_err());
    }

    #[test]
    fn frame_is_deterministic_in_seed() {
        let cfg = ScenarioConfig::desk();
        let a = gen_frame(&cfg, Label::ActiveChannel, 42).unwrap();
        let b = gen_frame(&cfg, Label::ActiveChannel, 42).unwrap();
        assert_eq!(a, b);
        let c = gen_frame(&cfg, Label::ActiveChannel, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn power_ordering_with_3db_gaps() {
        let cfg = ScenarioConfig::default();
        let empty = gen_frame(&cfg, Label::EmptyChannel, 7).unwrap().mean_square();
        let active = gen_frame(&cfg, Label::ActiveChannel, 7).unwrap().mean_square();
        let jammed = gen_frame(&cfg, Label::Jammed, 7).unwrap().mean_square();
        assert!(active >= 2.0 * empty, "active {active} vs empty {empty}");
        assert!(jammed >= 2.0 * active, "jammed {jammed} vs active {active}");
    }

    #[test]
    fn jammed_power_close_to_floor_plus_jammer() {
        let cfg = ScenarioConfig::default();
        let ms = gen_frame(&cfg, Label::Jammed, 11).unwrap().mean_square();
        let nominal = cfg.noise_floor_power + cfg.jammer_power;
        assert!(
            (ms - nominal).abs() / nominal < 0.05,
            "mean square {ms} vs nominal {nominal}"
        );
    }

    #[test]
    fn frame_too_small_for_beacon_period_errors() {
        let cfg = ScenarioConfig {
            frame_len: 1000,
            beacon_period: 20_480,
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            gen_frame(&cfg, Label::EmptyChannel, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let cfg = ScenarioConfig::desk();
        let counts = LabelCounts::new(2, 2, 0);
        let (frames, manifest) = gen_corpus(&cfg, counts, 9).unwrap();
        assert_eq!(frames.len(), 4);
        assert_eq!(manifest.frames.len(), 4);
        let labels: Vec<Label> = frames.iter().map(|f| f.label).collect();
        assert_eq!(
            labels,
            vec![
                Label::EmptyChannel,
                Label::EmptyChannel,
                Label::ActiveChannel,
                Label::ActiveChannel
            ]
        );
        let (frames2, manifest2) = gen_corpus(&cfg, counts, 9).unwrap();
        assert_eq!(frames, frames2);
        assert_eq!(manifest, manifest2);
    }

    #[test]
    fn all_samples_finite() {
        let cfg = ScenarioConfig::desk();
        for label in Label::ALL {
            let f = gen_frame(&cfg, label, 3).unwrap();
            assert_eq!(f.samples.len(), cfg.frame_len);
            assert!(f.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        }
    }
}
