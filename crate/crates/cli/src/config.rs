//! Experiment configuration: TOML file + flag overrides over presets.
//!
//! `[model] kind/scale` select a preset (capture-scale or desk-scale
//! scenario, spectrogram geometry, splits, training hyperparameters);
//! any field given in the file then overrides its preset value. The
//! resolved configuration is hashed and echoed into every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use jamwatch_core::detector::{SplitSpec, TrainConfig};
use jamwatch_core::error::{Error, Result};
use jamwatch_core::iqsim::{LabelCounts, NoiseKind, ScenarioConfig};
use jamwatch_core::models::ModelKind;
use jamwatch_core::spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Capture-scale geometry: 100 x 1024 spectrograms, full-width models.
    Full,
    /// 32 x 128 spectrograms and quarter-width models for CPU runs.
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Argument(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub window: usize,
    pub rows: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model_kind: ModelKind,
    pub scale: Scale,
    pub scenario: ScenarioConfig,
    pub spectrogram: SpectrogramConfig,
    pub splits: SplitSpec,
    pub training: TrainConfig,
}

impl ExperimentConfig {
    /// Preset for a model kind and scale; the desk training settings are
    /// the ones that converge comfortably inside a CPU budget.
    pub fn preset(kind: ModelKind, scale: Scale) -> Self {
        let desk = scale == Scale::Desk;
        let scenario = match scale {
            Scale::Full => ScenarioConfig::default(),
            Scale::Desk => ScenarioConfig::desk(),
        };
        let spectrogram = match scale {
            Scale::Full => SpectrogramConfig {
                window: spectrogram::DEFAULT_WINDOW,
                rows: spectrogram::DEFAULT_ROWS,
                epsilon: spectrogram::DEFAULT_EPSILON,
            },
            Scale::Desk => SpectrogramConfig {
                window: 128,
                rows: 32,
                epsilon: spectrogram::DEFAULT_EPSILON,
            },
        };
        let training = match (kind, scale) {
            (ModelKind::Cae, Scale::Desk) => TrainConfig {
                max_epochs: 300,
                lr: 1e-2,
                batch_size: 8,
                ..TrainConfig::default()
            },
            (ModelKind::Cnn, Scale::Desk) => TrainConfig {
                max_epochs: 300,
                lr: 1e-3,
                batch_size: 16,
                ..TrainConfig::default()
            },
            _ => TrainConfig::default(),
        };
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/exp"),
            model_kind: kind,
            scale,
            scenario,
            spectrogram,
            splits: SplitSpec::for_kind(kind, desk),
            training,
        }
    }

    /// sha256 over the canonical JSON encoding, with the output location
    /// blanked so the hash identifies the experiment, not its directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hex(&hasher.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !self.spectrogram.window.is_power_of_two() {
            return Err(Error::config(format!(
                "spectrogram.window must be a power of two, got {}",
                self.spectrogram.window
            )));
        }
        let needed = self.spectrogram.window * self.spectrogram.rows;
        if self.scenario.frame_len < needed {
            return Err(Error::config(format!(
                "scenario.frame_len {} cannot fill a {}x{} spectrogram (needs {needed})",
                self.scenario.frame_len, self.spectrogram.rows, self.spectrogram.window
            )));
        }
        if self.training.patience == 0 {
            return Err(Error::config("training.patience must be >= 1"));
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// Optional-field mirror of the config file; anything absent keeps its
// preset value.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    model: Option<RawModel>,
    scenario: Option<RawScenario>,
    spectrogram: Option<RawSpectrogram>,
    splits: Option<RawSplits>,
    training: Option<RawTraining>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<ModelKind>,
    scale: Option<Scale>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    sampling_rate: Option<f64>,
    frame_len: Option<usize>,
    noise_floor_power: Option<f64>,
    beacon_period: Option<usize>,
    beacon_len: Option<usize>,
    burst_duty: Option<f64>,
    signal_power: Option<f64>,
    jammer_power: Option<f64>,
    jammer_kind: Option<NoiseKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrogram {
    window: Option<usize>,
    rows: Option<usize>,
    epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplits {
    train: Option<LabelCounts>,
    val: Option<LabelCounts>,
    test: Option<LabelCounts>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    max_epochs: Option<usize>,
    patience: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
}

macro_rules! merge {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

/// Load a config file (if any) over the presets, then apply CLI-level
/// overrides for model kind, scale, seed and output directory.
pub fn resolve(
    path: Option<&Path>,
    kind_flag: Option<ModelKind>,
    scale_flag: Option<Scale>,
    seed_flag: Option<u64>,
    out_flag: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let raw: RawConfig = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::config(format!("config: {e}")))?
        }
        None => RawConfig::default(),
    };

    let raw_model = raw.model.unwrap_or_default();
    let kind = kind_flag
        .or(raw_model.kind)
        .unwrap_or(ModelKind::Cae);
    let scale = scale_flag.or(raw_model.scale).unwrap_or(Scale::Full);

    let mut cfg = ExperimentConfig::preset(kind, scale);

    if let Some(s) = raw.scenario {
        merge!(
            cfg.scenario,
            s,
            sampling_rate,
            frame_len,
            noise_floor_power,
            beacon_period,
            beacon_len,
            burst_duty,
            signal_power,
            jammer_power,
            jammer_kind
        );
    }
    if let Some(s) = raw.spectrogram {
        merge!(cfg.spectrogram, s, window, rows, epsilon);
    }
    if let Some(s) = raw.splits {
        merge!(cfg.splits, s, train, val, test);
    }
    if let Some(t) = raw.training {
        merge!(cfg.training, t, max_epochs, patience, lr, batch_size);
    }
    if let Some(seed) = raw.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = raw.out_dir {
        cfg.out_dir = dir;
    }

    // Env override for the output directory only, then the flag on top.
    if let Ok(dir) = std::env::var("JAMWATCH_OUT") {
        cfg.out_dir = PathBuf::from(dir);
    }
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    if let Some(dir) = out_flag {
        cfg.out_dir = dir;
    }

    cfg.training.seed = cfg.seed;
    cfg.scenario.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}
