//! On-disk formats and report writers.
//!
//! Three binary artifacts, all little-endian f32 payloads behind a JSON
//! header so files are self-describing:
//!
//! - IQ frames: raw interleaved I,Q pairs (`.iq`) with a JSON sidecar, or
//!   one concatenated file indexed by the corpus manifest.
//! - Spectrogram datasets: `SGD1` magic, JSON manifest, then row-major
//!   matrices in manifest order. Round-trips are bit-identical.
//! - Model checkpoints: `NNC1` magic, JSON descriptor, then every
//!   parameter tensor in layer order (weights then bias).
//!
//! CSV writers use Rust's shortest-roundtrip float formatting, so output
//! bytes are a pure function of the values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::LatencyReport;
use crate::detector::{SweepCurve, TrainReport};
use crate::error::{Error, Result};
use crate::iqsim::{CorpusManifest, IQFrame, Label, ScenarioConfig, C32};
use crate::models::ModelDescriptor;
use crate::nn::Network;
use crate::spectrogram::{Domain, Spectrogram};

const DATASET_MAGIC: &[u8; 4] = b"SGD1";
const CHECKPOINT_MAGIC: &[u8; 4] = b"NNC1";
pub const FORMAT_VERSION: u32 = 1;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))
}

// ---------------------------------------------------------------- IQ files

/// Sidecar manifest for a single IQ frame file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub sampling_rate: f64,
    pub frame_len: usize,
    pub label: Label,
    pub seed: u64,
    pub config: ScenarioConfig,
}

fn write_samples<W: Write>(w: &mut W, samples: &[C32]) -> Result<()> {
    for s in samples {
        w.write_all(&s.re.to_le_bytes())?;
        w.write_all(&s.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_samples(bytes: &[u8]) -> Result<Vec<C32>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "iq payload of {} bytes is not a whole number of complex samples",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            C32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect())
}

/// Write one frame as `<stem>.iq` plus `<stem>.json`.
pub fn write_iq_frame(stem: &Path, frame: &IQFrame, cfg: &ScenarioConfig) -> Result<()> {
    let mut w = BufWriter::new(File::create(stem.with_extension("iq"))?);
    write_samples(&mut w, &frame.samples)?;
    w.flush()?;
    let manifest = FrameManifest {
        sampling_rate: frame.sampling_rate,
        frame_len: frame.samples.len(),
        label: frame.label,
        seed: frame.seed,
        config: cfg.clone(),
    };
    write_json(&stem.with_extension("json"), &manifest)
}

pub fn read_iq_frame(stem: &Path) -> Result<(IQFrame, FrameManifest)> {
    let manifest: FrameManifest = read_json(&stem.with_extension("json"))?;
    let bytes = read_bytes(&stem.with_extension("iq"))?;
    let samples = read_samples(&bytes)?;
    if samples.len() != manifest.frame_len {
        return Err(Error::Format(format!(
            "frame {} has {} samples, manifest says {}",
            stem.display(),
            samples.len(),
            manifest.frame_len
        )));
    }
    Ok((
        IQFrame {
            samples,
            sampling_rate: manifest.sampling_rate,
            label: manifest.label,
            seed: manifest.seed,
        },
        manifest,
    ))
}

/// How a corpus is laid out on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusLayout {
    /// One `frame_NNNNN.iq` + sidecar per frame.
    PerFrame,
    /// A single `corpus.iq` with frames back to back.
    Concatenated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub layout: CorpusLayout,
    pub manifest: CorpusManifest,
    pub config_hash: Option<String>,
}

fn frame_stem(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:05}"))
}

/// Write a whole corpus under `dir` in the chosen layout, with
/// `corpus.json` as the index.
pub fn write_iq_corpus(
    dir: &Path,
    frames: &[IQFrame],
    manifest: &CorpusManifest,
    layout: CorpusLayout,
    config_hash: Option<String>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    match layout {
        CorpusLayout::PerFrame => {
            for (i, frame) in frames.iter().enumerate() {
                write_iq_frame(&frame_stem(dir, i), frame, &manifest.config)?;
            }
        }
        CorpusLayout::Concatenated => {
            let mut w = BufWriter::new(File::create(dir.join("corpus.iq"))?);
            for frame in frames {
                write_samples(&mut w, &frame.samples)?;
            }
            w.flush()?;
        }
    }
    let index = CorpusIndex {
        layout,
        manifest: manifest.clone(),
        config_hash,
    };
    write_json(&dir.join("corpus.json"), &index)
}

/// Read a corpus written by `write_iq_corpus`.
pub fn read_iq_corpus(dir: &Path) -> Result<(Vec<IQFrame>, CorpusIndex)> {
    let index: CorpusIndex = read_json(&dir.join("corpus.json"))?;
    let cfg = &index.manifest.config;
    let mut frames = Vec::with_capacity(index.manifest.frames.len());
    match index.layout {
        CorpusLayout::PerFrame => {
            for meta in &index.manifest.frames {
                let (frame, _) = read_iq_frame(&frame_stem(dir, meta.index))?;
                frames.push(frame);
            }
        }
        CorpusLayout::Concatenated => {
            let bytes = read_bytes(&dir.join("corpus.iq"))?;
            let want = index.manifest.frames.len() * cfg.frame_len * 8;
            if bytes.len() != want {
                return Err(Error::Format(format!(
                    "corpus.iq has {} bytes, index implies {want}",
                    bytes.len()
                )));
            }
            for meta in &index.manifest.frames {
                let start = meta.index * cfg.frame_len * 8;
                let samples = read_samples(&bytes[start..start + cfg.frame_len * 8])?;
                frames.push(IQFrame {
                    samples,
                    sampling_rate: cfg.sampling_rate,
                    label: meta.label,
                    seed: meta.seed,
                });
            }
        }
    }
    Ok((frames, index))
}

// ------------------------------------------------------ spectrogram files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub domain: Domain,
    pub labels: Vec<Option<Label>>,
    pub config_hash: Option<String>,
}

/// Write spectrograms into one dataset file. All matrices must share
/// shape and domain; an empty list writes a valid count-0 dataset.
pub fn write_dataset(
    path: &Path,
    specs: &[Spectrogram],
    config_hash: Option<String>,
) -> Result<DatasetManifest> {
    let (rows, cols, domain) = match specs.first() {
        Some(s) => (s.rows, s.cols, s.domain),
        None => (0, 0, Domain::Linear),
    };
    for (i, s) in specs.iter().enumerate() {
        if s.rows != rows || s.cols != cols || s.domain != domain {
            return Err(Error::Argument(format!(
                "spectrogram {i} is {}x{} {:?}, dataset is {rows}x{cols} {domain:?}",
                s.rows, s.cols, s.domain
            )));
        }
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        count: specs.len(),
        rows,
        cols,
        domain,
        labels: specs.iter().map(|s| s.label).collect(),
        config_hash,
    };
    let header = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for s in specs {
        for v in &s.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(manifest)
}

/// Read a dataset file back into spectrograms.
pub fn read_dataset(path: &Path) -> Result<(Vec<Spectrogram>, DatasetManifest)> {
    let mut r = BufReader::new(open(path)?);
    let manifest: DatasetManifest = read_header(&mut r, DATASET_MAGIC, "dataset")?;
    if manifest.labels.len() != manifest.count {
        return Err(Error::Format(format!(
            "dataset manifest lists {} labels for {} matrices",
            manifest.labels.len(),
            manifest.count
        )));
    }
    let per = manifest.rows * manifest.cols;
    let mut specs = Vec::with_capacity(manifest.count);
    let mut buf = vec![0u8; per * 4];
    for i in 0..manifest.count {
        r.read_exact(&mut buf).map_err(|_| {
            Error::Format(format!(
                "dataset truncated at matrix {i} of {}",
                manifest.count
            ))
        })?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        specs.push(Spectrogram {
            data,
            rows: manifest.rows,
            cols: manifest.cols,
            domain: manifest.domain,
            label: manifest.labels[i],
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("dataset has trailing bytes".into()));
    }
    Ok((specs, manifest))
}

// ----------------------------------------------------------- checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub descriptor: ModelDescriptor,
    pub config_hash: Option<String>,
}

/// Save architecture + parameters. Parameters are rounded to f32.
pub fn save_checkpoint(
    path: &Path,
    net: &Network,
    descriptor: &ModelDescriptor,
    config_hash: Option<String>,
) -> Result<()> {
    if net.param_count() != descriptor.expected_param_total {
        return Err(Error::Argument(format!(
            "network has {} parameters, descriptor expects {}",
            net.param_count(),
            descriptor.expected_param_total
        )));
    }
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        descriptor: descriptor.clone(),
        config_hash,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for p in &net.params {
        for v in p.weights.iter().chain(p.bias.iter()) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild the network from a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointHeader)> {
    let mut r = BufReader::new(open(path)?);
    let header: CheckpointHeader = read_header(&mut r, CHECKPOINT_MAGIC, "checkpoint")?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let mut net = header.descriptor.build()?;
    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    let want = net.param_count() * 4;
    if blob.len() != want {
        return Err(Error::Format(format!(
            "checkpoint blob has {} bytes, architecture needs {want}",
            blob.len()
        )));
    }
    let mut vals = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    for p in &mut net.params {
        for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
            *v = vals.next().expect("length checked above");
        }
    }
    Ok((net, header))
}

// ----------------------------------------------------------- CSV and JSON

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

pub fn write_sweep_csv(path: &Path, curve: &SweepCurve) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "tau,p_fa,p_md")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.tau, p.p_fa, p.p_md)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_loss_csv(path: &Path, report: &TrainReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,train_loss,val_loss")?;
    for e in &report.epochs {
        writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_latency_csv(path: &Path, report: &LatencyReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "trial,elapsed_ms")?;
    for s in &report.samples {
        writeln!(w, "{},{}", s.trial, s.elapsed_ms)?;
    }
    w.flush()?;
    Ok(())
}

fn read_header<T: for<'de> Deserialize<'de>>(
    r: &mut impl Read,
    magic: &[u8; 4],
    what: &str,
) -> Result<T> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)
        .map_err(|_| Error::Format(format!("{what} file too short for magic")))?;
    if &got != magic {
        return Err(Error::Format(format!(
            "not a {what} file (magic {:?})",
            String::from_utf8_lossy(&got)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format(format!("{what} file truncated in header length")))?;
    let len = u32::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{what} file truncated in header")))?;
    serde_json::from_slice(&header)
        .map_err(|e| Error::Format(format!("bad {what} header: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqsim::{gen_corpus, gen_frame, LabelCounts, ScenarioConfig};
    use crate::models::{scaled_descriptor, ModelKind};
    use crate::spectrogram::{build_spectrogram, neg_log};
    use tempfile::tempdir;

    fn desk_specs(n: usize) -> Vec<Spectrogram> {
        let cfg = ScenarioConfig::desk();
        (0..n)
            .map(|i| {
                let frame = gen_frame(&cfg, Label::ActiveChannel, i as u64).unwrap();
                neg_log(&build_spectrogram(&frame, 128, 32).unwrap(), 1e-21).unwrap()
            })
            .collect()
    }

    #[test]
    fn dataset_roundtrip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("set.sgd");
        let specs = desk_specs(3);
        let manifest = write_dataset(&path, &specs, Some("abc123".into())).unwrap();
        assert_eq!(manifest.count, 3);
        let (back, manifest2) = read_dataset(&path).unwrap();
        assert_eq!(manifest, manifest2);
        assert_eq!(specs, back);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.sgd");
        write_dataset(&path, &[], None).unwrap();
        let (back, manifest) = read_dataset(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(manifest.count, 0);
    }

    #[test]
    fn truncated_dataset_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cut.sgd");
        write_dataset(&path, &desk_specs(2), None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
    }

    #[test]
    fn mixed_shapes_rejected() {
        let dir = tempdir().unwrap();
        let mut specs = desk_specs(1);
        specs.push(Spectrogram::zeros(4, 4));
        assert!(matches!(
            write_dataset(&dir.path().join("bad.sgd"), &specs, None),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn iq_corpus_roundtrip_both_layouts() {
        let cfg = ScenarioConfig::desk();
        let (frames, manifest) = gen_corpus(&cfg, LabelCounts::new(2, 1, 1), 5).unwrap();
        for layout in [CorpusLayout::PerFrame, CorpusLayout::Concatenated] {
            let dir = tempdir().unwrap();
            write_iq_corpus(dir.path(), &frames, &manifest, layout, None).unwrap();
            let (back, index) = read_iq_corpus(dir.path()).unwrap();
            assert_eq!(back, frames);
            assert_eq!(index.manifest, manifest);
            assert_eq!(index.layout, layout);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_f32_params() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.nnc");
        let desc = scaled_descriptor(ModelKind::Cnn, 32, 128, 7).unwrap();
        let net = desc.build().unwrap();
        save_checkpoint(&path, &net, &desc, Some("deadbeef".into())).unwrap();
        let (back, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.descriptor, desc);
        assert_eq!(back.param_count(), net.param_count());
        for (a, b) in back.params.iter().zip(net.params.iter()) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn checkpoint_with_wrong_magic_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.nnc");
        std::fs::write(&path, b"JUNKxxxxxxxx").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
