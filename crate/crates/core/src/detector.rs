//! Training, the threshold test, and error-rate sweeps.
//!
//! The autoencoder trains on trusted spectrograms only and scores a
//! sample by its reconstruction error; the classifier trains on labeled
//! data and scores by its output probability. Either score feeds the same
//! decision rule: flag jamming when the score reaches a threshold. A
//! sweep over thresholds yields the false-alarm / misdetection trade-off
//! curve.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqsim::LabelCounts;
use crate::models::ModelKind;
use crate::nn::{adam_step, AdamConfig, AdamState, LayerParams, Network, Tensor};
use crate::nn::{bce, bce_grad, mse, mse_grad};
use crate::spectrogram::{Domain, Spectrogram};

/// Train/validation/test counts per label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: LabelCounts,
    pub val: LabelCounts,
    pub test: LabelCounts,
}

impl SplitSpec {
    /// Unsupervised recipe at capture scale: 6000 trusted training
    /// matrices, 800 for validation, 800 test split evenly between
    /// jammed and not.
    pub fn unsupervised_full() -> Self {
        SplitSpec {
            train: LabelCounts::trusted(3000),
            val: LabelCounts::trusted(400),
            test: LabelCounts::new(200, 200, 400),
        }
    }

    /// Supervised recipe at capture scale: 4500/1800/1200 split evenly
    /// over the three cases.
    pub fn supervised_full() -> Self {
        SplitSpec {
            train: LabelCounts::balanced(1500),
            val: LabelCounts::balanced(600),
            test: LabelCounts::balanced(400),
        }
    }

    /// Desk-scale unsupervised recipe: 600 trusted training samples and
    /// a 200-sample balanced test set.
    pub fn unsupervised_desk() -> Self {
        SplitSpec {
            train: LabelCounts::trusted(300),
            val: LabelCounts::trusted(50),
            test: LabelCounts::new(50, 50, 100),
        }
    }

    /// Desk-scale supervised recipe: 450/180/120.
    pub fn supervised_desk() -> Self {
        SplitSpec {
            train: LabelCounts::balanced(150),
            val: LabelCounts::balanced(60),
            test: LabelCounts::balanced(40),
        }
    }

    pub fn for_kind(kind: ModelKind, desk: bool) -> Self {
        match (kind, desk) {
            (ModelKind::Cae, false) => SplitSpec::unsupervised_full(),
            (ModelKind::Cae, true) => SplitSpec::unsupervised_desk(),
            (ModelKind::Cnn, false) => SplitSpec::supervised_full(),
            (ModelKind::Cnn, true) => SplitSpec::supervised_desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            patience: 6,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Loss wiring for `train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainLoss {
    /// Reconstruct the input; squared-error sum per sample.
    MseSelfTarget,
    /// Binary cross-entropy against 0 = trusted, 1 = jammed.
    BceLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub best_val_loss: f64,
}

/// Patience rule on the best validation loss seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns (improved, stop) for a 1-based epoch.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Apply the patience rule to a whole validation-loss trace; returns
/// (stopped_epoch, best_epoch), 1-based.
pub fn early_stop_scan(val_losses: &[f64], patience: usize) -> (usize, usize) {
    let mut stopper = EarlyStopper::new(patience);
    for (i, &v) in val_losses.iter().enumerate() {
        let (_, stop) = stopper.observe(i + 1, v);
        if stop {
            return (i + 1, stopper.best_epoch());
        }
    }
    (val_losses.len(), stopper.best_epoch())
}

fn to_input(s: &Spectrogram) -> Result<Tensor<f64>> {
    if s.domain != Domain::NegLog {
        return Err(Error::State(
            "model inputs must be neg-log spectrograms".into(),
        ));
    }
    let data: Vec<f64> = s.data.iter().map(|&v| v as f64).collect();
    Tensor::from_vec(&[s.rows, s.cols, 1], data)
}

fn binary_label(s: &Spectrogram) -> Result<f64> {
    match s.label {
        Some(l) if l.is_trusted() => Ok(0.0),
        Some(_) => Ok(1.0),
        None => Err(Error::Argument(
            "supervised training needs labeled spectrograms".into(),
        )),
    }
}

/// Train `net` with early stopping; returns the per-epoch loss trace and
/// restores the parameters of the best validation epoch.
pub fn train(
    net: &mut Network,
    train_set: &[Spectrogram],
    val_set: &[Spectrogram],
    cfg: &TrainConfig,
    loss: TrainLoss,
) -> Result<TrainReport> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Argument("train and validation sets must be non-empty".into()));
    }
    if cfg.patience == 0 {
        return Err(Error::config("patience must be >= 1"));
    }
    if loss == TrainLoss::MseSelfTarget {
        let tainted = train_set
            .iter()
            .chain(val_set.iter())
            .any(|s| matches!(s.label, Some(l) if !l.is_trusted()));
        if tainted {
            return Err(Error::Argument(
                "unsupervised training sets must contain trusted samples only".into(),
            ));
        }
    }

    let train_x: Vec<Tensor<f64>> = train_set.iter().map(to_input).collect::<Result<_>>()?;
    let val_x: Vec<Tensor<f64>> = val_set.iter().map(to_input).collect::<Result<_>>()?;
    let (train_y, val_y) = match loss {
        TrainLoss::BceLabels => (
            train_set.iter().map(binary_label).collect::<Result<Vec<_>>>()?,
            val_set.iter().map(binary_label).collect::<Result<Vec<_>>>()?,
        ),
        TrainLoss::MseSelfTarget => (Vec::new(), Vec::new()),
    };

    let mut opt = AdamState::new(net, AdamConfig::with_lr(cfg.lr));
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_params: Option<Vec<LayerParams>> = None;
    let mut epochs = Vec::new();
    let mut stopped_epoch = cfg.max_epochs;

    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grads: Option<Vec<LayerParams>> = None;
            for &idx in batch {
                let x = &train_x[idx];
                let acts = net.forward(x)?;
                let (sample_loss, upstream) = match loss {
                    TrainLoss::MseSelfTarget => {
                        let l = mse(x, acts.output())?;
                        (l, mse_grad(x, acts.output())?)
                    }
                    TrainLoss::BceLabels => {
                        let pred = acts.output().data()[0];
                        let l = bce(&[train_y[idx]], &[pred])?;
                        let g = bce_grad(&[train_y[idx]], &[pred])?;
                        (l, Tensor::from_vec(&[1], g)?)
                    }
                };
                if !sample_loss.is_finite() {
                    return Err(Error::Train {
                        epoch,
                        msg: format!("non-finite training loss {sample_loss}"),
                    });
                }
                epoch_loss += sample_loss;
                let grads = net.backward(&acts, &upstream)?;
                batch_grads = Some(match batch_grads {
                    None => grads.params,
                    Some(mut acc) => {
                        accumulate(&mut acc, &grads.params);
                        acc
                    }
                });
            }
            let mut grads = batch_grads.expect("non-empty batch");
            scale_grads(&mut grads, 1.0 / batch.len() as f64);
            adam_step(net, &grads, &mut opt).map_err(|e| match e {
                Error::Train { msg, .. } => Error::Train { epoch, msg },
                other => other,
            })?;
        }
        let train_loss = epoch_loss / train_x.len() as f64;

        let mut val_loss = 0.0;
        for (i, x) in val_x.iter().enumerate() {
            let y = net.infer(x)?;
            val_loss += match loss {
                TrainLoss::MseSelfTarget => mse(x, &y)?,
                TrainLoss::BceLabels => bce(&[val_y[i]], &[y.data()[0]])?,
            };
        }
        val_loss /= val_x.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Train {
                epoch,
                msg: format!("non-finite validation loss {val_loss}"),
            });
        }

        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_params = Some(net.params.clone());
        }
        if stop {
            stopped_epoch = epoch;
            break;
        }
    }
    if stopped_epoch > epochs.len() {
        stopped_epoch = epochs.len();
    }

    if let Some(params) = best_params {
        net.params = params;
        net.bump_generation();
    }

    Ok(TrainReport {
        epochs,
        best_epoch: stopper.best_epoch(),
        stopped_epoch,
        best_val_loss: stopper.best_loss(),
    })
}

fn accumulate(acc: &mut [LayerParams], add: &[LayerParams]) {
    for (a, b) in acc.iter_mut().zip(add.iter()) {
        for (x, y) in a.weights.iter_mut().zip(b.weights.iter()) {
            *x += y;
        }
        for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
            *x += y;
        }
    }
}

fn scale_grads(grads: &mut [LayerParams], s: f64) {
    for g in grads.iter_mut() {
        g.weights.iter_mut().for_each(|v| *v *= s);
        g.bias.iter_mut().for_each(|v| *v *= s);
    }
}

/// Detector score of one spectrogram: reconstruction error for the
/// autoencoder, output probability for the classifier.
pub fn score(net: &Network, kind: ModelKind, x: &Spectrogram) -> Result<f64> {
    let input = to_input(x)?;
    let output = net.infer(&input)?;
    match kind {
        ModelKind::Cae => mse(&input, &output),
        ModelKind::Cnn => Ok(output.data()[0]),
    }
}

/// The two sides of the threshold test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// No jamming.
    H0,
    /// Jamming.
    H1,
}

/// Decision rule: jamming when the score reaches the threshold.
pub fn decide(score: f64, tau: f64) -> Hypothesis {
    if score >= tau {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// What a score means, which also picks the threshold-grid spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    ReconstructionError,
    ClassProbability,
}

impl ScoreKind {
    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Cae => ScoreKind::ReconstructionError,
            ModelKind::Cnn => ScoreKind::ClassProbability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub p_fa: f64,
    pub p_md: f64,
}

/// False-alarm / misdetection rates over a threshold grid, plus the raw
/// score extremes needed for exact zero-error bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub score_kind: ScoreKind,
    pub max_h0_score: f64,
    pub min_h1_score: f64,
}

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Threshold grid spanning the pooled scores with a margin past both
/// ends: geometric spacing for reconstruction errors, linear for
/// probabilities.
pub fn default_grid(scores_h0: &[f64], scores_h1: &[f64], kind: ScoreKind) -> Vec<f64> {
    let pooled = scores_h0.iter().chain(scores_h1.iter());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &s in pooled {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let n = DEFAULT_GRID_POINTS;
    match kind {
        ScoreKind::ReconstructionError => {
            let lo = (lo * 0.9).max(1e-30);
            let hi = (hi * 1.1).max(lo * (1.0 + 1e-9));
            let ratio = (hi / lo).ln();
            (0..n)
                .map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
        ScoreKind::ClassProbability => {
            let margin = 0.05 * (hi - lo).max(1e-3);
            let (lo, hi) = (lo - margin, hi + margin);
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    }
}

/// Sweep the decision rule over `grid`: p_fa = share of trusted scores at
/// or above tau, p_md = share of jammed scores below tau.
pub fn sweep(scores_h0: &[f64], scores_h1: &[f64], grid: &[f64], kind: ScoreKind) -> Result<SweepCurve> {
    if scores_h0.is_empty() || scores_h1.is_empty() {
        return Err(Error::Argument(
            "sweep needs scores under both hypotheses".into(),
        ));
    }
    let mut h0 = scores_h0.to_vec();
    let mut h1 = scores_h1.to_vec();
    h0.sort_by(f64::total_cmp);
    h1.sort_by(f64::total_cmp);

    let points = grid
        .iter()
        .map(|&tau| {
            // Scores >= tau count as alarms under either hypothesis.
            let fa = h0.len() - h0.partition_point(|&s| s < tau);
            let md = h1.partition_point(|&s| s < tau);
            SweepPoint {
                tau,
                p_fa: fa as f64 / h0.len() as f64,
                p_md: md as f64 / h1.len() as f64,
            }
        })
        .collect();

    Ok(SweepCurve {
        points,
        score_kind: kind,
        max_h0_score: *h0.last().unwrap(),
        min_h1_score: h1[0],
    })
}

/// Maximal threshold interval (lo, hi] with zero false alarms and zero
/// misdetections, if the score sets separate.
pub fn zero_error_interval(curve: &SweepCurve) -> Option<(f64, f64)> {
    if curve.max_h0_score < curve.min_h1_score {
        Some((curve.max_h0_score, curve.min_h1_score))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn early_stop_matches_worked_example() {
        let trace = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96];
        let (stopped, best) = early_stop_scan(&trace, 6);
        assert_eq!(stopped, 8);
        assert_eq!(best, 2);
    }

    #[test]
    fn monotone_decreasing_trace_never_stops() {
        let trace: Vec<f64> = (0..50).map(|i| 1.0 / (i + 1) as f64).collect();
        let (stopped, best) = early_stop_scan(&trace, 6);
        assert_eq!(stopped, 50);
        assert_eq!(best, 50);
    }

    #[test]
    fn decide_boundary_is_alarm() {
        assert_eq!(decide(5.0, 5.0), Hypothesis::H1);
        assert_eq!(decide(4.999, 5.0), Hypothesis::H0);
    }

    #[test]
    fn sweep_separated_case() {
        let h0 = [1.0, 1.0];
        let h1 = [100.0, 100.0];
        let curve = sweep(&h0, &h1, &[50.0], ScoreKind::ReconstructionError).unwrap();
        assert_eq!(curve.points[0].p_fa, 0.0);
        assert_eq!(curve.points[0].p_md, 0.0);
        let zi = zero_error_interval(&curve).unwrap();
        assert_eq!(zi, (1.0, 100.0));
    }

    #[test]
    fn sweep_extreme_thresholds() {
        let h0 = [0.1, 0.4];
        let h1 = [0.3, 0.9];
        let curve = sweep(&h0, &h1, &[0.0, 1.5], ScoreKind::ClassProbability).unwrap();
        assert_eq!((curve.points[0].p_fa, curve.points[0].p_md), (1.0, 0.0));
        assert_eq!((curve.points[1].p_fa, curve.points[1].p_md), (0.0, 1.0));
        // min h1 < max h0: no zero-error interval.
        assert!(zero_error_interval(&curve).is_none());
    }

    #[test]
    fn sweep_matches_bruteforce_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h0: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..2.0)).collect();
        let h1: Vec<f64> = (0..50).map(|_| rng.gen_range(1.0..3.0)).collect();
        let grid = default_grid(&h0, &h1, ScoreKind::ReconstructionError);
        let curve = sweep(&h0, &h1, &grid, ScoreKind::ReconstructionError).unwrap();
        for p in &curve.points {
            let fa = h0.iter().filter(|&&s| s >= p.tau).count() as f64 / h0.len() as f64;
            let md = h1.iter().filter(|&&s| s < p.tau).count() as f64 / h1.len() as f64;
            assert_eq!(p.p_fa, fa, "tau {}", p.tau);
            assert_eq!(p.p_md, md, "tau {}", p.tau);
        }
    }

    #[test]
    fn sweep_rejects_empty_sides() {
        assert!(sweep(&[], &[1.0], &[0.5], ScoreKind::ClassProbability).is_err());
        assert!(sweep(&[1.0], &[], &[0.5], ScoreKind::ClassProbability).is_err());
    }

    #[test]
    fn default_grid_brackets_all_scores() {
        let h0 = [0.2, 0.5];
        let h1 = [0.6, 0.95];
        for kind in [ScoreKind::ReconstructionError, ScoreKind::ClassProbability] {
            let grid = default_grid(&h0, &h1, kind);
            assert_eq!(grid.len(), DEFAULT_GRID_POINTS);
            assert!(grid[0] < 0.2);
            assert!(*grid.last().unwrap() > 0.95);
            assert!(grid.windows(2).all(|w| w[0] < w[1]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sweep_is_monotone_in_tau(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n0 = rng.gen_range(1..40);
            let n1 = rng.gen_range(1..40);
            let h0: Vec<f64> = (0..n0).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let h1: Vec<f64> = (0..n1).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let grid: Vec<f64> = {
                let mut g: Vec<f64> = (0..64).map(|_| rng.gen_range(-6.0..6.0)).collect();
                g.sort_by(f64::total_cmp);
                g
            };
            let curve = sweep(&h0, &h1, &grid, ScoreKind::ClassProbability).unwrap();
            for w in curve.points.windows(2) {
                prop_assert!(w[1].p_fa <= w[0].p_fa);
                prop_assert!(w[1].p_md >= w[0].p_md);
            }
        }

        #[test]
        fn sweep_agrees_with_decide(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h0: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
            let h1: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
            let grid = default_grid(&h0, &h1, ScoreKind::ClassProbability);
            let curve = sweep(&h0, &h1, &grid, ScoreKind::ClassProbability).unwrap();
            for p in curve.points.iter().step_by(37) {
                let fa = h0.iter().filter(|&&s| decide(s, p.tau) == Hypothesis::H1).count();
                let md = h1.iter().filter(|&&s| decide(s, p.tau) == Hypothesis::H0).count();
                prop_assert_eq!(p.p_fa, fa as f64 / h0.len() as f64);
                prop_assert_eq!(p.p_md, md as f64 / h1.len() as f64);
            }
        }
    }
}
