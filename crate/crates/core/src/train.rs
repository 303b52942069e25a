//! Training loops for the autoencoders and the graph network, and the loss
//! curve statistics used to compare them.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{GraphRecord, PlyRecord};
use crate::eval::MeasureVector;
use crate::hybrid::{assemble_subgraph, SUBGRAPH_CAP};
use crate::neuralkit::{
    persist::DEFAULT_RECONSTRUCTION_WEIGHT, train_step, Autoencoder, GatArch, GatNetwork, GraphSample, LossKind, ModelBundle, NeuralError,
    OptimizerKind, OptimizerState, ScoreSample, ScoredAutoencoder, ValueHead, AE_INPUT,
};
use crate::search::{two_pass_propagate_from, Evaluator, MOVE_DEPTH_OF_HEADS};

pub const DEFAULT_SMOOTHING_WINDOW: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no training samples")]
    EmptyDataset,
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of samples held out from training.
    pub holdout: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
}

impl TrainConfig {
    /// Adam at 0.01 with MSE, for the autoencoders.
    pub fn uct_ae(iterations: usize, seed: u64) -> Self {
        TrainConfig {
            iterations,
            batch_size: 32,
            seed,
            holdout: 0.1,
            optimizer: OptimizerKind::adam(),
            loss: LossKind::Mse,
        }
    }

    /// RMSprop at 1e-4 with Smooth-L1, for the graph network.
    pub fn gat_ae(iterations: usize, seed: u64) -> Self {
        TrainConfig {
            iterations,
            batch_size: 8,
            seed,
            holdout: 0.1,
            optimizer: OptimizerKind::rms_prop(),
            loss: LossKind::SmoothL1,
        }
    }
}

/// Shuffled minibatches drawn epoch by epoch.
struct Batcher<T> {
    items: Vec<T>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<T: Clone> Batcher<T> {
    fn new(items: Vec<T>, rng: ChaCha8Rng) -> Self {
        let mut b = Batcher { items, pos: usize::MAX, rng };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        self.items.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next(&mut self, size: usize) -> Vec<T> {
        let size = size.min(self.items.len());
        if self.pos + size > self.items.len() {
            self.reshuffle();
        }
        let out = self.items[self.pos..self.pos + size].to_vec();
        self.pos += size;
        out
    }
}

fn split<T>(mut items: Vec<T>, holdout: f64, rng: &mut ChaCha8Rng) -> (Vec<T>, Vec<T>) {
    items.shuffle(rng);
    let n_hold = ((items.len() as f64) * holdout).floor() as usize;
    let n_hold = n_hold.min(items.len().saturating_sub(1));
    let train = items.split_off(n_hold);
    (train, items)
}

#[derive(Clone, Debug)]
pub struct AeRun {
    pub model: ScoredAutoencoder,
    /// Supervised loss of each minibatch before its update.
    pub losses: Vec<f64>,
    pub holdout_loss: Option<f64>,
}

/// Trains one autoencoder with its head on `(measures, label)` pairs.
pub fn train_autoencoder(samples: Vec<ScoreSample>, config: &TrainConfig) -> Result<AeRun, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ScoredAutoencoder::new(Autoencoder::random(&mut rng), ValueHead::random(&mut rng), DEFAULT_RECONSTRUCTION_WEIGHT);
    let (train, hold) = split(samples, config.holdout, &mut rng);
    let mut batches = Batcher::new(train, rng);
    let mut opt = OptimizerState::new(config.optimizer);
    let mut losses = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let batch = batches.next(config.batch_size);
        losses.push(model.supervised_loss(&batch, config.loss));
        train_step(&mut model, &batch, config.loss, &mut opt)?;
    }
    let holdout_loss = (!hold.is_empty()).then(|| model.supervised_loss(&hold, config.loss));
    Ok(AeRun { model, losses, holdout_loss })
}

#[derive(Clone, Debug)]
pub struct UctAeRun {
    pub movement: AeRun,
    pub placement: AeRun,
}

impl UctAeRun {
    /// Bundle with the trained autoencoders and a zero graph network.
    pub fn bundle(&self) -> ModelBundle {
        ModelBundle {
            movement: self.movement.model.clone(),
            placement: self.placement.model.clone(),
            gat: GatNetwork::zeros(GatArch::default()),
        }
    }
}

/// Movement autoencoder on move scores, placement autoencoder on place scores.
pub fn train_uct_ae(plies: &[PlyRecord], config: &TrainConfig) -> Result<UctAeRun, TrainError> {
    let samples = |pick: fn(&PlyRecord) -> f64| -> Vec<ScoreSample> {
        plies
            .iter()
            .map(|p| ScoreSample {
                measures: p.measures,
                label: pick(p),
            })
            .collect()
    };
    let movement = train_autoencoder(samples(|p| p.move_score), config)?;
    let placement = train_autoencoder(
        samples(|p| p.place_score),
        &TrainConfig {
            seed: config.seed.wrapping_add(1),
            ..config.clone()
        },
    )?;
    Ok(UctAeRun { movement, placement })
}

/// Graph sample of a stored tree: node values come from the trained
/// autoencoders, are propagated through the tree, and the nodes the walk
/// touched become the targets.
pub fn graph_sample(record: &GraphRecord, models: &ModelBundle, alpha: f64) -> Option<GraphSample> {
    let eval = Evaluator::new(models, alpha);
    let n = record.parent.len();
    let vectors: Vec<Option<MeasureVector>> = record.measures.iter().map(|m| m.map(MeasureVector::from_array)).collect();
    let mut obj: Vec<f64> = vectors.iter().map(|v| v.as_ref().map_or(0.0, |v| eval.model_value(v))).collect();
    two_pass_propagate_from(&mut obj, &record.parent, MOVE_DEPTH_OF_HEADS);
    let picked: Vec<usize> = (0..n).filter(|&i| record.parent[i].is_some()).take(SUBGRAPH_CAP - 1).collect();
    if picked.is_empty() {
        return None;
    }
    let features: Vec<Option<[f64; AE_INPUT]>> = vectors.iter().map(|v| v.as_ref().map(|v| eval.features(v))).collect();
    let (x, adj) = assemble_subgraph(&record.parent, &features, &picked);
    let mut labels = vec![0.0];
    let mut mask = vec![false];
    for &id in &picked {
        labels.push(obj[id].clamp(0.0, 1.0));
        mask.push(record.visited[id]);
    }
    mask.iter().any(|&m| m).then_some(GraphSample {
        x,
        adj,
        labels,
        mask: Some(mask),
    })
}

#[derive(Clone, Debug)]
pub struct GatRun {
    pub model: GatNetwork,
    pub losses: Vec<f64>,
    pub holdout_loss: Option<f64>,
}

pub fn train_gat_samples(samples: Vec<GraphSample>, init: GatNetwork, config: &TrainConfig) -> Result<GatRun, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train, hold) = split(samples, config.holdout, &mut rng);
    let mut batches = Batcher::new(train, rng);
    let mut model = init;
    let mut opt = OptimizerState::new(config.optimizer);
    let mut losses = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let batch = batches.next(config.batch_size);
        losses.push(train_step(&mut model, &batch, config.loss, &mut opt)?);
    }
    let holdout_loss = if hold.is_empty() {
        None
    } else {
        Some(crate::neuralkit::Trainable::loss_and_grad(&model, &hold, config.loss)?.0)
    };
    Ok(GatRun { model, losses, holdout_loss })
}

/// Trains the graph network on stored trees, with node values from `models`.
pub fn train_gat_ae(graphs: &[GraphRecord], models: &ModelBundle, alpha: f64, config: &TrainConfig) -> Result<GatRun, TrainError> {
    let samples: Vec<GraphSample> = graphs.iter().filter_map(|g| graph_sample(g, models, alpha)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a7);
    let init = GatNetwork::random(models.gat.arch, &mut rng);
    train_gat_samples(samples, init, config)
}

/// Trailing mean over `min(window, i + 1)` points.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub var_a: f64,
    pub var_b: f64,
    /// `var_a / var_b`.
    pub f: f64,
    pub df_a: usize,
    pub df_b: usize,
    /// Two-sided p-value.
    pub p: f64,
}

/// Compares the variances of the two series' tails from `from_index` on.
pub fn variance_and_ftest(a: &[f64], b: &[f64], from_index: usize) -> Result<FTest, TrainError> {
    let ta = a.get(from_index..).unwrap_or(&[]);
    let tb = b.get(from_index..).unwrap_or(&[]);
    if ta.len() <= 2 || tb.len() <= 2 {
        return Err(TrainError::InsufficientData(format!(
            "tails have {} and {} points, need more than 2 each",
            ta.len(),
            tb.len()
        )));
    }
    let (var_a, var_b) = (sample_variance(ta), sample_variance(tb));
    if var_a == 0.0 || var_b == 0.0 {
        return Err(TrainError::InsufficientData("a tail has zero variance".into()));
    }
    let (df_a, df_b) = (ta.len() - 1, tb.len() - 1);
    let f = var_a / var_b;
    let cdf = f_cdf(f, df_a as f64, df_b as f64);
    let p = (2.0 * cdf.min(1.0 - cdf)).min(1.0);
    Ok(FTest { var_a, var_b, f, df_a, df_b, p })
}

/// `iteration,raw,smoothed` rows.
pub fn write_loss_csv(path: &Path, series: &[f64], window: usize) -> Result<(), TrainError> {
    let smooth = moving_average(series, window);
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::Io(e.to_string()))?;
    w.write_record(["iteration", "raw", "smoothed"]).map_err(|e| TrainError::Io(e.to_string()))?;
    for (i, (r, s)) in series.iter().zip(&smooth).enumerate() {
        w.write_record([i.to_string(), r.to_string(), s.to_string()])
            .map_err(|e| TrainError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| TrainError::Io(e.to_string()))?;
    Ok(())
}

/// Writes `key = value` lines describing a run.
pub fn write_config_file(path: &Path, pairs: &[(&str, String)]) -> Result<(), TrainError> {
    let mut f = std::fs::File::create(path).map_err(|e| TrainError::Io(e.to_string()))?;
    for (k, v) in pairs {
        writeln!(f, "{k} = {v}").map_err(|e| TrainError::Io(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&[0.3; 10], 4), vec![0.3; 10]);
        let xs = [1.0, 5.0, 2.0, 8.0];
        assert_eq!(moving_average(&xs, 1), xs.to_vec());
        let step: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let m = moving_average(&step, 5);
        for i in 10..15 {
            assert!((m[i] - (i - 9) as f64 / 5.0).abs() < 1e-12);
        }
        assert_eq!(m[19], 1.0);
    }

    #[test]
    fn moving_average_is_affine_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
        for (a, b) in moving_average(&xs, 50).iter().zip(moving_average(&ys, 50)) {
            assert!((3.0 * a - 2.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ftest_identical_and_degenerate() {
        let xs: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let t = variance_and_ftest(&xs, &xs, 5).unwrap();
        assert_eq!(t.f, 1.0);
        assert!((t.p - 1.0).abs() < 1e-12);
        assert!(matches!(variance_and_ftest(&[1.0; 10], &xs, 0), Err(TrainError::InsufficientData(_))));
        assert!(matches!(variance_and_ftest(&xs, &xs, 18), Err(TrainError::InsufficientData(_))));
    }

    #[test]
    fn constant_labels_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<ScoreSample> = (0..256)
            .map(|_| ScoreSample {
                measures: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
                label: 0.5,
            })
            .collect();
        let run = train_autoencoder(samples, &TrainConfig::uct_ae(500, 1)).unwrap();
        assert_eq!(run.losses.len(), 500);
        assert!(*run.losses.last().unwrap() < 1e-3);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(train_autoencoder(Vec::new(), &TrainConfig::uct_ae(1, 0)), Err(TrainError::EmptyDataset)));
        assert!(matches!(
            train_gat_samples(Vec::new(), GatNetwork::zeros(GatArch::default()), &TrainConfig::gat_ae(1, 0)),
            Err(TrainError::EmptyDataset)
        ));
    }

    #[test]
    fn zero_network_on_half_labels_has_zero_loss() {
        let single = GraphSample {
            x: crate::neuralkit::Matrix::zeros(1, 5),
            adj: crate::neuralkit::Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            labels: vec![0.5],
            mask: None,
        };
        let cfg = TrainConfig {
            holdout: 0.0,
            ..TrainConfig::gat_ae(1, 0)
        };
        let run = train_gat_samples(vec![single], GatNetwork::zeros(GatArch::default()), &cfg).unwrap();
        assert_eq!(run.losses, vec![0.0]);
    }
}
