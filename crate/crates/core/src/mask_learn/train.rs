use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ablation, ConvRegressor, Gradients, LearnError};
use crate::dataset::{all_on_mask, derive_seed, gt_obstacle_mask, render_run, MetaSample};
use crate::experience::{pool_masks, summarize_run, MaskTensor, SummaryStack};
use crate::render::{Palette, Planes};

/// Epochs inspected for a rising training loss.
const WATCH_EPOCHS: usize = 10;
/// Relative increase ignored as summation-order noise.
const RISE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub channel_ablation: Ablation,
    /// How often the learning rate may be halved after a rising loss.
    pub max_lr_halvings: usize,
    /// Fit the input standardization to the training inputs.
    pub standardize: bool,
    /// Heavy-ball momentum coefficient; 0 gives plain SGD.
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-2,
            epochs: 30,
            batch_size: 8,
            seed: 0,
            channel_ablation: Ablation::None,
            max_lr_halvings: 4,
            standardize: true,
            momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || self.batch_size == 0
            || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(LearnError::InvalidConfig(
                "learning_rate must be finite and non-negative, batch_size positive, momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: ConvRegressor,
    pub curve: Vec<EpochLoss>,
    /// Learning rate of the final attempt.
    pub learning_rate: f64,
    pub lr_halvings: usize,
}

/// Summaries of the runs a sample contributes at `n_used` experience runs.
/// With `n_used = 0` the first frame of the prediction run stands in as a
/// one-frame pseudo-experience.
pub fn sample_summaries(sample: &MetaSample, n_used: usize, palette: &Palette) -> Result<Vec<SummaryStack>, LearnError> {
    if n_used > sample.experience_runs.len() {
        return Err(LearnError::NotEnoughRuns {
            requested: n_used,
            available: sample.experience_runs.len(),
        });
    }
    if n_used == 0 {
        let first = render_run(&sample.scenario, &sample.prediction_run, palette)?.swap_remove(0);
        return Ok(vec![summarize_run(&[first])?]);
    }
    sample.experience_runs[..n_used]
        .iter()
        .map(|run| Ok(summarize_run(&render_run(&sample.scenario, run, palette)?)?))
        .collect()
}

/// A sample reduced to model inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub runs: Vec<Planes>,
    pub target: MaskTensor,
    pub all_on: MaskTensor,
}

pub fn prepare_samples(
    samples: &[MetaSample],
    n_used: usize,
    palette: &Palette,
) -> Result<Vec<PreparedSample>, LearnError> {
    samples
        .par_iter()
        .map(|s| {
            Ok(PreparedSample {
                runs: sample_summaries(s, n_used, palette)?
                    .into_iter()
                    .map(SummaryStack::into_planes)
                    .collect(),
                target: gt_obstacle_mask(&s.scenario).to_tensor(),
                all_on: all_on_mask(&s.scenario).to_tensor(),
            })
        })
        .collect()
}

/// Mean squared difference over pixels.
pub fn mask_loss(prediction: &MaskTensor, target: &MaskTensor) -> Result<f64, LearnError> {
    if prediction.height != target.height || prediction.width != target.width {
        return Err(LearnError::ShapeMismatch("prediction and target sizes differ".into()));
    }
    let n = prediction.data.len();
    Ok(prediction.data.iter().zip(&target.data).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64)
}

fn refs(s: &PreparedSample) -> Vec<&Planes> {
    s.runs.iter().collect()
}

/// Loss of the pooled prediction for every sample.
fn per_sample_loss(model: &ConvRegressor, samples: &[PreparedSample]) -> Result<Vec<f64>, LearnError> {
    samples
        .par_iter()
        .map(|s| {
            let pooled = pool_masks(&model.forward_batch(&refs(s))?)?;
            mask_loss(&pooled, &s.target)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation, two-pass.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

enum Attempt {
    Done(ConvRegressor, Vec<EpochLoss>),
    Rising,
}

fn attempt(
    samples: &[PreparedSample],
    cfg: &TrainConfig,
    lr: f64,
    test: Option<&[PreparedSample]>,
    allow_retry: bool,
) -> Result<Attempt, LearnError> {
    let mut model = ConvRegressor::new(cfg.seed);
    model.ablation = cfg.channel_ablation;
    if cfg.standardize {
        model.fit_standardization(&samples.iter().flat_map(refs).collect::<Vec<_>>());
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut velocity = Gradients::zeros_like(&model);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64])));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| model.pooled_loss_and_gradients(&refs(&samples[i]), &samples[i].target))
                .collect::<Result<Vec<_>, _>>()?;
            let mut grads = Gradients::zeros_like(&model);
            for (loss, g) in &results {
                total += loss;
                grads.add_scaled(g, 1.0 / batch.len() as f64);
            }
            velocity.scale(cfg.momentum);
            velocity.add_scaled(&grads, 1.0);
            model.apply(&velocity, lr);
        }
        let train_loss = total / samples.len() as f64;
        if !train_loss.is_finite() {
            if allow_retry {
                return Ok(Attempt::Rising);
            }
            return Err(LearnError::InvalidConfig(format!("training diverged at lr {lr}")));
        }
        let rising = curve.last().is_some_and(|e: &EpochLoss| train_loss > e.train_loss * (1.0 + RISE_TOLERANCE));
        if allow_retry && epoch <= WATCH_EPOCHS && rising {
            return Ok(Attempt::Rising);
        }
        let test_loss = test.map(|t| per_sample_loss(&model, t).map(|v| mean(&v))).transpose()?;
        curve.push(EpochLoss {
            epoch,
            train_loss,
            test_loss,
        });
    }
    Ok(Attempt::Done(model, curve))
}

/// Mini-batch SGD on the pooled-mask loss.
///
/// Samples are visited in a seeded random order each epoch; batch gradients
/// are summed in sample order so results do not depend on the thread count.
/// If the epoch training loss rises during the first ten epochs, training
/// restarts from the same initialisation with half the learning rate, up to
/// `max_lr_halvings` times.
pub fn train_prepared(
    samples: &[PreparedSample],
    cfg: &TrainConfig,
    test: Option<&[PreparedSample]>,
) -> Result<TrainReport, LearnError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut lr = cfg.learning_rate;
    for halvings in 0..=cfg.max_lr_halvings {
        match attempt(samples, cfg, lr, test, halvings < cfg.max_lr_halvings)? {
            Attempt::Done(model, curve) => {
                return Ok(TrainReport {
                    model,
                    curve,
                    learning_rate: lr,
                    lr_halvings: halvings,
                })
            }
            Attempt::Rising => lr *= 0.5,
        }
    }
    unreachable!("the final attempt never requests a retry")
}

pub fn train(
    samples: &[MetaSample],
    n_used: usize,
    cfg: &TrainConfig,
    palette: &Palette,
) -> Result<TrainReport, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    train_prepared(&prepare_samples(samples, n_used, palette)?, cfg, None)
}

/// Mean and spread of the per-sample mask error, with the all-on baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
}

impl ErrorStats {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

pub fn evaluate_mask_error(model: &ConvRegressor, samples: &[PreparedSample]) -> Result<ErrorStats, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let errors = per_sample_loss(model, samples)?;
    let baseline = samples
        .iter()
        .map(|s| mask_loss(&s.all_on, &s.target))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ErrorStats {
        count: samples.len(),
        mean: mean(&errors),
        std: std_dev(&errors),
        baseline_mean: mean(&baseline),
        baseline_std: std_dev(&baseline),
    })
}
