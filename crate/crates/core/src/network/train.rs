use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loss, Adam, AdamConfig, LstmModel, CLASSES};
use crate::error::{Error, Result};

/// Per-class loss weighting.
///
/// Written as `none`, `balanced` or `w0,w1` in configs and on the command
/// line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum ClassWeights {
    #[default]
    None,
    /// `n / (2 · n_class)` computed from the training labels.
    Balanced,
    Fixed([f64; CLASSES]),
}

impl FromStr for ClassWeights {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(ClassWeights::None),
            "balanced" => Ok(ClassWeights::Balanced),
            other => {
                let parts: Vec<f64> = other
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("class weights `{other}`: {e}"))?;
                match parts.as_slice() {
                    [a, b] if *a >= 0.0 && *b >= 0.0 => Ok(ClassWeights::Fixed([*a, *b])),
                    _ => Err(format!(
                        "class weights must be `none`, `balanced` or `w0,w1`, got `{other}`"
                    )),
                }
            }
        }
    }
}

impl TryFrom<String> for ClassWeights {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<ClassWeights> for String {
    fn from(w: ClassWeights) -> String {
        w.to_string()
    }
}

impl std::fmt::Display for ClassWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassWeights::None => f.write_str("none"),
            ClassWeights::Balanced => f.write_str("balanced"),
            ClassWeights::Fixed([a, b]) => write!(f, "{a},{b}"),
        }
    }
}

impl ClassWeights {
    pub fn resolve(&self, samples: &[TrainSample<'_>]) -> [f64; CLASSES] {
        match *self {
            ClassWeights::None => [1.0, 1.0],
            ClassWeights::Fixed(w) => w,
            ClassWeights::Balanced => {
                let pos = samples.iter().filter(|s| s.label).count();
                let neg = samples.len() - pos;
                let n = samples.len() as f64;
                let w = |count: usize| {
                    if count == 0 {
                        1.0
                    } else {
                        n / (2.0 * count as f64)
                    }
                };
                [w(neg), w(pos)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub class_weights: ClassWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            seed: 0,
            class_weights: ClassWeights::None,
        }
    }
}

/// One labelled sequence. `weight` multiplies the class weight.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub features: &'a [f64],
    pub steps: usize,
    pub label: bool,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    /// Mean weighted loss of each epoch, measured during the pass.
    pub loss_history: Vec<f64>,
}

/// Summed gradient and summed loss over `batch`; per-sample work runs in
/// parallel but is reduced in index order.
pub fn batch_gradient(
    model: &LstmModel,
    batch: &[TrainSample<'_>],
    class_weights: &[f64; CLASSES],
) -> Result<(LstmModel, Vec<f64>)> {
    let per_sample: Vec<(LstmModel, f64)> = batch
        .par_iter()
        .map(|s| {
            let label = usize::from(s.label);
            let weight = class_weights[label] * s.weight;
            let (probs, cache) = model.forward(s.features, s.steps)?;
            let grads = model.backward(&cache, label, weight)?;
            let value = loss(&probs, label, &[weight, weight])?;
            Ok((grads, value))
        })
        .collect::<Result<_>>()?;
    let mut total = model.zeros_like();
    let mut losses = Vec::with_capacity(per_sample.len());
    for (g, l) in &per_sample {
        total.add_scaled(g, 1.0);
        losses.push(*l);
    }
    Ok((total, losses))
}

/// Mini-batch Adam on the mean batch loss, reshuffling with a seeded RNG
/// every epoch.
pub fn train(
    mut model: LstmModel,
    samples: &[TrainSample<'_>],
    adam: &AdamConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Validation(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == samples.len() {
        tracing::warn!(
            samples = samples.len(),
            positives,
            "training set holds a single class; the model will be degenerate"
        );
    }
    let class_weights = config.class_weights.resolve(samples);
    let mut optimizer = Adam::new(*adam, &model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut sample_loss = vec![0.0; samples.len()];
    let mut history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainSample<'_>> = chunk.iter().map(|&i| samples[i]).collect();
            let (mut grads, losses) = batch_gradient(&model, &batch, &class_weights)?;
            for (&i, l) in chunk.iter().zip(losses) {
                sample_loss[i] = l;
            }
            let scale = 1.0 / chunk.len() as f64;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|g| *g *= scale);
            }
            optimizer.step(&mut model, &grads);
        }
        let epoch_loss = sample_loss.iter().sum::<f64>() / samples.len() as f64;
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(Error::Consistency(
                "training diverged to non-finite values".into(),
            ));
        }
        history.push(epoch_loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}
