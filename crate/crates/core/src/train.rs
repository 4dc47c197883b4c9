//! Minibatch training and evaluation loops.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{normalize_patch, DataError, ManifestRow, NormalizationStats, SceneStore, Split, SAR_CHANNELS};
use crate::losses::{class_weights_from_counts, FocalParams, LossError, Objective};
use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::tensor::{AdamConfig, AdamState, Tape, Tensor, TensorError};
use crate::vit::{forward, init_params, predict, ViTConfig, ViTParams, VitError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Vit(#[from] VitError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Wce,
    Focal,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "wce" => Ok(LossKind::Wce),
            "focal" => Ok(LossKind::Focal),
            other => Err(TrainError::Config(format!(
                "unknown loss {other:?}; expected ce, wce or focal"
            ))),
        }
    }
}

/// A named preset or a full architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Explicit(ViTConfig),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Preset("vit_test".into())
    }
}

impl ModelSpec {
    /// Resolves against the data. Presets take their input size and class
    /// count from the data; explicit configs must already agree with it.
    pub fn resolve(&self, image_size: usize, num_classes: usize) -> Result<ViTConfig> {
        let config = match self {
            ModelSpec::Preset(name) => {
                let mut c = ViTConfig::preset(name)
                    .ok_or_else(|| TrainError::Config(format!("unknown model preset {name:?}")))?;
                c.image_size = image_size;
                c.num_classes = num_classes;
                c.in_channels = SAR_CHANNELS;
                c
            }
            ModelSpec::Explicit(c) => {
                if c.image_size != image_size || c.num_classes != num_classes || c.in_channels != SAR_CHANNELS {
                    return Err(TrainError::Config(format!(
                        "model expects {}-channel {}px inputs and {} classes; data has {SAR_CHANNELS}-channel {image_size}px patches and {num_classes} classes",
                        c.in_channels, c.image_size, c.num_classes
                    )));
                }
                c.clone()
            }
        };
        config.validate()?;
        Ok(config)
    }
}

fn default_gamma() -> f64 {
    2.0
}
fn default_batch_size() -> usize {
    32
}
fn default_steps() -> usize {
    2000
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub model: ModelSpec,
    pub loss: LossKind,
    /// Focal-loss focusing parameter; ignored by the other losses.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub seed: u64,
    /// When false every log record carries `wall_ms = 0`, which makes logs
    /// byte-reproducible.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

impl TrainConfig {
    pub fn new(loss: LossKind, seed: u64) -> Self {
        Self {
            model: ModelSpec::default(),
            loss,
            gamma: default_gamma(),
            adam: AdamConfig::default(),
            batch_size: default_batch_size(),
            steps: default_steps(),
            seed,
            record_wall_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(TrainError::Config("step count must be >= 1".into()));
        }
        self.adam.validate()?;
        if self.loss == LossKind::Focal {
            FocalParams::new(self.gamma, None)?;
        }
        Ok(())
    }

    /// The loss to optimize; W-CE weights come from the training labels.
    pub fn objective(&self, train_labels: &[usize], num_classes: usize) -> Result<Objective> {
        Ok(match self.loss {
            LossKind::Ce => Objective::CrossEntropy,
            LossKind::Wce => {
                let mut counts = vec![0u64; num_classes];
                for &l in train_labels {
                    counts[l] += 1;
                }
                Objective::WeightedCrossEntropy(class_weights_from_counts(&counts)?.weights)
            }
            LossKind::Focal => Objective::Focal(FocalParams::new(self.gamma, None)?),
        })
    }
}

/// Normalized patches held in memory, `[N × C × S × S]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub channels: usize,
    pub size: usize,
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(channels: usize, size: usize, inputs: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if channels == 0 || size == 0 || inputs.len() != labels.len() * channels * size * size {
            return Err(TrainError::Config(format!(
                "{} values for {} samples of {channels}x{size}x{size}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            channels,
            size,
            inputs,
            labels,
        })
    }

    /// Reads and normalizes every patch of `split`, in manifest order.
    pub fn from_manifest(
        rows: &[ManifestRow],
        split: Split,
        store: &mut SceneStore,
        stats: &NormalizationStats,
    ) -> Result<Self> {
        let selected: Vec<&ManifestRow> = rows.iter().filter(|r| r.split == Some(split)).collect();
        let size = match selected.first() {
            Some(r) => r.record.patch_size,
            None => return Err(TrainError::Config(format!("manifest has no {split} patches"))),
        };
        let mut inputs = Vec::with_capacity(selected.len() * SAR_CHANNELS * size * size);
        let mut labels = Vec::with_capacity(selected.len());
        for row in selected {
            if row.record.patch_size != size {
                return Err(TrainError::Config("manifest mixes patch sizes".into()));
            }
            let mut patch = store.patch(&row.record)?;
            normalize_patch(&mut patch, stats);
            inputs.extend_from_slice(&patch);
            labels.push(row.record.class_index);
        }
        Self::new(SAR_CHANNELS, size, inputs, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let per = self.channels * self.size * self.size;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.inputs[i * per..(i + 1) * per]);
        }
        let shape = vec![indices.len(), self.channels, self.size, self.size];
        let t = Tensor::new(shape, data).expect("batch shape");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub loss: f64,
    /// Accuracy on this step's minibatch, measured before the update.
    pub train_acc: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub config: ViTConfig,
    pub params: ViTParams,
    pub log: Vec<TrainLogRecord>,
}

/// Index of the largest logit per row; ties go to the lower index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.last_dim();
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f32::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}

/// Runs `cfg.steps` Adam updates over seeded-shuffle minibatches.
///
/// Parameters are initialized from `cfg.seed`; the batch order comes from a
/// separate stream of the same seed. An epoch's leftover samples that do not
/// fill a batch are skipped before reshuffling.
pub fn train(
    cfg: &TrainConfig,
    model: &ViTConfig,
    data: &Dataset,
    objective: &Objective,
    mut on_step: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if data.size != model.image_size || data.channels != model.in_channels {
        return Err(TrainError::Config(format!(
            "data is {}x{}x{}, model expects {}x{}x{}",
            data.channels, data.size, data.size, model.in_channels, model.image_size, model.image_size
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= model.num_classes) {
        return Err(TrainError::Config(format!(
            "label {bad} outside the model's {} classes",
            model.num_classes
        )));
    }

    let mut params = init_params(model, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam, params.ordered());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let batch_size = cfg.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len();
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        if cursor + batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (x, y) = data.batch(&order[cursor..cursor + batch_size]);
        cursor += batch_size;

        let mut tape = Tape::new();
        let bound = params.map(|p| tape.param(p.clone()));
        let logits = forward(&mut tape, &bound, model, &x)?;
        let loss = objective.apply(&mut tape, logits, &y)?;
        let loss_value = tape
            .value(loss)
            .item()
            .ok_or_else(|| TrainError::Config("loss is not a scalar".into()))?;
        if !loss_value.is_finite() {
            return Err(TrainError::NonFinite { step });
        }
        let preds = argmax_rows(tape.value(logits));
        let correct = preds.iter().zip(&y).filter(|(p, t)| p == t).count();

        let grads = tape.backward(loss)?;
        let grad_list: Vec<&Tensor> = bound
            .ordered()
            .into_iter()
            .map(|&v| grads.get(v).expect("every parameter receives a gradient"))
            .collect();
        adam.step(&mut params.ordered_mut(), &grad_list)?;

        let record = TrainLogRecord {
            step,
            loss: loss_value as f64,
            train_acc: correct as f64 / y.len() as f64,
            wall_ms: if cfg.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        on_step(&record);
        log.push(record);
    }
    Ok(TrainOutcome {
        config: model.clone(),
        params,
        log,
    })
}

/// Predicted class for every sample, in dataset order.
pub fn predict_dataset(params: &ViTParams, model: &ViTConfig, data: &Dataset, chunk: usize) -> Result<Vec<usize>> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for part in indices.chunks(chunk.max(1)) {
        let (x, _) = data.batch(part);
        out.extend(argmax_rows(&predict(params, model, &x)?));
    }
    Ok(out)
}

pub fn evaluate(
    params: &ViTParams,
    model: &ViTConfig,
    data: &Dataset,
    class_names: Vec<String>,
) -> Result<ConfusionMatrix> {
    if class_names.len() != model.num_classes {
        return Err(TrainError::Config(format!(
            "{} class names for a {}-class model",
            class_names.len(),
            model.num_classes
        )));
    }
    let preds = predict_dataset(params, model, data, 256)?;
    Ok(ConfusionMatrix::from_labels(&data.labels, &preds, class_names)?)
}
