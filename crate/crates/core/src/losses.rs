//! Classification objectives for imbalanced data.
//!
//! All three losses take `[batch × classes]` logits recorded on a [`Tape`]
//! and return a differentiable scalar. They work in log space so confident
//! predictions never underflow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("target {target} at position {position} is outside 0..{classes}")]
    TargetOutOfRange {
        position: usize,
        target: usize,
        classes: usize,
    },
    #[error("invalid loss parameter: {0}")]
    Param(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = LossError> = std::result::Result<T, E>;

/// Strictly positive per-class weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(LossError::Param("class weights are empty".into()));
        }
        if let Some((c, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(LossError::Param(format!(
                "weight for class {c} must be positive and finite, got {w}"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0; classes.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ClassWeights {
    type Error = LossError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassWeights> for Vec<f64> {
    fn from(w: ClassWeights) -> Self {
        w.0
    }
}

/// Focusing exponent and optional per-class balancing weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<ClassWeights>,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: None,
        }
    }
}

impl FocalParams {
    pub fn new(gamma: f64, alpha: Option<ClassWeights>) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(LossError::Param(format!(
                "focal gamma must be finite and >= 0, got {gamma}"
            )));
        }
        Ok(Self { gamma, alpha })
    }
}

fn check_targets(tape: &Tape, logits: Var, targets: &[usize]) -> Result<usize> {
    let (b, k) = match tape.value(logits).shape() {
        &[b, k] => (b, k),
        other => {
            return Err(LossError::Input(format!(
                "logits must be [batch x classes], got {other:?}"
            )))
        }
    };
    if targets.len() != b {
        return Err(LossError::Input(format!(
            "{} targets for a batch of {b}",
            targets.len()
        )));
    }
    if let Some((position, &target)) = targets.iter().enumerate().find(|(_, &t)| t >= k) {
        return Err(LossError::TargetOutOfRange {
            position,
            target,
            classes: k,
        });
    }
    Ok(k)
}

fn check_weight_len(weights: &ClassWeights, classes: usize) -> Result<()> {
    if weights.len() != classes {
        return Err(LossError::Param(format!(
            "{} class weights for {classes} classes",
            weights.len()
        )));
    }
    Ok(())
}

/// Batch mean of `−log softmax(logits)[target]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    check_targets(tape, logits, targets)?;
    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick(logp, targets)?;
    let total = tape.sum(picked)?;
    Ok(tape.scale(total, (-1.0 / targets.len() as f64) as f32)?)
}

/// Per-sample cross-entropy scaled by the target class weight, divided by
/// the sum of the applied weights.
pub fn weighted_cross_entropy(tape: &mut Tape, logits: Var, targets: &[usize], weights: &ClassWeights) -> Result<Var> {
    let k = check_targets(tape, logits, targets)?;
    check_weight_len(weights, k)?;
    let applied: Vec<f32> = targets.iter().map(|&t| weights.0[t] as f32).collect();
    let norm: f64 = applied.iter().map(|&w| w as f64).sum();
    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick(logp, targets)?;
    let nll = tape.scale(picked, -1.0)?;
    let w = tape.constant(Tensor::from_vec(applied)?);
    let weighted = tape.mul(nll, w)?;
    let total = tape.sum(weighted)?;
    Ok(tape.scale(total, (1.0 / norm) as f32)?)
}

/// Batch mean of `α_t · (1 − p_t)^γ · (−log p_t)`.
pub fn focal_loss(tape: &mut Tape, logits: Var, targets: &[usize], params: &FocalParams) -> Result<Var> {
    let k = check_targets(tape, logits, targets)?;
    let params = FocalParams::new(params.gamma, params.alpha.clone())?;
    let per_sample = tape.focal_nll(logits, targets, params.gamma)?;
    let per_sample = match &params.alpha {
        Some(alpha) => {
            check_weight_len(alpha, k)?;
            let a: Vec<f32> = targets.iter().map(|&t| alpha.0[t] as f32).collect();
            let a = tape.constant(Tensor::from_vec(a)?);
            tape.mul(per_sample, a)?
        }
        None => per_sample,
    };
    Ok(tape.mean(per_sample)?)
}

/// Inverse-frequency weights derived from label counts.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedWeights {
    pub weights: ClassWeights,
    /// Classes with no samples; they were given the largest computed weight.
    pub zero_count_classes: Vec<usize>,
}

/// `w_c = N / (K · n_c)`; classes with `n_c = 0` get the largest weight among
/// the populated classes and are reported in `zero_count_classes`.
pub fn class_weights_from_counts(counts: &[u64]) -> Result<DerivedWeights> {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(LossError::Input(
            "class counts must contain at least one positive entry".into(),
        ));
    }
    let k = counts.len() as f64;
    let n = total as f64;
    let raw: Vec<Option<f64>> = counts.iter().map(|&c| (c > 0).then(|| n / (k * c as f64))).collect();
    let max = raw.iter().flatten().copied().fold(f64::MIN, f64::max);
    let zero_count_classes: Vec<usize> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, w)| w.is_none().then_some(i))
        .collect();
    if !zero_count_classes.is_empty() {
        log::warn!("classes {zero_count_classes:?} have no samples; assigning weight {max:.4}");
    }
    let weights = ClassWeights::new(raw.into_iter().map(|w| w.unwrap_or(max)).collect())?;
    Ok(DerivedWeights {
        weights,
        zero_count_classes,
    })
}

/// Which objective a training run uses.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    CrossEntropy,
    WeightedCrossEntropy(ClassWeights),
    Focal(FocalParams),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::CrossEntropy => "ce",
            Objective::WeightedCrossEntropy(_) => "wce",
            Objective::Focal(_) => "focal",
        }
    }

    pub fn apply(&self, tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
        match self {
            Objective::CrossEntropy => cross_entropy(tape, logits, targets),
            Objective::WeightedCrossEntropy(w) => weighted_cross_entropy(tape, logits, targets, w),
            Objective::Focal(p) => focal_loss(tape, logits, targets, p),
        }
    }
}
