//! Reference arithmetic for the training losses, so that a trainer written
//! in any language can be checked against it.
//!
//! Losses are per-sequence sums of token negative log-likelihoods, never
//! per-token means. A weighted-loss batch is reduced by summing within each
//! sample and averaging over the samples of the batch.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::prompt::TaskKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("target sequence is empty")]
    EmptySequence,
    #[error("token log-probability {value} at position {index} is not finite")]
    NonFinite { index: usize, value: f64 },
    #[error("token log-probability {value} at position {index} is positive")]
    PositiveLogProb { index: usize, value: f64 },
    #[error("loss weights must be finite and non-negative, got {0:?}")]
    InvalidWeights([f64; 3]),
    #[error("loss weights are all zero")]
    ZeroWeights,
    #[error("loss {0} is negative or not finite")]
    InvalidLoss(f64),
    #[error("batch is empty")]
    EmptyBatch,
}

/// Per-token log-probabilities `log p(y_i | y_<i, X)` of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSequence(Vec<f64>);

impl TargetSequence {
    pub fn new(token_logprobs: Vec<f64>) -> Result<Self, LossError> {
        if token_logprobs.is_empty() {
            return Err(LossError::EmptySequence);
        }
        for (index, &value) in token_logprobs.iter().enumerate() {
            if !value.is_finite() {
                return Err(LossError::NonFinite { index, value });
            }
            if value > 0.0 {
                return Err(LossError::PositiveLogProb { index, value });
            }
        }
        Ok(Self(token_logprobs))
    }

    pub fn token_logprobs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &TargetSequence) -> TargetSequence {
        TargetSequence(self.0.iter().chain(&other.0).copied().collect())
    }
}

/// Negative log-likelihood of a whole target sequence.
pub fn nll(seq: &TargetSequence) -> f64 {
    -seq.0.iter().sum::<f64>()
}

/// Weights of the ID, SP and SF losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedLossConfig {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl WeightedLossConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, LossError> {
        let weights = [alpha, beta, gamma];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LossError::InvalidWeights(weights));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(LossError::ZeroWeights);
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for WeightedLossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            gamma: 1.0,
        }
    }
}

fn check_loss(loss: f64) -> Result<f64, LossError> {
    if loss.is_finite() && loss >= 0.0 {
        Ok(loss)
    } else {
        Err(LossError::InvalidLoss(loss))
    }
}

/// `alpha * l_id + beta * l_sp + gamma * l_sf`.
pub fn combine_weighted(
    l_id: f64,
    l_sp: f64,
    l_sf: f64,
    cfg: &WeightedLossConfig,
) -> Result<f64, LossError> {
    Ok(
        cfg.alpha * check_loss(l_id)?
            + cfg.beta * check_loss(l_sp)?
            + cfg.gamma * check_loss(l_sf)?,
    )
}

/// Split-loss value of one example. The task only routes bookkeeping; the
/// value is the plain sequence NLL.
pub fn select_split_loss(task: TaskKind, seq: &TargetSequence) -> (TaskKind, f64) {
    (task, nll(seq))
}

/// Per-sample losses of a weighted-loss batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLosses {
    pub id: TargetSequence,
    pub sp: TargetSequence,
    pub sf: TargetSequence,
}

/// Mean over samples of the per-sample weighted loss.
pub fn weighted_batch_loss(
    batch: &[SampleLosses],
    cfg: &WeightedLossConfig,
) -> Result<f64, LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut total = 0.0;
    for sample in batch {
        total += combine_weighted(nll(&sample.id), nll(&sample.sp), nll(&sample.sf), cfg)?;
    }
    Ok(total / batch.len() as f64)
}

/// Running per-task totals of split losses over an epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitLossLedger {
    per_task: BTreeMap<TaskKind, f64>,
    examples: usize,
}

impl SplitLossLedger {
    pub fn record(&mut self, task: TaskKind, seq: &TargetSequence) -> f64 {
        let (task, loss) = select_split_loss(task, seq);
        *self.per_task.entry(task).or_insert(0.0) += loss;
        self.examples += 1;
        loss
    }

    pub fn task_total(&self, task: TaskKind) -> f64 {
        self.per_task.get(&task).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.per_task.values().sum()
    }

    pub fn examples(&self) -> usize {
        self.examples
    }
}
