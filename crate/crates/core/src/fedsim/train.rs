use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Rng, UpdateVector};

use super::data::SyntheticDataset;
use super::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 0.01,
            weight_decay: 5e-4,
            batch_size: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("lr and weight_decay must be nonnegative"));
        }
        Ok(())
    }
}

/// Mini-batch SGD on cross-entropy with weight decay, starting from
/// `initial`. Returns `trained - initial`.
pub fn local_train(
    spec: &ModelSpec,
    initial: &[f64],
    data: &SyntheticDataset,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<UpdateVector> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("client has no training data"));
    }
    let mut params = initial.to_vec();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let (_, grad) = spec.loss_and_grad(&params, data, batch, config.weight_decay)?;
            crate::tensor::axpy(-config.lr, &grad, &mut params);
        }
    }
    let delta: Vec<f64> = params.iter().zip(initial).map(|(a, b)| a - b).collect();
    UpdateVector::new(delta)
}
