//! The desk-scale flow-matching generator.
//!
//! Path convention: `x_t = (1 − t)·x_data + t·ε` with `ε` unit Gaussian and
//! target velocity `v = ε − x_data`. Sampling integrates from `t = 1` (noise)
//! down to `t = 0`.

mod checkpoint;
mod denoiser;
mod optim;
mod sampler;
mod train;

pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use denoiser::{
    time_features, DenoiserDims, FieldInput, ToyDenoiser, DEFAULT_HIDDEN, PARAM_BLOCKS, TIME_FREQUENCIES,
};
pub use optim::AdamW;
pub use sampler::{cfg_field, sample, DEFAULT_GUIDANCE, DEFAULT_SAMPLING_STEPS};
pub use train::{
    prepare_examples, train, train_examples, warmup_lr, LossCurve, TrainConfig, TrainOutcome, TrainingExample,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::LatentTensor;

/// A noisy state, its time and the velocity the network should predict.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub x_t: LatentTensor,
    pub t: f64,
    pub target_field: LatentTensor,
}

impl FlowSample {
    pub fn new(x_t: LatentTensor, t: f64, target_field: LatentTensor) -> Result<Self> {
        if x_t.shape() != target_field.shape() {
            return Err(Error::shape(
                format!("{:?}", x_t.shape()),
                format!("{:?}", target_field.shape()),
            ));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("t = {t} outside [0, 1]")));
        }
        Ok(Self { x_t, t, target_field })
    }

    /// Interpolates data and noise along the linear path.
    pub fn from_data(data: &LatentTensor, noise: &LatentTensor, t: f64) -> Result<Self> {
        if data.shape() != noise.shape() {
            return Err(Error::shape(
                format!("{:?}", data.shape()),
                format!("{:?}", noise.shape()),
            ));
        }
        let (x, e) = (data.as_slice(), noise.as_slice());
        let tf = t as f32;
        let x_t = x.iter().zip(e).map(|(&x, &e)| (1.0 - tf) * x + tf * e).collect();
        let v = x.iter().zip(e).map(|(&x, &e)| e - x).collect();
        Self::new(
            LatentTensor::from_vec(data.shape(), x_t)?,
            t,
            LatentTensor::from_vec(data.shape(), v)?,
        )
    }
}

/// Unit Gaussian noise shaped like a latent.
pub fn gaussian_latent<R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> LatentTensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            g as f32
        })
        .collect();
    LatentTensor::from_vec(shape, data).expect("gaussian draws are finite")
}

/// The conditional and unconditional condition tensors for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    /// Condition tensor after motion injection.
    pub condition: LatentTensor,
    /// The plain first-frame condition, used by the unconditional branch.
    pub uncond_condition: LatentTensor,
}

impl ConditionBundle {
    pub fn new(condition: LatentTensor, uncond_condition: LatentTensor) -> Result<Self> {
        if condition.shape() != uncond_condition.shape() {
            return Err(Error::shape(
                format!("{:?}", condition.shape()),
                format!("{:?}", uncond_condition.shape()),
            ));
        }
        Ok(Self {
            condition,
            uncond_condition,
        })
    }
}

/// Flow-matching loss of one sample under its motion condition, with the
/// parameter gradient.
pub fn fm_loss(model: &ToyDenoiser, sample: &FlowSample, cond: &ConditionBundle) -> Result<(f64, Vec<f64>)> {
    model.loss_and_grad(
        &[FieldInput {
            x_t: &sample.x_t,
            t: sample.t,
            condition: &cond.condition,
        }],
        &[&sample.target_field],
    )
}
