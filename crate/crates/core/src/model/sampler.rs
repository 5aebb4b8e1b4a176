use rand::Rng;

use super::{gaussian_latent, ConditionBundle, FieldInput, ToyDenoiser};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;

/// Default classifier-free guidance scale.
pub const DEFAULT_GUIDANCE: f64 = 5.0;
/// Default number of Euler steps.
pub const DEFAULT_SAMPLING_STEPS: usize = 50;

/// Guided field `v_uncond + w·(v_cond − v_uncond)`; exact at `w = 0` and `w = 1`.
pub fn cfg_field(v_uncond: &LatentTensor, v_cond: &LatentTensor, w: f64) -> Result<LatentTensor> {
    if v_uncond.shape() != v_cond.shape() {
        return Err(Error::shape(
            format!("{:?}", v_uncond.shape()),
            format!("{:?}", v_cond.shape()),
        ));
    }
    if w == 0.0 {
        return Ok(v_uncond.clone());
    }
    if w == 1.0 {
        return Ok(v_cond.clone());
    }
    let data = v_uncond
        .as_slice()
        .iter()
        .zip(v_cond.as_slice())
        .map(|(&u, &c)| (u as f64 + w * (c as f64 - u as f64)) as f32)
        .collect();
    LatentTensor::from_vec(v_uncond.shape(), data)
}

/// Euler integration of the guided field from unit noise at `t = 1` to `t = 0`.
pub fn sample<R: Rng + ?Sized>(
    model: &ToyDenoiser,
    cond: &ConditionBundle,
    w: f64,
    steps: usize,
    rng: &mut R,
) -> Result<LatentTensor> {
    if steps == 0 {
        return Err(Error::InvalidInput(
            "at least one sampling step is required".into(),
        ));
    }
    let shape = model.dims().latent_shape();
    cond.condition.check_geometry_shape(shape)?;
    let mut x = gaussian_latent(shape, rng);
    let dt = 1.0 / steps as f64;
    for i in 0..steps {
        let t = 1.0 - i as f64 * dt;
        let out = model
            .forward_batch(&[
                FieldInput {
                    x_t: &x,
                    t,
                    condition: &cond.uncond_condition,
                },
                FieldInput {
                    x_t: &x,
                    t,
                    condition: &cond.condition,
                },
            ])
            .map_err(|e| match e {
                Error::NonFinite { detail, .. } => Error::NonFinite { step: i, detail },
                other => other,
            })?;
        let v = cfg_field(&out[0], &out[1], w)?;
        let next: Vec<f32> = x
            .as_slice()
            .iter()
            .zip(v.as_slice())
            .map(|(&xi, &vi)| (xi as f64 - dt * vi as f64) as f32)
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: i,
                detail: "sampler state".into(),
            });
        }
        x = LatentTensor::from_vec(shape, next)?;
    }
    Ok(x)
}

impl LatentTensor {
    pub(crate) fn check_geometry_shape(&self, shape: [usize; 4]) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::shape(format!("{shape:?}"), format!("{:?}", self.shape())));
        }
        Ok(())
    }
}
