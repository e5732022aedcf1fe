//! Batch objective: forward pass, weighted energy/force loss, and
//! parameter gradients.

use crate::codec::{decode_expectation, entropy};
use crate::error::{Error, Result};
use crate::loss::{
    combined_loss, cross_entropy, cross_entropy_grad_logits, force_mae_grad, force_mae_loss,
    mae_grad, mae_loss, softmax_with_temperature, LossConfig,
};
use crate::model::{Descriptor, EnergyHead, ForwardOutput, ModelState, Params};

/// A sample ready for training: descriptor, labels and (in histogram mode)
/// the encoded target.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub desc: Descriptor,
    pub energy: f64,
    pub forces: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub stratum: usize,
}

/// Decoded model output for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub energy: f64,
    /// Entropy of the tempered predicted distribution (histogram mode only).
    pub entropy: Option<f64>,
    pub forces: Vec<f64>,
}

/// Turn raw network outputs into a scalar energy and optional entropy.
pub fn decode_output(
    state: &ModelState,
    out: &ForwardOutput,
) -> Result<(Prediction, Option<Vec<f64>>)> {
    match &state.head {
        EnergyHead::Histogram { temperature, .. } => {
            let grid = state
                .head
                .grid()
                .ok_or_else(|| Error::InvalidArgument("invalid histogram grid".into()))?;
            let probs = softmax_with_temperature(&out.energy, *temperature)?;
            let energy = decode_expectation(&probs, &grid)?;
            let h = entropy(&probs)?;
            Ok((
                Prediction {
                    energy,
                    entropy: Some(h),
                    forces: out.forces.clone(),
                },
                Some(probs),
            ))
        }
        EnergyHead::Scalar { mean, scale } => Ok((
            Prediction {
                energy: mean + scale * out.energy[0],
                entropy: None,
                forces: out.forces.clone(),
            },
            None,
        )),
    }
}

pub fn predict(state: &ModelState, desc: &Descriptor) -> Result<Prediction> {
    let out = state.forward(desc)?;
    Ok(decode_output(state, &out)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub total: f64,
    pub energy: f64,
    pub force: f64,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub loss: BatchLoss,
    pub grads: Params,
    /// Per-sample `(entropy, |e - e_hat|)` from this forward pass.
    pub records: Vec<(Option<f64>, f64)>,
}

/// Mean over the batch of `w_e * L_energy + w_f * L_force` and its
/// gradient. `L_energy` is the histogram cross-entropy or the scalar MAE
/// depending on the head.
pub fn batch_objective(
    state: &ModelState,
    batch: &[&Prepared],
    cfg: &LossConfig,
) -> Result<BatchResult> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grads = Params::zeros(&state.arch);
    let mut loss = BatchLoss::default();
    let mut records = Vec::with_capacity(batch.len());
    // fixed sample order keeps the reduction deterministic
    for sample in batch {
        let out = state.forward(&sample.desc)?;
        let (pred, _) = decode_output(state, &out)?;
        let (e_loss, mut d_energy) = match &state.head {
            EnergyHead::Histogram { temperature, .. } => {
                let target = sample
                    .target
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("missing histogram target".into()))?;
                let probs = softmax_with_temperature(&out.energy, *temperature)?;
                (
                    cross_entropy(target, &probs)?,
                    cross_entropy_grad_logits(target, &out.energy, *temperature)?,
                )
            }
            EnergyHead::Scalar { scale, .. } => (
                mae_loss(sample.energy, pred.energy),
                vec![scale * mae_grad(sample.energy, pred.energy)],
            ),
        };
        let f_loss = force_mae_loss(&sample.forces, &out.forces)?;
        let mut d_forces = force_mae_grad(&sample.forces, &out.forces)?;
        let we = cfg.energy_weight * inv_b;
        let wf = cfg.force_weight * inv_b;
        d_energy.iter_mut().for_each(|g| *g *= we);
        d_forces.iter_mut().for_each(|g| *g *= wf);
        state.backward(&sample.desc, &out.cache, &d_energy, &d_forces, &mut grads)?;

        loss.energy += e_loss * inv_b;
        loss.force += f_loss * inv_b;
        records.push((pred.entropy, (pred.energy - sample.energy).abs()));
    }
    loss.total = combined_loss(loss.energy, loss.force, cfg);
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    Ok(BatchResult {
        loss,
        grads,
        records,
    })
}
