use super::network::{Gradients, Param, ParameterSet};
use super::TrainConfig;
use crate::{Error, Result};

/// One Adadelta update of every parameter, in place:
///
/// ```text
/// Eg <- rho * Eg + (1 - rho) * g^2
/// d  <- -sqrt(Ex + eps) / sqrt(Eg + eps) * g
/// Ex <- rho * Ex + (1 - rho) * d^2
/// x  <- x + lr * d
/// ```
///
/// Nothing is modified when any gradient is non-finite.
pub fn adadelta_step(params: &mut ParameterSet, grads: &Gradients, config: &TrainConfig) -> Result<()> {
    if params.layers.len() != grads.layers.len() {
        return Err(Error::ShapeMismatch("gradient layers do not match parameters".into()));
    }
    for (p, g) in params.layers.iter().zip(&grads.layers) {
        match (p, g) {
            (Some(p), Some((gw, gb))) if p.weights.value.len() == gw.len() && p.biases.value.len() == gb.len() => {}
            (None, None) => {}
            _ => return Err(Error::ShapeMismatch("gradient shapes do not match parameters".into())),
        }
    }
    if !grads.all_finite() {
        return Err(Error::NonFiniteGradient);
    }
    for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
        if let (Some(p), Some((gw, gb))) = (p, g) {
            update(&mut p.weights, gw, config);
            update(&mut p.biases, gb, config);
        }
    }
    Ok(())
}

fn update(param: &mut Param, grad: &[f64], cfg: &TrainConfig) {
    let (rho, eps, lr) = (cfg.rho, cfg.epsilon, cfg.learning_rate);
    for (((x, eg), ex), &g) in param
        .value
        .iter_mut()
        .zip(param.sq_grad_avg.iter_mut())
        .zip(param.sq_update_avg.iter_mut())
        .zip(grad)
    {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let delta = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
        *ex = rho * *ex + (1.0 - rho) * delta * delta;
        *x += lr * delta;
    }
}
