//! First-order optimizers over a [`ParamSet`].

use alloc::vec::Vec;

use super::graph::ParamSet;
use super::tensor::{shape_error, Scalar};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Heavy-ball momentum: `v <- mu v + g`, `p <- p - lr v`.
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub lr: f64,
    pub kind: OptimizerKind,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            kind: OptimizerKind::Sgd { momentum: 0.9 },
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        match self.kind {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(invalid("momentum must lie in [0, 1)"))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                Err(invalid("Adam needs betas in [0, 1) and a positive epsilon"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = |p: &ParamSet<T>| p.entries.iter().map(|e| alloc::vec![T::zero(); e.values.len()]).collect();
        Self {
            step: 0,
            first: zeros(params),
            second: zeros(params),
        }
    }
}

/// Applies one update. Nothing is modified if any gradient is non-finite.
pub fn optimizer_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut OptimizerState<T>,
    hyper: &Hyper,
) -> Result<()> {
    hyper.validate()?;
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(shape_error("optimizer", params.len(), grads.len()));
    }
    for ((p, g), m) in params.entries.iter().zip(&grads.entries).zip(&state.first) {
        if p.values.len() != g.values.len() || m.len() != p.values.len() {
            return Err(shape_error("optimizer", p.values.len(), g.values.len()));
        }
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient(name.into()));
    }
    state.step += 1;
    let lr = T::from_f64(hyper.lr);
    match hyper.kind {
        OptimizerKind::Sgd { momentum } => {
            let mu = T::from_f64(momentum);
            for ((p, g), v) in params.entries.iter_mut().zip(&grads.entries).zip(&mut state.first) {
                for ((pv, &gv), vv) in p.values.iter_mut().zip(&g.values).zip(v.iter_mut()) {
                    *vv = mu * *vv + gv;
                    *pv -= lr * *vv;
                }
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let t = state.step as i32;
            let c1 = T::from_f64(1.0 - num_traits::Float::powi(beta1, t));
            let c2 = T::from_f64(1.0 - num_traits::Float::powi(beta2, t));
            let (b1, b2, e) = (T::from_f64(beta1), T::from_f64(beta2), T::from_f64(eps));
            let one = T::one();
            let entries = params.entries.iter_mut().zip(&grads.entries);
            for ((p, g), (m, v)) in entries.zip(state.first.iter_mut().zip(state.second.iter_mut())) {
                for (((pv, &gv), mv), vv) in p.values.iter_mut().zip(&g.values).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mv = b1 * *mv + (one - b1) * gv;
                    *vv = b2 * *vv + (one - b2) * gv * gv;
                    let mhat = *mv / c1;
                    let vhat = *vv / c2;
                    *pv -= lr * mhat / (vhat.sqrt() + e);
                }
            }
        }
    }
    Ok(())
}
