//! Elastic weight consolidation: a diagonal empirical Fisher estimated at the
//! pretrained optimum, and the quadratic penalty
//! `λ/2 · Σ_i F_i (θ_i − θ*_i)²` that anchors adaptation to it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;

/// Examples whose squared gradients are held in memory at once.
const FISHER_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherDiagonal {
    entries: ParamSet,
    num_examples: usize,
}

impl FisherDiagonal {
    /// Rejects negative or non-finite entries.
    pub fn new(entries: ParamSet, num_examples: usize) -> Result<Self> {
        for (name, t) in entries.iter() {
            if let Some(v) = t.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::contract(format!(
                    "Fisher entry for {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(FisherDiagonal { entries, num_examples })
    }

    pub fn entries(&self) -> &ParamSet {
        &self.entries
    }

    pub fn num_examples(&self) -> usize {
        self.num_examples
    }
}

/// Mean over examples of the per-example squared loss gradient.
///
/// `grad_fn` returns the gradient of one example's supervised loss at
/// `params`. Chunks are evaluated in parallel and summed in example order,
/// so the result does not depend on the thread count.
pub fn estimate_fisher<E, F>(params: &ParamSet, examples: &[E], grad_fn: F) -> Result<FisherDiagonal>
where
    E: Sync,
    F: Fn(&ParamSet, &E) -> Result<ParamSet> + Sync,
{
    if examples.is_empty() {
        return Err(Error::contract("Fisher estimation needs at least one example"));
    }
    let mut sum = params.zeros_like();
    for chunk in examples.chunks(FISHER_CHUNK) {
        let squared: Vec<ParamSet> = chunk
            .par_iter()
            .map(|ex| {
                let mut g = grad_fn(params, ex)?;
                params.check_same_schema(&g)?;
                for (_, t) in g.iter_mut() {
                    for v in t.data_mut() {
                        *v *= *v;
                    }
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        for sq in &squared {
            sum.axpy(1.0, sq)?;
        }
    }
    sum.scale(1.0 / examples.len() as f64);
    FisherDiagonal::new(sum, examples.len())
}

/// θ*, its Fisher importance, and the penalty weight λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcAnchor {
    pub theta_star: ParamSet,
    pub fisher: FisherDiagonal,
    pub lambda: f64,
}

impl EwcAnchor {
    pub fn new(theta_star: ParamSet, fisher: FisherDiagonal, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        theta_star.check_same_schema(fisher.entries())?;
        Ok(EwcAnchor {
            theta_star,
            fisher,
            lambda,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        EwcAnchor::new(self.theta_star.clone(), self.fisher.clone(), lambda)
    }

    fn check(&self, params: &ParamSet) -> Result<()> {
        self.theta_star.check_same_schema(params)
    }
}

/// Σ_i F_i (θ_i − θ*_i)² without the λ/2 factor.
pub fn weighted_displacement(params: &ParamSet, anchor: &EwcAnchor) -> Result<f64> {
    anchor.check(params)?;
    let mut acc = 0.0;
    for (name, theta) in params.iter() {
        let star = anchor.theta_star.require(name)?;
        let f = anchor.fisher.entries().require(name)?;
        for ((t, s), fi) in theta.data().iter().zip(star.data()).zip(f.data()) {
            let d = t - s;
            acc += fi * d * d;
        }
    }
    Ok(acc)
}

pub fn ewc_penalty(params: &ParamSet, anchor: &EwcAnchor) -> Result<f64> {
    Ok(0.5 * anchor.lambda * weighted_displacement(params, anchor)?)
}

/// λ · F_i · (θ_i − θ*_i) per entry.
pub fn ewc_grad(params: &ParamSet, anchor: &EwcAnchor) -> Result<ParamSet> {
    anchor.check(params)?;
    let mut out = params.zeros_like();
    for (name, g) in out.iter_mut() {
        let theta = params.require(name)?;
        let star = anchor.theta_star.require(name)?;
        let f = anchor.fisher.entries().require(name)?;
        for (((o, t), s), fi) in g.data_mut().iter_mut().zip(theta.data()).zip(star.data()).zip(f.data()) {
            *o = anchor.lambda * fi * (t - s);
        }
    }
    Ok(out)
}

/// ASR loss plus the EWC penalty.
pub fn total_loss(asr_loss: f64, params: &ParamSet, anchor: &EwcAnchor) -> Result<f64> {
    Ok(asr_loss + ewc_penalty(params, anchor)?)
}
