//! Mini-batch Adam training with optional freezing and EWC anchoring,
//! evaluation helpers, and the eight-experiment suite.

mod adam;
mod eval;
mod suite;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use eval::{decode_set, evaluate, geo_samples, region_stats, score_set};
pub use suite::{
    build_finetune_sets, cluster_with, run_experiment, run_suite, table1_experiments, AccessCheck, DataSelector,
    ExperimentSpec, FinetuneSets, Init, Method, RunManifest, Splits, SuiteConfig, SuiteOutcome,
};

use crate::error::{Error, Result};
use crate::ewc::{estimate_fisher, ewc_grad, ewc_penalty, EwcAnchor, FisherDiagonal};
use crate::model::{freeze_mask, FreezeMask, FreezeScheme, ParamSet, RnntModel};
use crate::synth::Utterance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after_drop: f64,
    pub lr_drop_step: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub freeze: FreezeScheme,
    /// EWC weight; only used when an anchor is supplied.
    pub lambda: f64,
}

impl TrainConfig {
    /// Schedule for training from scratch at desk scale.
    pub fn desk() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 16,
            lr_initial: 1e-3,
            lr_after_drop: 2e-4,
            lr_drop_step: 600,
            adam: AdamConfig::default(),
            seed: 0,
            freeze: FreezeScheme::None,
            lambda: 1.0,
        }
    }

    /// Shorter schedule for adapting a pretrained model.
    pub fn desk_finetune() -> Self {
        TrainConfig {
            steps: 300,
            lr_initial: 5e-4,
            lr_after_drop: 1e-4,
            lr_drop_step: 200,
            ..TrainConfig::desk()
        }
    }

    /// Published production constants, kept for reference.
    pub fn paper() -> Self {
        TrainConfig {
            steps: 200_000,
            batch_size: 4500,
            lr_initial: 6.25e-5,
            lr_after_drop: 1e-5,
            lr_drop_step: 100_000,
            adam: AdamConfig::default(),
            seed: 0,
            freeze: FreezeScheme::None,
            lambda: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive".into());
        }
        if self.lr_drop_step > self.steps {
            return bad(format!(
                "lr_drop_step {} exceeds steps {}",
                self.lr_drop_step, self.steps
            ));
        }
        if !(self.lr_initial > 0.0 && self.lr_after_drop > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive".into());
        }
        Ok(())
    }

    /// Learning rate for the 0-based step index.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.lr_drop_step {
            self.lr_initial
        } else {
            self.lr_after_drop
        }
    }
}

/// Records which utterance ids each named phase read.
#[derive(Debug, Default)]
pub struct AccessLog {
    reads: Mutex<BTreeMap<String, BTreeSet<String>>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record<'a>(&self, phase: &str, ids: impl IntoIterator<Item = &'a str>) {
        let mut reads = self.reads.lock().expect("access log poisoned");
        let set = reads.entry(phase.to_string()).or_default();
        set.extend(ids.into_iter().map(str::to_string));
    }

    pub fn phases(&self) -> Vec<String> {
        self.reads
            .lock()
            .expect("access log poisoned")
            .keys()
            .cloned()
            .collect()
    }

    pub fn ids(&self, phase: &str) -> BTreeSet<String> {
        self.reads
            .lock()
            .expect("access log poisoned")
            .get(phase)
            .cloned()
            .unwrap_or_default()
    }

    pub fn into_reads(self) -> BTreeMap<String, BTreeSet<String>> {
        self.reads.into_inner().expect("access log poisoned")
    }
}

/// Optional extras for [`train`].
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainHooks<'a> {
    pub anchor: Option<&'a EwcAnchor>,
    pub access: Option<(&'a AccessLog, &'a str)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Mean training objective of each step's batch.
    pub losses: Vec<f64>,
    pub optimizer: AdamState,
}

/// Mean loss and gradient over a batch. Per-utterance gradients are
/// computed in parallel and summed in batch order.
fn batch_loss_and_grad(model: &RnntModel, batch: &[&Utterance], mask: &FreezeMask) -> Result<(f64, ParamSet)> {
    let parts: Vec<(f64, ParamSet)> = batch
        .par_iter()
        .map(|u| model.loss_and_grad(&u.features, &u.transcript, mask))
        .collect::<Result<_>>()?;
    let mut grad = model.params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grad.axpy(1.0, g)?;
    }
    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    Ok((loss / n, grad))
}

/// Trains `model` in place with seeded reshuffled mini-batches and fresh
/// optimizer moments. The objective is the transducer loss, plus the EWC
/// penalty when an anchor is given and λ > 0.
pub fn train(
    model: &mut RnntModel,
    data: &[Utterance],
    config: &TrainConfig,
    hooks: TrainHooks,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::contract("training data is empty"));
    }
    let mask = freeze_mask(config.freeze, &model.config);
    let anchor = hooks.anchor.map(|a| a.with_lambda(config.lambda)).transpose()?;
    let anchor = anchor.filter(|a| a.lambda > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut state = AdamState::new(&model.params);
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        if let Some((log, phase)) = hooks.access {
            log.record(phase, batch.iter().map(|u| u.id.as_str()));
        }
        let (mut loss, mut grad) = batch_loss_and_grad(model, &batch, &mask)?;
        if let Some(a) = &anchor {
            loss += ewc_penalty(&model.params, a)?;
            grad.axpy(1.0, &ewc_grad(&model.params, a)?)?;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("loss is {loss}"),
            });
        }
        adam_step(
            &mut model.params,
            &grad,
            &mut state,
            config.lr_at(step),
            &config.adam,
            &mask,
        )
        .map_err(|e| Error::Diverged {
            step,
            detail: e.to_string(),
        })?;
        losses.push(loss);
    }
    Ok(TrainOutcome {
        losses,
        optimizer: state,
    })
}

/// Empirical Fisher diagonal of the transducer loss at the model's current
/// parameters, over at most `cap` utterances drawn uniformly with `seed`.
pub fn compute_fisher(
    model: &RnntModel,
    data: &[Utterance],
    cap: usize,
    seed: u64,
    access: Option<(&AccessLog, &str)>,
) -> Result<FisherDiagonal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, data.len(), cap.min(data.len())).into_vec();
    picked.sort_unstable();
    let subset: Vec<&Utterance> = picked.iter().map(|&i| &data[i]).collect();
    if let Some((log, phase)) = access {
        log.record(phase, subset.iter().map(|u| u.id.as_str()));
    }
    let none = FreezeMask::none();
    estimate_fisher(&model.params, &subset, |_, u| {
        model.loss_and_grad(&u.features, &u.transcript, &none).map(|(_, g)| g)
    })
}

/// SHA-256 of the compact JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
