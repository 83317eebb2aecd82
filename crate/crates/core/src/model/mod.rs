//! The transducer model: stacked-LSTM encoder over acoustic frames, LSTM
//! predictor over previously emitted labels, and a joint network
//! `tanh(W·h_enc + V·h_pred)` followed by an affine projection to the
//! vocabulary and a softmax.

mod decode;
mod freeze;
mod lstm;
mod network;
mod params;

use serde::{Deserialize, Serialize};

pub use decode::{greedy_decode_with, TransducerScorer, DEFAULT_MAX_SYMBOLS_PER_FRAME};
pub use freeze::{freeze_mask, FreezeMask, FreezeScheme};
pub use lstm::{lstm_sequence, lstm_step, LstmState, LstmWeights};
pub use params::{check_params, init_params, param_shapes, zero_params, ParamSet};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Includes the blank symbol.
    pub vocab_size: usize,
    pub blank_id: usize,
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub predictor_layers: usize,
    pub predictor_hidden: usize,
    pub joint_hidden: usize,
}

impl ModelConfig {
    /// Small model that trains on one CPU core in a couple of minutes.
    pub fn desk() -> Self {
        ModelConfig {
            input_dim: 16,
            vocab_size: 13,
            blank_id: 0,
            encoder_layers: 2,
            encoder_hidden: 64,
            predictor_layers: 1,
            predictor_hidden: 64,
            joint_hidden: 64,
        }
    }

    /// Production-scale layout: 64-dim filterbank input, 5×1024 encoder,
    /// 2×1024 predictor, 512-unit joint. The vocabulary is a character
    /// inventory plus blank.
    pub fn paper() -> Self {
        ModelConfig {
            input_dim: 64,
            vocab_size: 29,
            blank_id: 0,
            encoder_layers: 5,
            encoder_hidden: 1024,
            predictor_layers: 2,
            predictor_hidden: 1024,
            joint_hidden: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_dim", self.input_dim),
            ("vocab_size", self.vocab_size),
            ("encoder_layers", self.encoder_layers),
            ("encoder_hidden", self.encoder_hidden),
            ("predictor_layers", self.predictor_layers),
            ("predictor_hidden", self.predictor_hidden),
            ("joint_hidden", self.joint_hidden),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.blank_id >= self.vocab_size {
            return Err(Error::Config(format!(
                "blank_id {} must be below vocab_size {}",
                self.blank_id, self.vocab_size
            )));
        }
        Ok(())
    }
}

/// Predictor recurrent state plus its current output row.
#[derive(Clone, Debug)]
pub struct PredictorState {
    layers: Vec<LstmState>,
}

impl PredictorState {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("at least one predictor layer").h
    }
}

#[derive(Clone, Debug)]
pub struct RnntModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl RnntModel {
    pub fn new(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        check_params(&config, &params)?;
        Ok(RnntModel { config, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(RnntModel { config, params })
    }

    fn layer(&self, prefix: &str, k: usize) -> Result<LstmWeights<'_>> {
        LstmWeights::from_params(&self.params, prefix, k)
    }

    /// T×input_dim features → T×encoder_hidden outputs.
    pub fn encode(&self, features: &Tensor) -> Result<Tensor> {
        let (_, d) = features.dims2()?;
        if features.shape().len() != 2 || d != self.config.input_dim {
            return Err(Error::shape("encode", features.shape(), &[0, self.config.input_dim]));
        }
        let mut x = features.clone();
        for k in 0..self.config.encoder_layers {
            x = lstm_sequence(&x, &self.layer("encoder", k)?)?;
        }
        Ok(x)
    }

    pub(crate) fn check_labels(&self, labels: &[usize]) -> Result<()> {
        let c = &self.config;
        if let Some(&bad) = labels.iter().find(|&&y| y == c.blank_id || y >= c.vocab_size) {
            return Err(Error::contract(format!(
                "label {bad} is blank or outside vocabulary {}",
                c.vocab_size
            )));
        }
        Ok(())
    }

    /// Predictor input rows: the start symbol (blank) followed by the labels.
    pub(crate) fn predictor_inputs(&self, labels: &[usize]) -> Tensor {
        let v = self.config.vocab_size;
        let mut data = vec![0.0; (labels.len() + 1) * v];
        data[self.config.blank_id] = 1.0;
        for (m, &y) in labels.iter().enumerate() {
            data[(m + 1) * v + y] = 1.0;
        }
        Tensor::new(vec![labels.len() + 1, v], data).expect("non-empty")
    }

    /// Labels of length U → (U+1)×predictor_hidden; row m conditions on labels 1..m.
    pub fn predict(&self, labels: &[usize]) -> Result<Tensor> {
        self.check_labels(labels)?;
        let mut x = self.predictor_inputs(labels);
        for k in 0..self.config.predictor_layers {
            x = lstm_sequence(&x, &self.layer("predictor", k)?)?;
        }
        Ok(x)
    }

    pub fn predictor_start(&self) -> Result<PredictorState> {
        let zero = PredictorState {
            layers: vec![LstmState::zeros(self.config.predictor_hidden); self.config.predictor_layers],
        };
        self.predictor_advance(&zero, self.config.blank_id)
    }

    /// Feeds one token into the predictor.
    pub fn predictor_advance(&self, state: &PredictorState, token: usize) -> Result<PredictorState> {
        let mut x = vec![0.0; self.config.vocab_size];
        x[token] = 1.0;
        let mut layers = Vec::with_capacity(state.layers.len());
        for (k, prev) in state.layers.iter().enumerate() {
            let next = lstm_step(&x, prev, &self.layer("predictor", k)?)?;
            x = next.h.clone();
            layers.push(next);
        }
        Ok(PredictorState { layers })
    }

    /// Joint network logits (before softmax) for one lattice cell.
    pub fn joint(&self, h_enc: &[f64], h_pred: &[f64]) -> Result<Vec<f64>> {
        let c = &self.config;
        if h_enc.len() != c.encoder_hidden || h_pred.len() != c.predictor_hidden {
            return Err(Error::shape(
                "joint",
                &[h_enc.len(), h_pred.len()],
                &[c.encoder_hidden, c.predictor_hidden],
            ));
        }
        let j = c.joint_hidden;
        let mut a = vec![0.0; j];
        tensor::matmul_into(
            h_enc,
            self.params.require("joint.w_enc")?.data(),
            &mut a,
            1,
            c.encoder_hidden,
            j,
        );
        let mut b = vec![0.0; j];
        tensor::matmul_into(
            h_pred,
            self.params.require("joint.w_pred")?.data(),
            &mut b,
            1,
            c.predictor_hidden,
            j,
        );
        let hidden: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y).tanh()).collect();
        self.project(&hidden)
    }

    fn project(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        let c = &self.config;
        let mut logits = vec![0.0; c.vocab_size];
        tensor::matmul_into(
            hidden,
            self.params.require("output.weight")?.data(),
            &mut logits,
            1,
            c.joint_hidden,
            c.vocab_size,
        );
        for (l, b) in logits.iter_mut().zip(self.params.require("output.bias")?.data()) {
            *l += b;
        }
        Ok(logits)
    }

    /// T×(U+1)×V log-probabilities.
    pub fn output_lattice(&self, features: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let enc = self.encode(features)?;
        let pred = self.predict(labels)?;
        let c = &self.config;
        let a = tensor::matmul(&enc, self.params.require("joint.w_enc")?)?;
        let b = tensor::matmul(&pred, self.params.require("joint.w_pred")?)?;
        let (t_len, u_len) = (enc.dims2()?.0, pred.dims2()?.0);
        let mut out = Vec::with_capacity(t_len * u_len * c.vocab_size);
        for t in 0..t_len {
            for u in 0..u_len {
                let hidden: Vec<f64> = a.row(t).iter().zip(b.row(u)).map(|(x, y)| (x + y).tanh()).collect();
                let mut logits = self.project(&hidden)?;
                tensor::log_softmax_in_place(&mut logits);
                out.extend_from_slice(&logits);
            }
        }
        Tensor::new(vec![t_len, u_len, c.vocab_size], out)
    }

    pub fn greedy_decode(&self, features: &Tensor, max_symbols_per_frame: usize) -> Result<Vec<usize>> {
        let scorer = decode::ModelScorer::new(self, features)?;
        greedy_decode_with(&scorer, max_symbols_per_frame)
    }
}
