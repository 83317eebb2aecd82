//! Graph-free LSTM forward pass used for inference and decoding.
//!
//! Gate layout along the 4H axis is input, forget, candidate, output. The
//! arithmetic order matches the traced version in `network.rs`.

use super::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::{self, sigmoid, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a> {
    pub w_ih: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub bias: &'a Tensor,
}

impl<'a> LstmWeights<'a> {
    pub fn from_params(params: &'a ParamSet, prefix: &str, layer: usize) -> Result<Self> {
        Ok(LstmWeights {
            w_ih: params.require(&format!("{prefix}.layer{layer}.w_ih"))?,
            w_hh: params.require(&format!("{prefix}.layer{layer}.w_hh"))?,
            bias: params.require(&format!("{prefix}.layer{layer}.bias"))?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Applies the gate nonlinearities to pre-activations `g` (length 4H).
fn cell(g: &[f64], c_prev: &[f64]) -> LstmState {
    let h_dim = c_prev.len();
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    for j in 0..h_dim {
        let i = sigmoid(g[j]);
        let f = sigmoid(g[h_dim + j]);
        let cand = g[2 * h_dim + j].tanh();
        let o = sigmoid(g[3 * h_dim + j]);
        c[j] = f * c_prev[j] + i * cand;
        h[j] = o * c[j].tanh();
    }
    LstmState { h, c }
}

fn recurrent_preact(xp: &[f64], h: &[f64], w: &LstmWeights, skip_recurrent: bool) -> Vec<f64> {
    let hidden = w.hidden();
    if skip_recurrent {
        return xp.to_vec();
    }
    let mut hw = vec![0.0; 4 * hidden];
    tensor::matmul_into(h, w.w_hh.data(), &mut hw, 1, hidden, 4 * hidden);
    xp.iter().zip(&hw).map(|(a, b)| a + b).collect()
}

/// One LSTM step: (h', c') from input `x` and the previous state.
pub fn lstm_step(x: &[f64], state: &LstmState, w: &LstmWeights) -> Result<LstmState> {
    let (in_dim, hidden) = (w.input_dim(), w.hidden());
    if x.len() != in_dim || state.h.len() != hidden || state.c.len() != hidden {
        return Err(Error::shape("lstm_step", &[in_dim, hidden], &[x.len(), state.h.len()]));
    }
    let mut xp = vec![0.0; 4 * hidden];
    tensor::matmul_into(x, w.w_ih.data(), &mut xp, 1, in_dim, 4 * hidden);
    for (a, b) in xp.iter_mut().zip(w.bias.data()) {
        *a += b;
    }
    let g = recurrent_preact(&xp, &state.h, w, false);
    Ok(cell(&g, &state.c))
}

/// Runs a layer over T×in inputs from a zero state, returning T×H outputs.
pub fn lstm_sequence(inputs: &Tensor, w: &LstmWeights) -> Result<Tensor> {
    let (t_len, in_dim) = inputs.dims2()?;
    if in_dim != w.input_dim() {
        return Err(Error::shape("lstm_sequence", inputs.shape(), w.w_ih.shape()));
    }
    let hidden = w.hidden();
    let mut xp = tensor::matmul(inputs, w.w_ih)?.into_data();
    for row in xp.chunks_mut(4 * hidden) {
        for (a, b) in row.iter_mut().zip(w.bias.data()) {
            *a += b;
        }
    }
    let mut state = LstmState::zeros(hidden);
    let mut out = Vec::with_capacity(t_len * hidden);
    for t in 0..t_len {
        let g = recurrent_preact(&xp[t * 4 * hidden..(t + 1) * 4 * hidden], &state.h, w, t == 0);
        state = cell(&g, &state.c);
        out.extend_from_slice(&state.h);
    }
    Tensor::new(vec![t_len, hidden], out)
}
