//! Traced forward pass producing the transducer loss on an autodiff graph.

use std::collections::BTreeMap;

use super::{FreezeMask, ParamSet, RnntModel};
use crate::autodiff::{Graph, NodeId};
use crate::error::Result;
use crate::tensor::Tensor;

/// Parameter leaves on a graph. Frozen parameters are recorded as constants
/// so the backward sweep never visits them.
pub(crate) struct TracedParams {
    ids: BTreeMap<String, NodeId>,
}

impl TracedParams {
    pub(crate) fn new(g: &mut Graph, params: &ParamSet, frozen: &FreezeMask) -> Self {
        let ids = params
            .iter()
            .map(|(name, t)| {
                let id = if frozen.contains(name) {
                    g.constant(t.clone())
                } else {
                    g.param(t.clone())
                };
                (name.clone(), id)
            })
            .collect();
        TracedParams { ids }
    }

    fn id(&self, name: &str) -> NodeId {
        self.ids[name]
    }
}

fn trace_lstm(g: &mut Graph, tp: &TracedParams, prefix: &str, layer: usize, input: NodeId) -> Result<NodeId> {
    let w_ih = tp.id(&format!("{prefix}.layer{layer}.w_ih"));
    let w_hh = tp.id(&format!("{prefix}.layer{layer}.w_hh"));
    let bias = tp.id(&format!("{prefix}.layer{layer}.bias"));
    let hidden = g.value(w_hh).shape()[0];
    let t_len = g.value(input).dims2()?.0;

    let xw = g.matmul(input, w_ih)?;
    let xp = g.add_row(xw, bias)?;
    let mut h: Option<NodeId> = None;
    let mut c: Option<NodeId> = None;
    let mut outputs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let row = g.slice_rows(xp, t, t + 1)?;
        let pre = match h {
            None => row,
            Some(h_prev) => {
                let hw = g.matmul(h_prev, w_hh)?;
                g.add(row, hw)?
            }
        };
        let i_pre = g.slice_cols(pre, 0, hidden)?;
        let f_pre = g.slice_cols(pre, hidden, 2 * hidden)?;
        let c_pre = g.slice_cols(pre, 2 * hidden, 3 * hidden)?;
        let o_pre = g.slice_cols(pre, 3 * hidden, 4 * hidden)?;
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let cand = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let ic = g.mul(i, cand)?;
        // with a zero initial cell the forget term vanishes exactly
        let c_new = match c {
            None => ic,
            Some(c_prev) => {
                let fc = g.mul(f, c_prev)?;
                g.add(fc, ic)?
            }
        };
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        outputs.push(h_new);
        h = Some(h_new);
        c = Some(c_new);
    }
    g.concat_rows(&outputs)
}

impl RnntModel {
    /// Records encoder, predictor, joint and log-softmax; returns the
    /// T×(U+1)×V log-prob lattice node.
    pub(crate) fn trace_lattice(
        &self,
        g: &mut Graph,
        tp: &TracedParams,
        features: &Tensor,
        labels: &[usize],
    ) -> Result<NodeId> {
        self.check_labels(labels)?;
        let (t_len, d) = features.dims2()?;
        if d != self.config.input_dim {
            return Err(crate::Error::shape(
                "encode",
                features.shape(),
                &[t_len, self.config.input_dim],
            ));
        }
        let mut enc = g.constant(features.clone());
        for k in 0..self.config.encoder_layers {
            enc = trace_lstm(g, tp, "encoder", k, enc)?;
        }
        let mut pred = g.constant(self.predictor_inputs(labels));
        for k in 0..self.config.predictor_layers {
            pred = trace_lstm(g, tp, "predictor", k, pred)?;
        }
        let a = g.matmul(enc, tp.id("joint.w_enc"))?;
        let b = g.matmul(pred, tp.id("joint.w_pred"))?;
        let z = g.outer_add(a, b)?;
        let hidden = g.tanh(z);
        let proj = g.matmul(hidden, tp.id("output.weight"))?;
        let logits = g.add_row(proj, tp.id("output.bias"))?;
        let lp = g.log_softmax(logits)?;
        g.reshape(lp, &[t_len, labels.len() + 1, self.config.vocab_size])
    }

    /// Transducer NLL of one utterance and its gradient for every parameter
    /// (zeros for frozen ones).
    pub fn loss_and_grad(&self, features: &Tensor, labels: &[usize], frozen: &FreezeMask) -> Result<(f64, ParamSet)> {
        let mut g = Graph::new();
        let tp = TracedParams::new(&mut g, &self.params, frozen);
        let lattice = self.trace_lattice(&mut g, &tp, features, labels)?;
        let loss = g.transducer_nll(lattice, labels, self.config.blank_id)?;
        let nll = g.value(loss).item();
        let mut grads = g.backward(loss)?;
        let mut out = ParamSet::new();
        for (name, t) in self.params.iter() {
            out.insert(name.clone(), grads.take_or_zeros(tp.id(name), t.shape()));
        }
        Ok((nll, out))
    }

    /// Transducer NLL without gradients.
    pub fn loss(&self, features: &Tensor, labels: &[usize]) -> Result<f64> {
        let lattice = self.output_lattice(features, labels)?;
        Ok(crate::transducer::rnnt_loss(&lattice, labels, self.config.blank_id)?.nll)
    }
}
