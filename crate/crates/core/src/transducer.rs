//! Transducer (RNN-T) negative log-likelihood over a fully materialized
//! T×(U+1)×V lattice of log-probabilities.
//!
//! A path starts at (0, 0); a blank moves (t, u) → (t+1, u) and the next
//! label moves (t, u) → (t, u+1). Every complete path ends with the blank
//! emitted at (T−1, U).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Step size used by [`loss_grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

const MAX_ENUMERATED_PATHS: u128 = 100_000;

#[derive(Clone, Debug)]
pub struct LossResult {
    pub nll: f64,
    /// d nll / d lattice, same shape as the input lattice.
    pub lattice_grad: Tensor,
}

/// Saturating log(exp(a) + exp(b)).
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

struct LatticeView<'a> {
    data: &'a [f64],
    t_len: usize,
    u_len: usize,
    vocab: usize,
}

impl LatticeView<'_> {
    #[inline]
    fn at(&self, t: usize, u: usize, k: usize) -> f64 {
        self.data[(t * self.u_len + u) * self.vocab + k]
    }

    #[inline]
    fn index(&self, t: usize, u: usize, k: usize) -> usize {
        (t * self.u_len + u) * self.vocab + k
    }
}

fn view<'a>(lattice: &'a Tensor, labels: &[usize], blank: usize) -> Result<LatticeView<'a>> {
    let &[t_len, u_len, vocab] = lattice.shape() else {
        return Err(Error::contract(format!(
            "lattice must be T×(U+1)×V, got shape {:?}",
            lattice.shape()
        )));
    };
    if t_len == 0 {
        return Err(Error::contract("lattice has no frames"));
    }
    if u_len != labels.len() + 1 {
        return Err(Error::contract(format!(
            "lattice has {u_len} label positions but {} labels were given",
            labels.len()
        )));
    }
    if blank >= vocab {
        return Err(Error::contract(format!("blank id {blank} outside vocabulary {vocab}")));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y == blank || y >= vocab) {
        return Err(Error::contract(format!(
            "label {bad} is blank or outside vocabulary {vocab}"
        )));
    }
    Ok(LatticeView {
        data: lattice.data(),
        t_len,
        u_len,
        vocab,
    })
}

/// Forward variables α(t, u) in log space, row-major T×(U+1).
fn forward_vars(lv: &LatticeView, labels: &[usize], blank: usize) -> Vec<f64> {
    let (tn, un) = (lv.t_len, lv.u_len);
    let mut alpha = vec![f64::NEG_INFINITY; tn * un];
    for t in 0..tn {
        for u in 0..un {
            if t == 0 && u == 0 {
                alpha[0] = 0.0;
                continue;
            }
            let from_blank = if t > 0 {
                alpha[(t - 1) * un + u] + lv.at(t - 1, u, blank)
            } else {
                f64::NEG_INFINITY
            };
            let from_label = if u > 0 {
                alpha[t * un + u - 1] + lv.at(t, u - 1, labels[u - 1])
            } else {
                f64::NEG_INFINITY
            };
            alpha[t * un + u] = log_add(from_blank, from_label);
        }
    }
    alpha
}

/// Backward variables β(t, u): log-probability of completing the
/// transcription from (t, u), final blank included.
fn backward_vars(lv: &LatticeView, labels: &[usize], blank: usize) -> Vec<f64> {
    let (tn, un) = (lv.t_len, lv.u_len);
    let mut beta = vec![f64::NEG_INFINITY; tn * un];
    for t in (0..tn).rev() {
        for u in (0..un).rev() {
            if t == tn - 1 && u == un - 1 {
                beta[t * un + u] = lv.at(t, u, blank);
                continue;
            }
            let via_blank = if t + 1 < tn {
                beta[(t + 1) * un + u] + lv.at(t, u, blank)
            } else {
                f64::NEG_INFINITY
            };
            let via_label = if u + 1 < un {
                beta[t * un + u + 1] + lv.at(t, u, labels[u])
            } else {
                f64::NEG_INFINITY
            };
            beta[t * un + u] = log_add(via_blank, via_label);
        }
    }
    beta
}

pub fn rnnt_loss(log_lattice: &Tensor, labels: &[usize], blank: usize) -> Result<LossResult> {
    let lv = view(log_lattice, labels, blank)?;
    let (tn, un) = (lv.t_len, lv.u_len);
    let alpha = forward_vars(&lv, labels, blank);
    let log_p = alpha[tn * un - 1] + lv.at(tn - 1, un - 1, blank);

    let mut grad = Tensor::zeros(log_lattice.shape());
    if log_p == f64::NEG_INFINITY {
        return Ok(LossResult {
            nll: f64::INFINITY,
            lattice_grad: grad,
        });
    }
    let beta = backward_vars(&lv, labels, blank);
    let g = grad.data_mut();
    for t in 0..tn {
        for u in 0..un {
            let a = alpha[t * un + u];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let blank_next = if t + 1 < tn {
                beta[(t + 1) * un + u]
            } else if u == un - 1 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            if blank_next > f64::NEG_INFINITY {
                g[lv.index(t, u, blank)] = -(a + lv.at(t, u, blank) + blank_next - log_p).exp();
            }
            if u + 1 < un {
                let y = labels[u];
                let b = beta[t * un + u + 1];
                if b > f64::NEG_INFINITY {
                    g[lv.index(t, u, y)] = -(a + lv.at(t, u, y) + b - log_p).exp();
                }
            }
        }
    }
    Ok(LossResult {
        nll: -log_p,
        lattice_grad: grad,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Test oracle: explicit enumeration of every monotone alignment path.
pub fn brute_force_nll(log_lattice: &Tensor, labels: &[usize], blank: usize) -> Result<f64> {
    let lv = view(log_lattice, labels, blank)?;
    let (tn, un) = (lv.t_len, lv.u_len);
    let paths = binomial((tn - 1 + un - 1) as u128, (un - 1) as u128);
    if paths > MAX_ENUMERATED_PATHS {
        return Err(Error::contract(format!(
            "{paths} alignment paths exceed the enumeration limit of {MAX_ENUMERATED_PATHS}"
        )));
    }

    let mut scores = Vec::with_capacity(paths as usize);
    let mut stack = vec![(0usize, 0usize, 0.0f64)];
    while let Some((t, u, acc)) = stack.pop() {
        if t == tn - 1 && u == un - 1 {
            scores.push(acc + lv.at(t, u, blank));
            continue;
        }
        if t + 1 < tn {
            stack.push((t + 1, u, acc + lv.at(t, u, blank)));
        }
        if u + 1 < un {
            stack.push((t, u + 1, acc + lv.at(t, u, labels[u])));
        }
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(-lse)
}

/// Central finite differences on every lattice entry against the analytic
/// lattice gradient; returns the largest relative deviation.
pub fn loss_grad_check(log_lattice: &Tensor, labels: &[usize], blank: usize) -> Result<f64> {
    let analytic = rnnt_loss(log_lattice, labels, blank)?.lattice_grad;
    let mut probe = log_lattice.clone();
    let mut worst: f64 = 0.0;
    for i in 0..probe.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + GRAD_CHECK_STEP;
        let up = rnnt_loss(&probe, labels, blank)?.nll;
        probe.data_mut()[i] = orig - GRAD_CHECK_STEP;
        let down = rnnt_loss(&probe, labels, blank)?.nll;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        diff
    } else {
        diff / scale
    }
}
