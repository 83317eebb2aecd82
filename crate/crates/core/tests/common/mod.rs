//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the library routine it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use geofair_core::autodiff::{Graph, NodeId};
use geofair_core::geo::{Axis, ClusterTree, GeoSample, Node};
use geofair_core::synth::{CorpusConfig, PartitionSizes, RegionProfile};
use geofair_core::train::{SuiteConfig, TrainConfig};
use geofair_core::{ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// |a − n| / max(|a|, |n|, floor).
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Σ W ⊙ x for a fixed pseudo-random W of x's shape, so every output entry
/// gets a distinct upstream gradient.
pub fn weighted_sum(g: &mut Graph, x: NodeId, seed: u64) -> NodeId {
    let shape = g.value(x).shape().to_vec();
    let w = uniform_tensor(&shape, -1.0, 1.0, &mut rng(seed));
    let w = g.constant(w);
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

/// Largest relative deviation between reverse-mode gradients and central
/// differences for a scalar function built from `inputs`.
pub fn graph_grad_error<F>(inputs: &[Tensor], build: F, h: f64, floor: f64) -> f64
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let eval = |ins: &[Tensor]| {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ins.iter().map(|t| g.param(t.clone())).collect();
        let root = build(&mut g, &ids);
        g.value(root).item()
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = build(&mut g, &ids);
    let grads = g.backward(root).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads
            .get(*id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + h;
            let up = eval(&probe);
            probe[k].data_mut()[i] = orig - h;
            let down = eval(&probe);
            probe[k].data_mut()[i] = orig;
            worst = worst.max(rel_err(analytic.data()[i], (up - down) / (2.0 * h), floor));
        }
    }
    worst
}

/// Random T×(U+1)×V lattice of normalized log-probabilities.
pub fn random_lattice(t: usize, u: usize, v: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut data = Vec::with_capacity(t * (u + 1) * v);
    for _ in 0..t * (u + 1) {
        let logits: Vec<f64> = (0..v).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        data.extend(logits.iter().map(|x| x - lse));
    }
    Tensor::new(vec![t, u + 1, v], data).unwrap()
}

/// Negative log of the summed probability of every alignment path, found by
/// explicit enumeration.
pub fn enumerate_nll(lattice: &Tensor, labels: &[usize], blank: usize) -> f64 {
    let s = lattice.shape();
    let (t_len, u1, v) = (s[0], s[1], s[2]);
    assert_eq!(u1, labels.len() + 1);
    let lp = |t: usize, u: usize, k: usize| lattice.data()[(t * u1 + u) * v + k];
    let mut scores = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn walk(
        t: usize,
        u: usize,
        acc: f64,
        t_len: usize,
        labels: &[usize],
        blank: usize,
        lp: &dyn Fn(usize, usize, usize) -> f64,
        out: &mut Vec<f64>,
    ) {
        if u < labels.len() {
            walk(t, u + 1, acc + lp(t, u, labels[u]), t_len, labels, blank, lp, out);
        }
        let b = acc + lp(t, u, blank);
        if t + 1 < t_len {
            walk(t + 1, u, b, t_len, labels, blank, lp, out);
        } else if u == labels.len() {
            out.push(b);
        }
    }
    walk(0, 0, 0.0, t_len, labels, blank, &lp, &mut scores);
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    -(m + scores.iter().map(|x| (x - m).exp()).sum::<f64>().ln())
}

/// Reference clustering tree, grown by the textbook recursion.
#[derive(Debug, Clone, PartialEq)]
pub enum RefTree {
    Leaf {
        wer: f64,
        devices: usize,
        n: usize,
    },
    Split {
        lon: bool,
        value: f64,
        left: Box<RefTree>,
        right: Box<RefTree>,
    },
}

fn ref_wer(s: &[GeoSample]) -> f64 {
    let e: usize = s.iter().map(|x| x.edit_errors).sum();
    let r: usize = s.iter().map(|x| x.ref_words).sum();
    if r == 0 {
        0.0
    } else {
        e as f64 / r as f64
    }
}

fn ref_devices(s: &[GeoSample]) -> usize {
    s.iter().map(|x| x.device_id.clone()).collect::<BTreeSet<_>>().len()
}

pub fn reference_tree(samples: &[GeoSample], min_devices: usize) -> RefTree {
    let mut best: Option<(bool, f64)> = None;
    let mut best_d = 0.0;
    for lon in [true, false] {
        let key = |x: &GeoSample| if lon { x.lon } else { x.lat };
        let mut coords: Vec<f64> = samples.iter().map(key).collect();
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = coords[(coords.len() - 1) / 2];
        let left: Vec<GeoSample> = samples.iter().filter(|x| key(x) < median).cloned().collect();
        let right: Vec<GeoSample> = samples.iter().filter(|x| key(x) >= median).cloned().collect();
        if ref_devices(&left) < min_devices || ref_devices(&right) < min_devices {
            continue;
        }
        let d = (ref_wer(&left) - ref_wer(&right)).powi(2);
        if d > best_d {
            best_d = d;
            best = Some((lon, median));
        }
    }
    match best {
        None => RefTree::Leaf {
            wer: ref_wer(samples),
            devices: ref_devices(samples),
            n: samples.len(),
        },
        Some((lon, value)) => {
            let key = |x: &GeoSample| if lon { x.lon } else { x.lat };
            let left: Vec<GeoSample> = samples.iter().filter(|x| key(x) < value).cloned().collect();
            let right: Vec<GeoSample> = samples.iter().filter(|x| key(x) >= value).cloned().collect();
            RefTree::Split {
                lon,
                value,
                left: Box::new(reference_tree(&left, min_devices)),
                right: Box::new(reference_tree(&right, min_devices)),
            }
        }
    }
}

pub fn ref_leaves(t: &RefTree) -> Vec<f64> {
    match t {
        RefTree::Leaf { wer, .. } => vec![*wer],
        RefTree::Split { left, right, .. } => {
            let mut v = ref_leaves(left);
            v.extend(ref_leaves(right));
            v
        }
    }
}

/// Leaf index (left-to-right) that a point falls into.
pub fn ref_route(t: &RefTree, lon: f64, lat: f64) -> usize {
    fn go(t: &RefTree, lon: f64, lat: f64, offset: usize) -> usize {
        match t {
            RefTree::Leaf { .. } => offset,
            RefTree::Split {
                lon: by_lon,
                value,
                left,
                right,
            } => {
                let c = if *by_lon { lon } else { lat };
                if c < *value {
                    go(left, lon, lat, offset)
                } else {
                    go(right, lon, lat, offset + ref_leaves(left).len())
                }
            }
        }
    }
    go(t, lon, lat, 0)
}

/// Structural equality between the library tree and the reference tree.
pub fn same_tree(lib: &ClusterTree, reference: &RefTree) -> bool {
    fn eq(n: &Node, r: &RefTree) -> bool {
        match (n, r) {
            (Node::Leaf(reg), RefTree::Leaf { wer, devices, n }) => {
                (reg.wer - wer).abs() <= 1e-12 && reg.device_count == *devices && reg.n_utterances == *n
            }
            (
                Node::Internal {
                    axis,
                    split_value,
                    left,
                    right,
                },
                RefTree::Split {
                    lon,
                    value,
                    left: rl,
                    right: rr,
                },
            ) => (*axis == Axis::Lon) == *lon && split_value == value && eq(left, rl) && eq(right, rr),
            _ => false,
        }
    }
    eq(&lib.root, reference)
}

/// Σ over leaves with held-out mass of |leaf WER − held-out WER|.
pub fn reference_cv_score(tree: &RefTree, held_out: &[GeoSample]) -> f64 {
    let leaves = ref_leaves(tree);
    let mut acc = vec![(0usize, 0usize); leaves.len()];
    for s in held_out {
        let i = ref_route(tree, s.lon, s.lat);
        acc[i].0 += s.edit_errors;
        acc[i].1 += s.ref_words;
    }
    leaves
        .iter()
        .zip(&acc)
        .filter(|(_, (_, w))| *w > 0)
        .map(|(l, (e, w))| (l - *e as f64 / *w as f64).abs())
        .sum()
}

/// Samples whose WER depends on a hidden 3×3 grid cell, plus noise.
pub fn structured_samples(n: usize, n_devices: usize, seed: u64) -> Vec<GeoSample> {
    let mut r = rng(seed);
    let cell_rate: Vec<f64> = (0..9).map(|_| r.random_range(0.02..0.5)).collect();
    let devices: Vec<(f64, f64)> = (0..n_devices)
        .map(|_| (r.random_range(-120.0..-70.0), r.random_range(25.0..49.0)))
        .collect();
    (0..n)
        .map(|i| {
            let d = r.random_range(0..n_devices);
            let (lon, lat) = devices[d];
            let cx = (((lon + 120.0) / 50.0 * 3.0) as usize).min(2);
            let cy = (((lat - 25.0) / 24.0 * 3.0) as usize).min(2);
            let refs = r.random_range(1..12usize);
            let errors = (0..refs).filter(|_| r.random_bool(cell_rate[cy * 3 + cx])).count();
            GeoSample {
                utterance_id: format!("u{i}"),
                device_id: format!("d{d}"),
                lon,
                lat,
                ref_words: refs,
                edit_errors: errors,
            }
        })
        .collect()
}

/// Uniformly scattered samples with coordinates on a coarse lattice so that
/// ties at the median are common.
pub fn random_samples(seed: u64) -> Vec<GeoSample> {
    let mut r = rng(seed);
    let n = r.random_range(1..200usize);
    let n_devices = r.random_range(1..40usize);
    (0..n)
        .map(|i| {
            let refs = r.random_range(1..10usize);
            GeoSample {
                utterance_id: format!("u{i}"),
                device_id: format!("d{}", r.random_range(0..n_devices)),
                lon: r.random_range(0..25) as f64 * 0.5,
                lat: r.random_range(0..25) as f64 * 0.5,
                ref_words: refs,
                edit_errors: r.random_range(0..=refs + 1),
            }
        })
        .collect()
}

/// Small end-to-end configuration that runs in seconds.
pub fn small_suite() -> SuiteConfig {
    let sigmas = [0.3, 0.5, 0.8, 1.2];
    let corpus = CorpusConfig {
        seed: 0,
        n_regions_planted: sigmas.len(),
        devices_per_region: 8,
        utterances_per_device: 20,
        vocab_size: 6,
        input_dim: 4,
        min_tokens: 2,
        max_tokens: 3,
        bigram_weight: 0.3,
        extent: [-10.0, 10.0, -5.0, 5.0],
        profiles: sigmas
            .iter()
            .map(|&noise_sigma| RegionProfile {
                noise_sigma,
                lexicon_skew: Vec::new(),
            })
            .collect(),
    };
    let model = ModelConfig {
        input_dim: 4,
        vocab_size: 6,
        blank_id: 0,
        encoder_layers: 2,
        encoder_hidden: 8,
        predictor_layers: 1,
        predictor_hidden: 8,
        joint_hidden: 8,
    };
    let pretrain = TrainConfig {
        steps: 30,
        batch_size: 6,
        lr_initial: 5e-3,
        lr_after_drop: 1e-3,
        lr_drop_step: 20,
        ..TrainConfig::desk()
    };
    let finetune = TrainConfig {
        steps: 15,
        lr_initial: 2e-3,
        lr_after_drop: 5e-4,
        lr_drop_step: 10,
        ..pretrain.clone()
    };
    SuiteConfig {
        corpus,
        partition: PartitionSizes {
            tree: 160,
            dev: 20,
            test: 100,
        },
        pretrain_budget: 200,
        finetune_budget: 80,
        model,
        pretrain,
        finetune,
        lambda: 1.0,
        fisher_examples: 40,
        threshold: 3,
        folds: 3,
        max_symbols_per_frame: 3,
    }
}
