use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named model weights. Names are hierarchical (`encoder.layer0.w_ih`) and
/// iterate in lexicographic order, which fixes the serialization order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Option<Tensor> {
        self.entries.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    /// Like [`get`](Self::get) but a missing name is a schema error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Errors naming the first parameter whose presence or shape differs.
    pub fn check_same_schema(&self, other: &ParamSet) -> Result<()> {
        for (name, t) in &self.entries {
            match other.entries.get(name) {
                None => return Err(Error::Schema(format!("parameter {name} missing from other set"))),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Schema(format!(
                        "parameter {name}: shape {:?} vs {:?}",
                        t.shape(),
                        o.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = other.entries.keys().find(|k| !self.entries.contains_key(*k)) {
            return Err(Error::Schema(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    /// self += c · other, entry by entry.
    pub fn axpy(&mut self, c: f64, other: &ParamSet) -> Result<()> {
        self.check_same_schema(other)?;
        for (name, t) in self.entries.iter_mut() {
            let o = &other.entries[name];
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += c * b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.entries.values_mut() {
            t.scale_assign(c);
        }
    }

    /// Flat concatenation in name order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in self.entries.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in &self.entries {
            t.check_finite().map_err(|e| Error::NonFinite(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

/// Parameter name → shape for a configuration.
pub fn param_shapes(config: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
    let mut shapes = BTreeMap::new();
    let mut lstm = |prefix: &str, layers: usize, input: usize, hidden: usize| {
        for k in 0..layers {
            let in_dim = if k == 0 { input } else { hidden };
            shapes.insert(format!("{prefix}.layer{k}.w_ih"), vec![in_dim, 4 * hidden]);
            shapes.insert(format!("{prefix}.layer{k}.w_hh"), vec![hidden, 4 * hidden]);
            shapes.insert(format!("{prefix}.layer{k}.bias"), vec![4 * hidden]);
        }
    };
    lstm(
        "encoder",
        config.encoder_layers,
        config.input_dim,
        config.encoder_hidden,
    );
    lstm(
        "predictor",
        config.predictor_layers,
        config.vocab_size,
        config.predictor_hidden,
    );
    shapes.insert("joint.w_enc".into(), vec![config.encoder_hidden, config.joint_hidden]);
    shapes.insert(
        "joint.w_pred".into(),
        vec![config.predictor_hidden, config.joint_hidden],
    );
    shapes.insert("output.weight".into(), vec![config.joint_hidden, config.vocab_size]);
    shapes.insert("output.bias".into(), vec![config.vocab_size]);
    shapes
}

pub fn zero_params(config: &ModelConfig) -> ParamSet {
    let mut p = ParamSet::new();
    for (name, shape) in param_shapes(config) {
        p.insert(name, Tensor::zeros(&shape));
    }
    p
}

/// Uniform in ±1/√fan_in; LSTM forget-gate biases start at 1.
pub fn init_params(config: &ModelConfig, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    for (name, shape) in param_shapes(config) {
        let fan_in = if shape.len() == 2 {
            shape[0]
        } else if name.starts_with("output") {
            config.joint_hidden
        } else {
            shape[0] / 4
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let mut data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        if name.ends_with(".bias") && !name.starts_with("output") {
            let h = n / 4;
            data[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        }
        p.insert(name, Tensor::new(shape, data).expect("shape from config"));
    }
    p
}

/// Errors if `params` does not have exactly the layout `config` implies.
pub fn check_params(config: &ModelConfig, params: &ParamSet) -> Result<()> {
    let expected = param_shapes(config);
    for (name, shape) in &expected {
        let t = params.require(name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Schema(format!(
                "parameter {name} has shape {:?}, config implies {shape:?}",
                t.shape()
            )));
        }
    }
    if let Some(extra) = params.names().find(|n| !expected.contains_key(*n)) {
        return Err(Error::Schema(format!("unexpected parameter {extra}")));
    }
    Ok(())
}
