//! Named parameter store with deterministic enumeration order.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// One trainable tensor with a unique path-style name.
#[derive(Clone)]
pub struct Parameter {
    pub tensor: Tensor,
    pub trainable: bool,
    /// Weight decay applies to matrices only, not biases or norm gains.
    pub decay: bool,
}

/// Parameters keyed by name; iteration is lexicographic by name.
#[derive(Default)]
pub struct ParamStore {
    params: BTreeMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, decay: bool) {
        let prev = self.params.insert(
            name.to_string(),
            Parameter {
                tensor,
                trainable: true,
                decay,
            },
        );
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .tensor
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.params.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&self) {
        for p in self.params.values() {
            p.tensor.zero_grad();
        }
    }

    /// Glorot-uniform matrix parameter.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Tensor::param(data, &[rows, cols]), true);
    }

    /// Zero-initialized bias vector.
    pub fn zeros(&mut self, name: &str, dim: usize) {
        self.insert(name, Tensor::param(vec![0.0; dim], &[dim]), false);
    }

    /// Layer-norm gain (ones) and bias (zeros) pair.
    pub fn layer_norm_pair(&mut self, prefix: &str, dim: usize) {
        self.insert(
            &format!("{prefix}.gain"),
            Tensor::param(vec![1.0; dim], &[dim]),
            false,
        );
        self.insert(
            &format!("{prefix}.bias"),
            Tensor::param(vec![0.0; dim], &[dim]),
            false,
        );
    }
}
