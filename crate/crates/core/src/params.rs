use std::collections::BTreeMap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::spec::NetworkSpec;
use crate::tensor::{format_shape, Tensor};

/// Named parameter (or gradient) tensors, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(BTreeMap<String, Tensor>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.0.get(name).ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.0.insert(name.into(), tensor)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.0.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.0.retain(|k, _| keep(k));
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.0.values().map(Tensor::len).sum()
    }

    /// Checks that the set holds exactly the parameters of `spec`, with matching shapes.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.param_shapes();
        for (name, shape) in &expected {
            let t = self.require(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(name, format_shape(shape), format_shape(t.shape())));
            }
        }
        if self.len() != expected.len() {
            let extra = self.names().find(|n| !expected.iter().any(|(e, _)| e == n)).unwrap_or_default().to_string();
            return Err(Error::KeyMismatch(extra));
        }
        Ok(())
    }
}

impl FromIterator<(String, Tensor)> for Params {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl IntoIterator for Params {
    type Item = (String, Tensor);
    type IntoIter = std::collections::btree_map::IntoIter<String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// He-uniform weight for one layer: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
///
/// Each tensor draws from its own stream keyed by its name, so adding or
/// removing a layer never changes the initialization of the others.
pub fn he_uniform(name: &str, shape: &[usize], fan_in: usize, seed: u64) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt() as f32;
    let mut rng = rng::rng_from(rng::derive(seed, name));
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// He-uniform weights and zero biases for every parameterized layer in `spec`.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Params {
    let mut params = Params::new();
    for layer in spec.layers() {
        if let (Some((w, b)), Some(fan_in)) = (layer.kind.param_shapes(), layer.kind.fan_in()) {
            let weight = layer.weight_name();
            params.insert(weight.clone(), he_uniform(&weight, &w, fan_in, seed));
            params.insert(layer.bias_name(), Tensor::zeros(&b));
        }
    }
    params
}
