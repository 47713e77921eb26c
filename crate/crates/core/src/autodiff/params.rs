use std::collections::BTreeMap;

use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a parameter inside a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named model parameters with matching gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Gradients,
    by_name: BTreeMap<String, ParamId>,
    step: u64,
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Gradients::default(),
            by_name: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape().to_vec()));
        self.names.push(name.to_string());
        self.values.push(value);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a parameter drawn from uniform(-scale, scale).
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId, TensorError> {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        self.add(name, t)
    }

    /// Redraws every parameter from uniform(-scale, scale) in registration order.
    pub fn reinit_uniform<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        for t in &mut self.values {
            for v in t.data_mut() {
                *v = rng.gen_range(-scale..scale);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grads(&self) -> &Gradients {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Gradients {
        &mut self.grads
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Fresh zeroed gradient buffers shaped like this store.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients(self.values.iter().map(|v| Tensor::zeros(v.shape().to_vec())).collect())
    }

    /// Folds externally computed gradients into the store's accumulators.
    pub fn accumulate(&mut self, other: &Gradients) {
        self.grads.add_assign(other);
    }

    /// One SGD step on the accumulated gradients, which are scaled by `scale`
    /// and clipped to `clip` global L2 norm first. Returns the pre-clip norm.
    pub fn sgd_update(&mut self, lr: f64, scale: f64, clip: Option<f64>) -> f64 {
        let norm = self.grads.l2_norm() * scale.abs();
        let mut factor = scale;
        if let Some(max) = clip {
            if norm > max {
                factor *= max / norm;
            }
        }
        for (value, grad) in self.values.iter_mut().zip(self.grads.0.iter()) {
            for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
                *v -= lr * factor * g;
            }
        }
        self.grads.zero();
        self.step += 1;
        norm
    }

    /// Parameters in registration order, for serialisation.
    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Overwrites every parameter from `tensors`; names and shapes must match exactly.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<(), TensorError> {
        if tensors.len() != self.values.len() {
            return Err(TensorError::ParamCount {
                expected: self.values.len(),
                found: tensors.len(),
            });
        }
        for (name, t) in tensors {
            let id = self.id(name).ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
            if self.values[id.0].shape() != t.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load",
                    left: self.values[id.0].shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            self.values[id.0] = t.clone();
        }
        Ok(())
    }
}

/// Per-parameter gradient buffers, indexed like the owning store.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients(Vec<Tensor>);

impl Gradients {
    fn push(&mut self, t: Tensor) {
        self.0.push(t);
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub(crate) fn slot(&mut self, id: ParamId) -> &mut [f64] {
        self.0[id.0].data_mut()
    }

    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }
}
