use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use sha1::{Digest, Sha1};

use super::graph::{Gradients, Graph};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Identity of a [`ParamStore`] inside a gradient graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StoreId(u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Initial weights are drawn from `uniform(-INIT_RANGE, INIT_RANGE)`.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    value: Tensor,
    grad: Option<Tensor>,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

/// Named parameters with gradients and per-parameter Adam state.
#[derive(Clone, Debug)]
pub struct ParamStore {
    id: StoreId,
    slots: Vec<Slot>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: StoreId(NEXT_STORE.fetch_add(1, Ordering::Relaxed)),
            slots: Vec::new(),
        }
    }

    pub fn id(&self) -> StoreId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let n = value.len();
        self.slots.push(Slot {
            name: name.into(),
            value,
            grad: None,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        });
        ParamId(self.slots.len() - 1)
    }

    /// Weight matrix initialised uniformly in `±INIT_RANGE`.
    pub fn add_uniform<R: Rng>(&mut self, name: &str, shape: &[usize], rng: &mut R) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("init shape"))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.slots.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id.0].grad.as_ref()
    }

    pub fn step_count(&self, id: ParamId) -> u64 {
        self.slots[id.0].step
    }

    pub fn set_grad(&mut self, id: ParamId, grad: Tensor) -> Result<()> {
        let slot = &mut self.slots[id.0];
        if grad.len() != slot.value.len() {
            return Err(Error::shape(format!(
                "gradient for {} has {} values, parameter has {}",
                slot.name,
                grad.len(),
                slot.value.len()
            )));
        }
        slot.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for slot in &mut self.slots {
            slot.grad = None;
        }
    }

    /// Adds the gradients of every graph leaf bound to this store. Parameters
    /// the loss did not reach receive an explicit zero gradient.
    pub fn accumulate(&mut self, graph: &Graph, grads: &Gradients) {
        for slot in &mut self.slots {
            if slot.grad.is_none() {
                slot.grad = Some(Tensor::zeros(slot.value.shape()));
            }
        }
        for &(node, store, param) in graph.param_nodes() {
            if store != self.id {
                continue;
            }
            if let Some(g) = grads.get(node) {
                let dst = self.slots[param.0].grad.as_mut().expect("initialised above");
                dst.data_mut().iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.slots
            .iter()
            .filter_map(|s| s.grad.as_ref())
            .map(Tensor::norm_sq)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for g in self.slots.iter_mut().filter_map(|s| s.grad.as_mut()) {
                g.data_mut().iter_mut().for_each(|v| *v *= k);
            }
        }
        norm
    }

    /// One Adam step on every parameter, then clears the gradients.
    pub fn adam_update(&mut self, learning_rate: f64, cfg: &AdamConfig) -> Result<()> {
        if let Some(slot) = self.slots.iter().find(|s| s.grad.is_none()) {
            return Err(Error::contract(format!("missing gradient for {}", slot.name)));
        }
        for slot in &mut self.slots {
            let grad = slot.grad.take().expect("checked above");
            slot.step += 1;
            let t = slot.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            let values = slot.value.data_mut();
            for (i, &g) in grad.data().iter().enumerate() {
                let m = cfg.beta1 * slot.first_moment[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * slot.second_moment[i] + (1.0 - cfg.beta2) * g * g;
                slot.first_moment[i] = m;
                slot.second_moment[i] = v;
                let update = learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
                values[i] -= update;
            }
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    /// Content hash over names, shapes and exact bit patterns of all values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha1::new();
        for slot in &self.slots {
            h.update(slot.name.as_bytes());
            for d in slot.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in slot.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copies values from `other`, matching parameters by name and shape.
    pub fn load_values(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        for (name, value) in other {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
            if self.value(id).shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    self.value(id).shape(),
                    value.shape()
                )));
            }
            *self.value_mut(id) = value.clone();
        }
        Ok(())
    }

    pub fn named_values(&self) -> Vec<(String, Tensor)> {
        self.slots
            .iter()
            .map(|s| (s.name.clone(), s.value.clone()))
            .collect()
    }
}
