use super::{NumError, Tape, Tensor, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named, gradient-carrying parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    grads_ready: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let t = if tensor.requires_grad() { tensor } else { tensor.with_grad() };
        self.entries.push((name.into(), t));
        ParamId(self.entries.len() - 1)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Adds the tape gradients of `bound` (as returned by [`Tape::bind`]) into
    /// each parameter's accumulator.
    pub fn accumulate(&mut self, tape: &Tape, bound: &[Var]) -> Result<(), NumError> {
        if bound.len() != self.entries.len() {
            return Err(NumError::State(format!(
                "{} bound vars for {} parameters",
                bound.len(),
                self.entries.len()
            )));
        }
        for ((_, t), v) in self.entries.iter_mut().zip(bound) {
            if let (Some(acc), Some(g)) = (t.grad_mut(), tape.grad(*v)) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        self.grads_ready = true;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
        self.grads_ready = false;
    }

    /// True once gradients were accumulated since the last [`ParamStore::zero_grad`].
    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    /// Marks manually written gradient accumulators as populated.
    pub fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Replaces the values of an existing parameter, keeping its accumulator.
    pub fn set(&mut self, id: ParamId, data: Vec<f64>) -> Result<(), NumError> {
        let t = &mut self.entries[id.0].1;
        if data.len() != t.len() {
            return Err(NumError::Dimension(format!("set: {} values for {:?}", data.len(), t.shape())));
        }
        t.set_data(data);
        Ok(())
    }
}
