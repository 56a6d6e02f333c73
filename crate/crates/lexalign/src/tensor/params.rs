//! Named parameter collection with stable iteration order.

use super::tape::{NodeId, Tape};
use super::{Real, Tensor};
use std::collections::HashMap;

/// Parameters keyed by name; iteration follows insertion order so that
/// checkpoints, optimizer state, and initialization are all reproducible.
#[derive(Clone, Debug)]
pub struct Params<T> {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> Default for Params<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Params { names: Vec::new(), index: HashMap::new(), values: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|n| n.as_str())
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let mut out = Params::new();
        for (n, v) in self.iter() {
            out.insert(n, v.cast());
        }
        out
    }

    /// Insert every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> ParamNodes {
        let mut map = HashMap::with_capacity(self.values.len());
        for (n, v) in self.iter() {
            map.insert(n.to_string(), tape.leaf(v.clone(), requires_grad));
        }
        ParamNodes { map }
    }
}

/// Tape handles of bound parameters.
pub struct ParamNodes {
    map: HashMap<String, NodeId>,
}

impl ParamNodes {
    pub fn id(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.map.iter().map(|(n, &id)| (n.as_str(), id))
    }

    /// Gradients present on the tape after backward, keyed by name.
    /// Parameters the loss never touched are absent.
    pub fn collect_grads<T: Real>(
        &self,
        tape: &Tape<T>,
    ) -> std::collections::BTreeMap<String, Tensor<T>> {
        let mut out = std::collections::BTreeMap::new();
        for (name, &id) in self.map.iter() {
            if let Some(g) = tape.grad(id) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}
