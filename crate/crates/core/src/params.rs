//! Named parameter collections.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// An ordered set of named tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index. Names must be unique.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same names, same shapes.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn check_layout(&self, other: &ParamSet, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what}: parameter layout differs")))
        }
    }
}

/// Parameters registered as leaves on one graph.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn bind(graph: &mut Graph, params: &ParamSet) -> Self {
        Bound {
            vars: params.tensors.iter().map(|t| graph.param(t.clone())).collect(),
        }
    }

    /// Binds parameters as constants: no gradients are tracked.
    pub fn frozen(graph: &mut Graph, params: &ParamSet) -> Self {
        Bound {
            vars: params.tensors.iter().map(|t| graph.constant(t.clone())).collect(),
        }
    }

    pub fn var(&self, idx: usize) -> Var {
        self.vars[idx]
    }

    /// Gradients for every parameter; parameters the pass never reached get
    /// zeros.
    pub fn grads(&self, graph: &Graph, params: &ParamSet) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| graph.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect()
    }
}
