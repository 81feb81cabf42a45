use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter::new(name, value));
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.scale_in_place(factor);
        }
    }
}

/// Plain SGD: `value -= lr * grad` for every parameter, then zero the grads.
///
/// The step is all-or-nothing: if any gradient is non-finite no parameter is
/// touched and the offending name is reported.
pub fn sgd_step(params: &mut ParamStore, lr: f64) -> Result<()> {
    if let Some(bad) = params.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite gradient in parameter {}",
            bad.name
        )));
    }
    for p in params.iter_mut() {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
    }
    params.zero_grads();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::scalar(value)).unwrap();
        store.get_mut(id).grad = Tensor::scalar(grad);
        store
    }

    #[test]
    fn sgd_basic_step() {
        let mut store = single(5.0, 2.0);
        sgd_step(&mut store, 0.1).unwrap();
        let p = store.by_name("w").unwrap();
        assert!((p.value.data()[0] - 4.8).abs() < 1e-15);
        assert_eq!(p.grad.data(), &[0.0]);
    }

    #[test]
    fn sgd_zero_lr_keeps_values() {
        let mut store = single(5.0, 2.0);
        sgd_step(&mut store, 0.0).unwrap();
        assert_eq!(store.by_name("w").unwrap().value.data(), &[5.0]);
    }

    #[test]
    fn sgd_two_steps_on_quadratic() {
        // loss (w - 3)^2, grad 2(w - 3): 0 -> 1.5 -> 2.25 at lr 0.25
        let mut store = single(0.0, 0.0);
        let id = store.id("w").unwrap();
        let mut seen = Vec::new();
        for _ in 0..2 {
            let w = store.get(id).value.data()[0];
            store.get_mut(id).grad = Tensor::scalar(2.0 * (w - 3.0));
            sgd_step(&mut store, 0.25).unwrap();
            seen.push(store.get(id).value.data()[0]);
        }
        assert_eq!(seen, vec![1.5, 2.25]);
    }

    #[test]
    fn sgd_rejects_non_finite_grads() {
        let mut store = single(1.0, f64::NAN);
        let err = sgd_step(&mut store, 0.1).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(store.by_name("w").unwrap().value.data(), &[1.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(0.0)).unwrap();
        assert!(store.insert("a", Tensor::scalar(1.0)).is_err());
    }
}
