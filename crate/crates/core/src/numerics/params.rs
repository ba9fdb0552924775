use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

/// Adam moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    pub adam: Option<AdamState>,
}

/// Named trainable arrays, kept in insertion order.
///
/// Insertion order is part of the checkpoint format, so two stores built by
/// the same code path serialize to identical bytes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "param_insert" });
        }
        let grad = Tensor::new(value.shape().to_vec(), vec![0.0; value.len()])?;
        self.entries.insert(name, ParamEntry { value, grad, adam: None });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.entries.get_index_of(name).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries.get(name).map(|e| &e.value).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.entries.get(name).map(|e| &e.grad).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let entry = self.entries.get_mut(name).ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                left: entry.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        entry.value = value.finite("set_value")?;
        Ok(())
    }

    pub(crate) fn value_at(&self, index: usize) -> &Tensor {
        &self.entries[index].value
    }

    pub(crate) fn value_at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].value
    }

    pub(crate) fn accumulate_grad(&mut self, index: usize, grad: &Tensor) {
        self.entries[index].grad.add_assign(grad);
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn total_parameter_count(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries.values().map(|e| e.grad.sum_of_squares()).sum::<f64>().sqrt()
    }

    /// Rescale all gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let scale = max_norm / norm;
            for e in self.entries.values_mut() {
                e.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    /// Set every value to zero (used for fixed-point checks).
    pub fn zero_values(&mut self) {
        for e in self.entries.values_mut() {
            e.value.data_mut().fill(0.0);
        }
    }

    /// SHA-256 over names, shapes and value bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, e) in &self.entries {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for &d in e.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in e.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_duplicates() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(64, 128)).unwrap();
        s.insert("b", Tensor::zeros(1, 128)).unwrap();
        assert_eq!(s.total_parameter_count(), 8320);
        assert!(matches!(s.insert("w", Tensor::zeros(1, 1)), Err(Error::DuplicateParam(_))));
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(1, 2)).unwrap();
        s.accumulate_grad(0, &Tensor::row(&[30.0, 40.0]));
        assert_eq!(s.clip_grad_norm(5.0), 50.0);
        let g = s.grad("w").unwrap().data();
        assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] - 4.0).abs() < 1e-12);
    }
}
