//! Ordered, named parameter collections with checkpoint serialization.

use super::io::{read_t2np_file, write_t2np_file};
use super::{Elem, Tensor};
use std::io;
use std::path::Path;

/// Named parameter collection for one network. Order is the registration
/// order and stays stable across save/load, which keeps optimizer moment
/// slots index-aligned.
pub struct ParamSet<E: Elem = f32> {
    entries: Vec<(String, Tensor<E>)>,
}

impl<E: Elem> Default for ParamSet<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> ParamSet<E> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<E>) {
        let name = name.into();
        assert!(
            self.get(&name).is_none(),
            "duplicate parameter name '{name}'"
        );
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<E>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Parameter handles in registration order.
    pub fn tensors(&self) -> Vec<Tensor<E>> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }
}

impl ParamSet<f32> {
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let buffers: Vec<(String, Vec<usize>, Vec<f32>)> = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec(), t.to_vec()))
            .collect();
        let refs: Vec<(&str, &[usize], &[f32])> = buffers
            .iter()
            .map(|(n, d, v)| (n.as_str(), d.as_slice(), v.as_slice()))
            .collect();
        write_t2np_file(path, &refs)
    }

    /// Load values into this set's existing tensors, matching by name.
    /// Tensor identity is preserved so optimizer slots stay valid.
    pub fn load_from(&self, path: &Path) -> io::Result<()> {
        let entries = read_t2np_file(path)?;
        if entries.len() != self.entries.len() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "checkpoint has {} entries, network has {}",
                    entries.len(),
                    self.entries.len()
                ),
            ));
        }
        for (name, dims, values) in &entries {
            let target = self.get(name).ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("checkpoint entry '{name}' has no matching parameter"),
                )
            })?;
            if target.shape() != dims.as_slice() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!(
                        "checkpoint entry '{name}' has dims {dims:?}, expected {:?}",
                        target.shape()
                    ),
                ));
            }
            target
                .set_data(values)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        }
        Ok(())
    }
}
