use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Rng, Tensor};

/// Handle to one named tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// On-disk checkpoint layout: `{"format": "vln-params/1", "params": [{"name", "shape", "values"}, ...]}`.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "vln-params/1";

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(ParamId(id))
    }

    /// Registers a tensor initialised from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut Rng,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.insert(name, Tensor::uniform(shape, bound, rng))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries over all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Sets every entry of every tensor to `value`.
    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.values_mut().iter_mut().for_each(|v| *v = value);
        }
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds per-parameter gradients into the tensors' grad slots.
    pub fn accumulate_grads(&mut self, grads: &super::Gradients) -> Result<()> {
        for id in self.ids().collect::<Vec<_>>() {
            if let Some(g) = grads.param(id) {
                self.tensors[id.0].accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Shifts one scalar entry in place; used by finite-difference checks.
    pub fn nudge(&mut self, id: ParamId, entry: usize, delta: f64) {
        self.tensors[id.0].values_mut()[entry] += delta;
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            params: self
                .iter()
                .map(|(_, name, t)| CheckpointEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.values().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| Error::Validation(format!("checkpoint encode: {e}")))?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|source| Error::Parse { line: 1, source })?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported checkpoint format {:?}",
                file.format
            )));
        }
        let mut store = ParamStore::new();
        for entry in file.params {
            store.insert(entry.name, Tensor::new(&entry.shape, entry.values)?)?;
        }
        Ok(store)
    }

    /// Copies values from `other` for every name both stores share, checking shapes.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let Some(src) = other.id(name) else {
                return Err(Error::Validation(format!("checkpoint lacks {name:?}")));
            };
            let src = other.get(src);
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::shape(format!(
                    "{name}: checkpoint shape {:?} vs model {:?}",
                    src.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = Rng::new(3);
        let mut store = ParamStore::new();
        store.init_uniform("a.w", &[3, 4], 3, &mut rng).unwrap();
        store.init_uniform("a.b", &[4], 3, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        store.save(&path).unwrap();
        let back = ParamStore::load(&path).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::zeros(&[1])).unwrap();
        assert!(store.insert("x", Tensor::zeros(&[1])).is_err());
    }
}
