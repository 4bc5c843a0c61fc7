//! Named trainable tensors with seeded initialization and safetensors I/O.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Parameters keyed by dotted name. Iteration order is the sorted name
/// order, which fixes the optimizer's variable order across runs.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    /// Zero-mean normal initialization with standard deviation `std`.
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        self.insert(name, data, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.insert(name, vec![value; n], shape)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, data, shape)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrites one parameter in place, keeping its shape.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        if var.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "`{name}` has shape {:?}, got {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&tensors, path)?;
        Ok(())
    }

    /// Loads every registered parameter from a safetensors file. Names
    /// absent from the file are an error unless `allow_missing`.
    pub fn load(&self, path: &Path, allow_missing: bool) -> Result<Vec<String>> {
        self.load_with_aliases(path, allow_missing, |_| Vec::new())
    }

    /// Like [`ParamStore::load`], but tries `aliases(name)` in order when a
    /// name is absent. Returns the names left unset.
    pub fn load_with_aliases<F>(&self, path: &Path, allow_missing: bool, aliases: F) -> Result<Vec<String>>
    where
        F: Fn(&str) -> Vec<String>,
    {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let tensors = candle_core::safetensors::load(path, &self.device)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut missing = Vec::new();
        for name in self.vars.keys() {
            let found = tensors
                .get(name)
                .or_else(|| aliases(name).iter().find_map(|a| tensors.get(a)));
            match found {
                Some(t) => self.set(name, t)?,
                None if allow_missing => missing.push(name.clone()),
                None => {
                    return Err(Error::Checkpoint(format!(
                        "{} has no tensor `{name}`",
                        path.display()
                    )))
                }
            }
        }
        Ok(missing)
    }
}
