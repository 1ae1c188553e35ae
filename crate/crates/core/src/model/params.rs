use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{read_checkpoint, write_checkpoint, Tape, Tensor, Var};

/// Named parameters in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` and
    /// returns its index.
    pub fn add_uniform(&mut self, name: String, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("positive shape"))
    }

    pub fn add(&mut self, name: String, value: Tensor) -> usize {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
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

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    /// Registers every parameter on `tape` as a tracked leaf.
    pub fn register<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    pub fn save<W: Write>(&self, w: W) -> std::io::Result<()> {
        let pairs: Vec<(String, Tensor)> = self
            .names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect();
        write_checkpoint(w, &pairs)
    }

    /// Overwrites values from a checkpoint; names and shapes must match.
    pub fn load_values<R: Read>(&mut self, r: R) -> Result<()> {
        let pairs = read_checkpoint(r)?;
        if pairs.len() != self.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} parameters, model expects {}",
                pairs.len(),
                self.len()
            )));
        }
        for (name, value) in pairs {
            let i = self
                .index_of(&name)
                .ok_or_else(|| Error::Data(format!("checkpoint parameter `{name}` is unknown to the model")))?;
            if value.shape() != self.tensors[i].shape() {
                return Err(Error::Dimension {
                    op: "load checkpoint",
                    lhs: self.tensors[i].shape().to_vec(),
                    rhs: value.shape().to_vec(),
                });
            }
            self.tensors[i] = value;
        }
        Ok(())
    }
}
