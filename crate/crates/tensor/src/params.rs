use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::tape::Gradients;
use crate::{Scalar, Tensor};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Accumulated gradient; `None` until a backward pass reaches the parameter.
    pub grad: Option<Vec<T>>,
}

/// Ordered collection of named learnable tensors.
///
/// Names are dotted paths such as `block0.attn.wq`; insertion order is the
/// canonical order for checksums, archives and optimizer state.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a parameter. Panics on a duplicate name, which is a model
    /// construction bug.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        let id = ParamId(self.params.len());
        let prev = self.index.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate parameter `{name}`");
        self.params.push(Param {
            name,
            value,
            grad: None,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds the parameter gradients of a backward pass into the stored grads.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (id, g) in grads.params() {
            let p = &mut self.params[id.0];
            match &mut p.grad {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + *b),
                None => p.grad = Some(g.to_vec()),
            }
        }
    }

    /// Resets every gradient to zero (keeping it initialized).
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Some(vec![T::zero(); p.value.len()]);
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn grad_norm(&self) -> T {
        self.params
            .iter()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|v| *v * *v)
            .sum::<T>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: T) -> T {
        let norm = self.grad_norm();
        if norm > max_norm {
            let k = max_norm / norm;
            for g in self.params.iter_mut().filter_map(|p| p.grad.as_mut()) {
                g.iter_mut().for_each(|v| *v = *v * k);
            }
        }
        norm
    }

    /// Copies all values from `other`, which must have identical names and shapes.
    pub fn copy_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        self.check_compatible(other)?;
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }

    pub fn check_compatible<U: Scalar>(&self, other: &ParamSet<U>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(TensorError::Contract {
                op: "param_set",
                detail: format!("{} parameters vs {}", self.params.len(), other.params.len()),
            });
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(TensorError::Contract {
                    op: "param_set",
                    detail: format!(
                        "`{}` {:?} vs `{}` {:?}",
                        a.name,
                        a.value.shape(),
                        b.name,
                        b.value.shape()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p
                        .grad
                        .as_ref()
                        .map(|g| g.iter().map(|v| U::from_f64(v.as_f64())).collect()),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// FNV-1a over names, shapes and the raw bits of every value.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for p in &self.params {
            bytes.extend_from_slice(p.name.as_bytes());
            for d in p.value.shape() {
                bytes.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                v.write_le(&mut bytes);
            }
        }
        fnv1a(&bytes)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
