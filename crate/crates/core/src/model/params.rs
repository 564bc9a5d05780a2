use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tensor4};
use crate::scalar::Scalar;

/// One named weight: a conv kernel, a dense matrix or a bias vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Param<T> {
    Conv(Tensor4<T>),
    Matrix(Matrix<T>),
    Vector(Vec<T>),
}

impl<T: Scalar> Param<T> {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Param::Conv(t) => t.dims().to_vec(),
            Param::Matrix(m) => vec![m.rows(), m.cols()],
            Param::Vector(v) => vec![v.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[T] {
        match self {
            Param::Conv(t) => t.as_slice(),
            Param::Matrix(m) => m.as_slice(),
            Param::Vector(v) => v,
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        match self {
            Param::Conv(t) => t.as_mut_slice(),
            Param::Matrix(m) => m.as_mut_slice(),
            Param::Vector(v) => v,
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Param::Conv(t) => Param::Conv(Tensor4::zeros(t.dims())),
            Param::Matrix(m) => Param::Matrix(Matrix::zeros(m.rows(), m.cols())),
            Param::Vector(v) => Param::Vector(vec![T::zero(); v.len()]),
        }
    }

    /// Rebuilds a parameter from a shape and flat values (rank 4, 2 or 1).
    pub fn from_shape(shape: &[usize], data: Vec<T>) -> Result<Self> {
        match *shape {
            [n, c, h, w] => Ok(Param::Conv(Tensor4::from_vec([n, c, h, w], data)?)),
            [r, c] => Ok(Param::Matrix(Matrix::from_vec(r, c, data)?)),
            [n] if n == data.len() => Ok(Param::Vector(data)),
            _ => Err(Error::shape(format!(
                "unsupported parameter shape {shape:?} with {} values",
                data.len()
            ))),
        }
    }
}

/// Ordered name → weight map. Iteration order is insertion order and is the
/// order used by checkpoints and by the optimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams<T> {
    entries: IndexMap<String, Param<T>>,
}

/// Gradients share the parameter layout name-for-name.
pub type ParamGrads<T> = ModelParams<T>;

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Param<T>) {
        self.entries.insert(name.into(), p);
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
    }

    pub fn conv(&self, name: &str) -> Result<&Tensor4<T>> {
        match self.get(name)? {
            Param::Conv(t) => Ok(t),
            other => Err(Error::shape(format!("{name} is not a conv kernel: {:?}", other.shape()))),
        }
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix<T>> {
        match self.get(name)? {
            Param::Matrix(m) => Ok(m),
            other => Err(Error::shape(format!("{name} is not a matrix: {:?}", other.shape()))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[T]> {
        match self.get(name)? {
            Param::Vector(v) => Ok(v),
            other => Err(Error::shape(format!("{name} is not a vector: {:?}", other.shape()))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_parameters(&self) -> usize {
        self.entries.values().map(Param::len).sum()
    }

    pub fn count_where(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.iter().filter(|(n, _)| pred(n)).map(|(_, p)| p.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .values()
            .all(|p| p.as_slice().iter().all(|v| v.is_finite()))
    }

    /// Hash of names and shapes; two maps with equal fingerprints can share caches.
    pub fn layout_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, p) in &self.entries {
            name.hash(&mut h);
            p.shape().hash(&mut h);
        }
        h.finish()
    }

    /// Checks that `other` has the same names, order and shapes.
    pub fn ensure_aligned<U: Scalar>(&self, other: &ModelParams<U>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "parameter maps differ in size: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((a, pa), (b, pb)) in self.iter().zip(other.iter()) {
            if a != b || pa.shape() != pb.shape() {
                return Err(Error::shape(format!(
                    "parameter {a} {:?} does not align with {b} {:?}",
                    pa.shape(),
                    pb.shape()
                )));
            }
        }
        Ok(())
    }
}
