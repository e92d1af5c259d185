use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Dense 64-bit tensor of rank 1 or 2 with an optional gradient slot.
///
/// Storage is always two-dimensional; a rank-1 tensor of length `k` is held
/// as a `1 x k` row so the graph operations only deal with matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let (r, c) = storage_dims(shape);
        Self {
            shape: shape.to_vec(),
            value: Array2::zeros((r, c)),
            grad: None,
        }
    }

    pub fn from_matrix(value: Array2<f64>) -> Self {
        Self {
            shape: vec![value.nrows(), value.ncols()],
            value,
            grad: None,
        }
    }

    pub fn from_vector(values: Vec<f64>) -> Self {
        let k = values.len();
        Self {
            shape: vec![k],
            value: Array2::from_shape_vec((1, k), values).expect("row vector"),
            grad: None,
        }
    }

    pub fn from_shape_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::Checkpoint(format!("unsupported rank {}", shape.len())));
        }
        let (r, c) = storage_dims(shape);
        let actual = values.len();
        let value = Array2::from_shape_vec((r, c), values).map_err(|_| Error::ShapeMismatch {
            context: "tensor construction",
            expected: shape.to_vec(),
            actual: vec![actual],
        })?;
        Ok(Self {
            shape: shape.to_vec(),
            value,
            grad: None,
        })
    }

    /// Glorot-style uniform draw in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit));
        Self::from_matrix(value)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn value(&self) -> &Array2<f64> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Array2<f64> {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Array2<f64>> {
        self.grad.as_ref()
    }

    pub fn set_grad(&mut self, grad: Array2<f64>) -> Result<()> {
        if grad.dim() != self.value.dim() {
            return Err(Error::ShapeMismatch {
                context: "gradient",
                expected: vec![self.value.nrows(), self.value.ncols()],
                actual: vec![grad.nrows(), grad.ncols()],
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Values in row-major order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.value.iter().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
    }
}

fn storage_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [k] => (1, *k),
        [r, c] => (*r, *c),
        _ => panic!("tensors are rank 1 or 2, got {shape:?}"),
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, tensor));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn at(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar weights and biases.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in &mut self.entries {
            t.clear_grad();
        }
    }
}
