//! Flat parameter storage with named tensor views.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// How a tensor is initialised.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Const(f64),
}

/// All network parameters in one contiguous buffer. Gradients and optimiser
/// moments use buffers of the same length and layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub data: Vec<f64>,
    pub tensors: Vec<TensorInfo>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Appends a tensor and returns its offset.
    pub fn alloc(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        assert!(
            self.tensors.iter().all(|t| t.name != name),
            "duplicate tensor name {name}"
        );
        let offset = self.data.len();
        let len: usize = shape.iter().product();
        match init {
            Init::Glorot { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                self.data.extend((0..len).map(|_| rng.random_range(-a..=a)));
            }
            Init::Const(c) => self.data.extend(std::iter::repeat_n(c, len)),
        }
        self.tensors.push(TensorInfo {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        });
        offset
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.find(name).map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.find(name)?.range();
        Some(&mut self.data[r])
    }
}
