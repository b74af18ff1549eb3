use super::spectral::SpectralState;
use super::Tensor;

/// Trainable tensor with its gradient buffer, Adam moments and optional
/// spectral-norm state.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub spectral: Option<SpectralState>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(shape),
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            spectral: None,
        }
    }

    pub fn with_spectral(mut self, state: SpectralState) -> Self {
        self.spectral = Some(state);
        self
    }

    pub fn shape(&self) -> [usize; 5] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate(&mut self, g: &[f32]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (a, b) in self.grad.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }
}
