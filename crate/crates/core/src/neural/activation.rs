use super::{NeuralError, Result, Tensor};

/// `x` for `x >= 0`, `slope·x` otherwise. A slope of 0 gives ReLU.
pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
    debug_assert!((0.0..1.0).contains(&slope));
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

pub fn leaky_relu_backward(x: &Tensor, dout: &Tensor, slope: f32) -> Result<Tensor> {
    if x.shape() != dout.shape() {
        return Err(NeuralError::Shape(format!(
            "leaky_relu backward: {:?} vs {:?}",
            x.shape(),
            dout.shape()
        )));
    }
    let mut dx = dout.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v < 0.0 {
            *g *= slope;
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition() {
        let x = Tensor::from_vec([1, 1, 1, 1, 3], vec![2.0, -1.0, 0.0]).unwrap();
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.data(), &[2.0, -0.2, 0.0]);
        let g = Tensor::full([1, 1, 1, 1, 3], 1.0);
        let dx = leaky_relu_backward(&x, &g, 0.2).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.2, 1.0]);
        assert_eq!(leaky_relu(&x, 0.0).data(), &[2.0, 0.0, 0.0]);
    }
}
