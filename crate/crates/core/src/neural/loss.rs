use super::{Result, Tensor};

/// Mean absolute difference and its (sub)gradient with respect to `a`.
///
/// The subgradient is 0 where `a == b`.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    a.check_same_shape(b, "l1_loss")?;
    let n = a.len() as f64;
    let mut grad = Tensor::zeros(a.shape());
    let mut sum = 0.0f64;
    let g = (1.0 / n) as f32;
    for ((d, &x), &y) in grad.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        let diff = x - y;
        sum += diff.abs() as f64;
        *d = if diff > 0.0 {
            g
        } else if diff < 0.0 {
            -g
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let a = Tensor::from_vec([1, 1, 1, 1, 2], vec![0.0, 0.0]).unwrap();
        let b = Tensor::from_vec([1, 1, 1, 1, 2], vec![1.0, -1.0]).unwrap();
        let (l, g) = l1_loss(&a, &b).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.data(), &[-0.5, 0.5]);
        let (l, g) = l1_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let c = Tensor::zeros([1, 1, 1, 1, 3]);
        assert!(l1_loss(&a, &c).is_err());
    }
}
