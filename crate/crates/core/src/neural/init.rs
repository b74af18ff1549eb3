use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;

/// He-style normal initialisation, `std = gain·sqrt(2 / fan_in)`, where
/// `fan_in` is the product of all but the leading axis.
pub fn he_normal(shape: [usize; 5], gain: f32, rng: &mut impl Rng) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let std = gain * (2.0 / fan_in.max(1) as f32).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| std * rng.sample::<f32, _>(StandardNormal))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
