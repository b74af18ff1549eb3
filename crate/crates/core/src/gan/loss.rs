use super::{GanError, Result};
use crate::neural::{l1_loss, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DLoss {
    pub loss: f64,
    pub d_real: Vec<f32>,
    pub d_fake: Vec<f32>,
}

/// Hinge discriminator loss `E[max(0, 1 − D(y))] + E[max(0, 1 + D(G(x)))]`
/// with its gradients w.r.t. the scores.
pub fn d_loss(real: &[f32], fake: &[f32]) -> Result<DLoss> {
    if real.is_empty() || fake.is_empty() {
        return Err(GanError::Shape(
            "discriminator scores must be nonempty".into(),
        ));
    }
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let lr: f64 = real.iter().map(|&s| (1.0 - s as f64).max(0.0)).sum::<f64>() / nr;
    let lf: f64 = fake.iter().map(|&s| (1.0 + s as f64).max(0.0)).sum::<f64>() / nf;
    let d_real = real
        .iter()
        .map(|&s| if s < 1.0 { -1.0 / nr as f32 } else { 0.0 })
        .collect();
    let d_fake = fake
        .iter()
        .map(|&s| if s > -1.0 { 1.0 / nf as f32 } else { 0.0 })
        .collect();
    Ok(DLoss {
        loss: lr + lf,
        d_real,
        d_fake,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GLoss {
    /// `−α1·E[D(G(x))] + α2·L1`.
    pub total: f64,
    /// `−E[D(G(x))]`, before weighting; 0 when no scores are given.
    pub adversarial: f64,
    /// Mean absolute error, before weighting.
    pub l1: f64,
    pub d_scores: Vec<f32>,
    pub d_output: Tensor,
}

/// Generator objective. `fake_scores` may be empty when `alpha1 == 0`.
pub fn g_loss(
    fake_scores: &[f32],
    output: &Tensor,
    target: &Tensor,
    alpha1: f64,
    alpha2: f64,
) -> Result<GLoss> {
    let (l1, mut d_output) = l1_loss(output, target)?;
    d_output.scale(alpha2 as f32);
    let (adversarial, d_scores) = if fake_scores.is_empty() {
        if alpha1 != 0.0 {
            return Err(GanError::Shape(
                "adversarial term needs discriminator scores".into(),
            ));
        }
        (0.0, Vec::new())
    } else {
        let n = fake_scores.len() as f64;
        let mean = fake_scores.iter().map(|&s| s as f64).sum::<f64>() / n;
        (-mean, vec![(-alpha1 / n) as f32; fake_scores.len()])
    };
    Ok(GLoss {
        total: alpha1 * adversarial + alpha2 * l1,
        adversarial,
        l1,
        d_scores,
        d_output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_values() {
        assert_eq!(d_loss(&[1.0], &[-1.0]).unwrap().loss, 0.0);
        assert_eq!(d_loss(&[0.0], &[0.0]).unwrap().loss, 2.0);
        let l = d_loss(&[5.0], &[-5.0]).unwrap();
        assert_eq!(l.loss, 0.0);
        assert_eq!(l.d_real, vec![0.0]);
        assert!(d_loss(&[], &[0.0]).is_err());
    }

    #[test]
    fn generator_objective() {
        let y = Tensor::full([1, 1, 2, 2, 2], 0.5);
        let gx = Tensor::full([1, 1, 2, 2, 2], 0.7);
        let l = g_loss(&[0.5], &gx, &y, 1.0, 5e-3).unwrap();
        assert!((l.total - (-0.499)).abs() < 1e-9);
        let same = g_loss(&[0.0], &y, &y, 1.0, 5e-3).unwrap();
        assert_eq!(same.total, 0.0);
        let cnn = g_loss(&[], &gx, &y, 0.0, 5e-3).unwrap();
        assert_eq!(cnn.total, 5e-3 * l1_loss(&gx, &y).unwrap().0);
        assert!(g_loss(&[], &gx, &y, 1.0, 5e-3).is_err());
    }
}
