use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{export_param, import_param, ConvLayer};
use super::{DiscriminatorConfig, GanError, Result};
use crate::neural::{
    global_avg_pool, global_avg_pool_backward, he_normal, leaky_relu, leaky_relu_backward, linear,
    linear_backward, spectral_normalize, ConvGeometry, NamedTensor, Parameter, SpectralState,
    Tensor,
};

const SLOPE: f32 = 0.2;

/// Strided conv stack with spectral norm on every weight, global average
/// pooling and a linear scalar head. Scores are unbounded (hinge loss).
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    convs: Vec<ConvLayer>,
    head_w: Parameter,
    head_b: Parameter,
}

/// Spectrally normalized weights for one training step.
#[derive(Debug, Clone)]
pub struct EffectiveWeights {
    convs: Vec<Tensor>,
    head: Tensor,
    sigmas: Vec<f32>,
}

impl EffectiveWeights {
    /// σ used for each weight, head last.
    pub fn sigmas(&self) -> &[f32] {
        &self.sigmas
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.convs.iter().chain(std::iter::once(&self.head))
    }
}

#[derive(Debug, Clone)]
pub struct DiscForward {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    pooled: Vec<f32>,
    feature_shape: [usize; 5],
}

const WARM_START_POWER_ITERS: usize = 20;

pub fn build_discriminator(cfg: DiscriminatorConfig, seed: u64) -> Result<Discriminator> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = ConvGeometry::new(2, 1);
    let mut cin = 1;
    let mut convs = Vec::new();
    for (i, cout) in cfg.stage_channels().into_iter().enumerate() {
        let mut layer = ConvLayer::new(&format!("d.stage{i}"), cin, cout, geom, 1.0, &mut rng);
        layer.weight.spectral = Some(SpectralState::random(cout, &mut rng));
        convs.push(layer);
        cin = cout;
    }
    let head_w = Parameter::new("d.head.weight", he_normal([1, cin, 1, 1, 1], 1.0, &mut rng))
        .with_spectral(SpectralState::random(1, &mut rng));
    let head_b = Parameter::new("d.head.bias", Tensor::zeros([1, 1, 1, 1, 1]));
    let mut d = Discriminator {
        cfg,
        convs,
        head_w,
        head_b,
    };
    // converge u up front so single-iteration training steps start accurate
    d.effective_weights(WARM_START_POWER_ITERS)?;
    Ok(d)
}

impl Discriminator {
    pub fn config(&self) -> DiscriminatorConfig {
        self.cfg
    }

    /// Runs `power_iters` power iterations per weight and returns `W/σ`.
    pub fn effective_weights(&mut self, power_iters: usize) -> Result<EffectiveWeights> {
        let mut convs = Vec::with_capacity(self.convs.len());
        let mut sigmas = Vec::with_capacity(self.convs.len() + 1);
        for l in &mut self.convs {
            convs.push(spectral_normalize(&mut l.weight, power_iters)?);
            sigmas.push(l.weight.spectral.as_ref().expect("spectral state").sigma);
        }
        let head = spectral_normalize(&mut self.head_w, power_iters)?;
        sigmas.push(self.head_w.spectral.as_ref().expect("spectral state").sigma);
        Ok(EffectiveWeights {
            convs,
            head,
            sigmas,
        })
    }

    /// One score per batch element.
    pub fn forward(&self, x: &Tensor, eff: &EffectiveWeights) -> Result<(Vec<f32>, DiscForward)> {
        if x.channels() != 1 {
            return Err(GanError::Shape(format!(
                "discriminator expects one input channel, got shape {:?}",
                x.shape()
            )));
        }
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        for (l, w) in self.convs.iter().zip(&eff.convs) {
            let z = l.forward_with(&h, w)?;
            let a = leaky_relu(&z, SLOPE);
            inputs.push(std::mem::replace(&mut h, a));
            pre.push(z);
        }
        let pooled = global_avg_pool(&h);
        let scores = linear(
            &pooled,
            x.batch(),
            eff.head.data(),
            self.head_b.value.data()[0],
        );
        Ok((
            scores,
            DiscForward {
                inputs,
                pre,
                pooled,
                feature_shape: h.shape(),
            },
        ))
    }

    /// Accumulates parameter gradients for `dscores` and returns `∂L/∂x`.
    ///
    /// σ is treated as a constant, so `∂L/∂W = (∂L/∂W_eff) / σ`.
    pub fn backward(
        &mut self,
        cache: &DiscForward,
        eff: &EffectiveWeights,
        dscores: &[f32],
    ) -> Result<Tensor> {
        let (dpooled, dw, db) = linear_backward(&cache.pooled, eff.head.data(), dscores);
        let head_scale = 1.0 / eff.sigmas[self.convs.len()];
        let dw: Vec<f32> = dw.iter().map(|v| v * head_scale).collect();
        self.head_w.accumulate(&dw);
        self.head_b.accumulate(&[db]);
        let mut d = global_avg_pool_backward(cache.feature_shape, &dpooled)?;
        for i in (0..self.convs.len()).rev() {
            let dz = leaky_relu_backward(&cache.pre[i], &d, SLOPE)?;
            d = self.convs[i].backward_with(
                &cache.inputs[i],
                &eff.convs[i],
                &dz,
                1.0 / eff.sigmas[i],
            )?;
        }
        Ok(d)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v: Vec<&Parameter> = self.convs.iter().flat_map(|l| l.params()).collect();
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = Vec::new();
        for l in &mut self.convs {
            v.extend(l.params_mut());
        }
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }

    /// Spectrally normalized parameters.
    pub fn spectral_params(&self) -> Vec<&Parameter> {
        self.params()
            .into_iter()
            .filter(|p| p.spectral.is_some())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    pub fn export(&self, out: &mut Vec<NamedTensor>) {
        for p in self.params() {
            export_param(p, out);
        }
    }

    pub fn import(&mut self, map: &HashMap<&str, &NamedTensor>) -> Result<()> {
        for p in self.params_mut() {
            import_param(p, map)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_score_per_sample() {
        let mut d = build_discriminator(
            DiscriminatorConfig {
                n_downsample_stages: 2,
                base_channels: 4,
            },
            3,
        )
        .unwrap();
        let eff = d.effective_weights(20).unwrap();
        let x = Tensor::full([3, 1, 8, 8, 8], 0.5);
        let (s, _) = d.forward(&x, &eff).unwrap();
        assert_eq!(s.len(), 3);
        assert!(d
            .params()
            .iter()
            .filter(|p| p.name.ends_with("weight"))
            .all(|p| p.spectral.is_some()));
    }

    #[test]
    fn zero_stages_rejected() {
        let cfg = DiscriminatorConfig {
            n_downsample_stages: 0,
            base_channels: 4,
        };
        assert!(build_discriminator(cfg, 0).is_err());
    }
}
