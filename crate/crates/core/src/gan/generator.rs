use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    export_param, import_param, relu, relu_backward, upsample_z_nearest, ConvLayer,
};
use super::{GanError, GeneratorConfig, Result};
use crate::neural::{z_downshuffle, z_upshuffle, ConvGeometry, NamedTensor, Parameter, Tensor};

const OUTPUT_GAIN: f32 = 0.1;

#[derive(Debug, Clone, PartialEq)]
struct ResBlock {
    conv1: ConvLayer,
    conv2: ConvLayer,
}

/// EDSR-style generator mapping `(N, 1, D, H, W)` to `(N, 1, 2D, H, W)`.
///
/// head → residual blocks (+ head skip) → tail (2C channels) → z up-shuffle →
/// output conv, plus a nearest-neighbour z up-sampled copy of the input, so
/// the network learns a residual on top of the thick-slice volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    cfg: GeneratorConfig,
    head: ConvLayer,
    blocks: Vec<ResBlock>,
    tail: ConvLayer,
    out: ConvLayer,
}

/// Activations kept from [`Generator::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct GeneratorCache {
    x: Tensor,
    block_in: Vec<Tensor>,
    block_mid: Vec<Tensor>,
    block_act: Vec<Tensor>,
    body: Tensor,
    up: Tensor,
}

pub fn build_generator(cfg: GeneratorConfig, seed: u64) -> Result<Generator> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.channels;
    let same = ConvGeometry::same(3);
    let head = ConvLayer::new("g.head", 1, c, same, 1.0, &mut rng);
    let blocks = (0..cfg.n_resblocks)
        .map(|i| ResBlock {
            conv1: ConvLayer::new(&format!("g.block{i}.conv1"), c, c, same, 1.0, &mut rng),
            conv2: ConvLayer::new(&format!("g.block{i}.conv2"), c, c, same, 1.0, &mut rng),
        })
        .collect();
    let tail = ConvLayer::new("g.tail", c, 2 * c, same, 1.0, &mut rng);
    let out = ConvLayer::new("g.out", c, 1, same, OUTPUT_GAIN, &mut rng);
    Ok(Generator {
        cfg,
        head,
        blocks,
        tail,
        out,
    })
}

impl Generator {
    pub fn config(&self) -> GeneratorConfig {
        self.cfg
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != 1 {
            return Err(GanError::Shape(format!(
                "generator expects one input channel, got shape {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, GeneratorCache)> {
        self.check_input(x)?;
        let h = self.head.forward(x)?;
        let mut a = h.clone();
        let mut block_in = Vec::with_capacity(self.blocks.len());
        let mut block_mid = Vec::with_capacity(self.blocks.len());
        let mut block_act = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let t1 = b.conv1.forward(&a)?;
            let r = relu(&t1);
            let t2 = b.conv2.forward(&r)?;
            let next = a.add(&t2)?;
            block_in.push(a);
            block_mid.push(t1);
            block_act.push(r);
            a = next;
        }
        a.add_assign(&h)?;
        let t = self.tail.forward(&a)?;
        let up = z_upshuffle(&t)?;
        let mut y = self.out.forward(&up)?;
        y.add_assign(&upsample_z_nearest(x, 2))?;
        let cache = GeneratorCache {
            x: x.clone(),
            block_in,
            block_mid,
            block_act,
            body: a,
            up,
        };
        Ok((y, cache))
    }

    /// Forward pass without keeping activations.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let h = self.head.forward(x)?;
        let mut a = h.clone();
        for b in &self.blocks {
            let r = relu(&b.conv1.forward(&a)?);
            a.add_assign(&b.conv2.forward(&r)?)?;
        }
        a.add_assign(&h)?;
        let up = z_upshuffle(&self.tail.forward(&a)?)?;
        let mut y = self.out.forward(&up)?;
        y.add_assign(&upsample_z_nearest(x, 2))?;
        Ok(y)
    }

    /// Accumulates parameter gradients for `dout = ∂L/∂G(x)`.
    pub fn backward(&mut self, cache: &GeneratorCache, dout: &Tensor) -> Result<()> {
        let d_up = self.out.backward(&cache.up, dout)?;
        let d_t = z_downshuffle(&d_up)?;
        let d_body = self.tail.backward(&cache.body, &d_t)?;
        let mut d_a = d_body.clone();
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            let d_r = b.conv2.backward(&cache.block_act[i], &d_a)?;
            let d_t1 = relu_backward(&cache.block_mid[i], &d_r);
            let d_in = b.conv1.backward(&cache.block_in[i], &d_t1)?;
            d_a.add_assign(&d_in)?;
        }
        d_a.add_assign(&d_body)?;
        self.head.backward(&cache.x, &d_a)?;
        Ok(())
    }

    fn layers(&self) -> Vec<&ConvLayer> {
        let mut v = vec![&self.head];
        for b in &self.blocks {
            v.push(&b.conv1);
            v.push(&b.conv2);
        }
        v.push(&self.tail);
        v.push(&self.out);
        v
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.layers().into_iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = Vec::new();
        v.extend(self.head.params_mut());
        for b in &mut self.blocks {
            v.extend(b.conv1.params_mut());
            v.extend(b.conv2.params_mut());
        }
        v.extend(self.tail.params_mut());
        v.extend(self.out.params_mut());
        v
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
