use std::collections::HashMap;

use rand::Rng;

use super::{GanError, Result};
use crate::neural::{
    conv3d_backward, conv3d_forward, he_normal, ConvGeometry, NamedTensor, Parameter, Tensor,
};

/// 3D convolution with bias.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvLayer {
    pub weight: Parameter,
    pub bias: Parameter,
    pub geom: ConvGeometry,
}

impl ConvLayer {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        geom: ConvGeometry,
        gain: f32,
        rng: &mut impl Rng,
    ) -> Self {
        ConvLayer {
            weight: Parameter::new(
                format!("{name}.weight"),
                he_normal([cout, cin, 3, 3, 3], gain, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros([cout, 1, 1, 1, 1])),
            geom,
        }
    }

    /// Forward pass; `weight` overrides the stored weight (spectral norm).
    pub fn forward_with(&self, x: &Tensor, weight: &Tensor) -> Result<Tensor> {
        Ok(conv3d_forward(
            x,
            weight,
            Some(self.bias.value.data()),
            self.geom,
        )?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(x, &self.weight.value)
    }

    /// Accumulates `dW·weight_scale` and `db`; returns `dx`.
    pub fn backward_with(
        &mut self,
        x: &Tensor,
        weight: &Tensor,
        dout: &Tensor,
        weight_scale: f32,
    ) -> Result<Tensor> {
        let g = conv3d_backward(x, weight, dout, self.geom)?;
        if weight_scale == 1.0 {
            self.weight.accumulate(g.dw.data());
        } else {
            let scaled: Vec<f32> = g.dw.data().iter().map(|v| v * weight_scale).collect();
            self.weight.accumulate(&scaled);
        }
        self.bias.accumulate(&g.db);
        Ok(g.dx)
    }

    pub fn backward(&mut self, x: &Tensor, dout: &Tensor) -> Result<Tensor> {
        let w = self.weight.value.clone();
        self.backward_with(x, &w, dout, 1.0)
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }
}

fn dims5(t: &Tensor) -> Vec<usize> {
    t.shape().to_vec()
}

/// Appends value, Adam moments and spectral vector of `p`.
pub(crate) fn export_param(p: &Parameter, out: &mut Vec<NamedTensor>) {
    out.push(NamedTensor::new(
        p.name.clone(),
        dims5(&p.value),
        p.value.data().to_vec(),
    ));
    out.push(NamedTensor::new(
        format!("{}.adam_m", p.name),
        dims5(&p.m),
        p.m.data().to_vec(),
    ));
    out.push(NamedTensor::new(
        format!("{}.adam_v", p.name),
        dims5(&p.v),
        p.v.data().to_vec(),
    ));
    if let Some(s) = &p.spectral {
        out.push(NamedTensor::new(
            format!("{}.sn_u", p.name),
            vec![s.u.len()],
            s.u.clone(),
        ));
    }
}

pub(crate) fn import_param(p: &mut Parameter, map: &HashMap<&str, &NamedTensor>) -> Result<()> {
    let shape = p.value.shape();
    let fetch = |name: &str, dims: &[usize]| -> Result<Vec<f32>> {
        let t = map
            .get(name)
            .ok_or_else(|| GanError::Checkpoint(format!("missing tensor `{name}`")))?;
        if t.dims != dims {
            return Err(GanError::Checkpoint(format!(
                "`{name}` has dims {:?}, model expects {dims:?}",
                t.dims
            )));
        }
        Ok(t.data.clone())
    };
    let name = p.name.clone();
    p.value = Tensor::from_vec(shape, fetch(&name, &shape)?)?;
    p.m = Tensor::from_vec(shape, fetch(&format!("{name}.adam_m"), &shape)?)?;
    p.v = Tensor::from_vec(shape, fetch(&format!("{name}.adam_v"), &shape)?)?;
    p.grad.fill(0.0);
    if let Some(s) = p.spectral.as_mut() {
        s.u = fetch(&format!("{name}.sn_u"), &[s.u.len()])?;
    }
    Ok(())
}

pub(crate) fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

pub(crate) fn relu_backward(x: &Tensor, dout: &Tensor) -> Tensor {
    let mut d = dout.clone();
    for (g, &v) in d.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

/// Repeats every depth slice `factor` times.
pub(crate) fn upsample_z_nearest(x: &Tensor, factor: usize) -> Tensor {
    let [n, c, d, h, w] = x.shape();
    let plane = h * w;
    let mut out = Vec::with_capacity(x.len() * factor);
    for nc in 0..n * c {
        for z in 0..d {
            let src = &x.data()[(nc * d + z) * plane..(nc * d + z + 1) * plane];
            for _ in 0..factor {
                out.extend_from_slice(src);
            }
        }
    }
    Tensor::from_vec([n, c, d * factor, h, w], out).expect("length matches")
}
