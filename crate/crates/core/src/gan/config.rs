use serde::{Deserialize, Serialize};

use super::{GanError, Result};
use crate::neural::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_resblocks: usize,
    pub channels: usize,
    /// Fixed at 2: thick 2.0 mm input to thin 1.0 mm output.
    pub z_upsample_factor: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_resblocks: 8,
            channels: 32,
            z_upsample_factor: 2,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z_upsample_factor != 2 {
            return Err(GanError::Config(format!(
                "z_upsample_factor must be 2, got {}",
                self.z_upsample_factor
            )));
        }
        if self.n_resblocks == 0 {
            return Err(GanError::Config(
                "generator needs at least one residual block".into(),
            ));
        }
        if self.channels == 0 {
            return Err(GanError::Config(
                "generator channels must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub n_downsample_stages: usize,
    /// Channels of the first stage; each later stage doubles them.
    pub base_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            n_downsample_stages: 3,
            base_channels: 32,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_downsample_stages == 0 {
            return Err(GanError::Config(
                "discriminator needs at least one stage".into(),
            ));
        }
        if self.base_channels == 0 {
            return Err(GanError::Config(
                "discriminator channels must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn stage_channels(&self) -> Vec<usize> {
        (0..self.n_downsample_stages)
            .map(|i| self.base_channels << i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the adversarial term; 0 trains the L1-only CNN baseline.
    pub alpha1: f64,
    /// Weight of the L1 content term.
    pub alpha2: f64,
    pub d_g_ratio: usize,
    pub batch_size: usize,
    pub iterations: u64,
    /// Input patch (D, H, W); the reference patch is (2D, H, W).
    pub patch_dims: [usize; 3],
    pub seed: u64,
    /// Minimum fraction of body voxels for a patch to be accepted.
    pub body_fraction: f64,
    pub body_threshold_hu: f32,
    pub val_every: u64,
    pub checkpoint_every: u64,
    pub spectral_iters: usize,
    /// Inference tile (D, H, W) used for validation volumes.
    pub val_tile: [usize; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_g: 1e-5,
            lr_d: 1e-5,
            beta1: 0.5,
            beta2: 0.999,
            alpha1: 1.0,
            alpha2: 5e-3,
            d_g_ratio: 1,
            batch_size: 4,
            iterations: 2000,
            patch_dims: [8, 32, 32],
            seed: 0,
            body_fraction: 0.25,
            body_threshold_hu: -500.0,
            val_every: 100,
            checkpoint_every: 100,
            spectral_iters: 1,
            val_tile: [16, 64, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(GanError::Config(format!(
                "loss weights must be nonnegative, got alpha1={} alpha2={}",
                self.alpha1, self.alpha2
            )));
        }
        if self.alpha1 == 0.0 && self.alpha2 == 0.0 {
            return Err(GanError::Config("alpha1 and alpha2 are both zero".into()));
        }
        if self.d_g_ratio == 0 || self.batch_size == 0 {
            return Err(GanError::Config(
                "d_g_ratio and batch_size must be positive".into(),
            ));
        }
        if self.patch_dims.contains(&0) {
            return Err(GanError::Config(format!(
                "empty patch {:?}",
                self.patch_dims
            )));
        }
        if !(0.0..=1.0).contains(&self.body_fraction) {
            return Err(GanError::Config(format!(
                "body fraction must lie in [0, 1], got {}",
                self.body_fraction
            )));
        }
        self.adam_g().validate()?;
        self.adam_d().validate()?;
        Ok(())
    }

    /// Whether a discriminator takes part in training.
    pub fn adversarial(&self) -> bool {
        self.alpha1 > 0.0
    }

    pub fn adam_g(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_g,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    pub fn adam_d(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_d,
            ..self.adam_g()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        GeneratorConfig::default().validate().unwrap();
        DiscriminatorConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
        assert_eq!(
            DiscriminatorConfig::default().stage_channels(),
            vec![32, 64, 128]
        );
    }

    #[test]
    fn invalid_configs() {
        let g = GeneratorConfig {
            n_resblocks: 0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = GeneratorConfig {
            z_upsample_factor: 3,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let d = DiscriminatorConfig {
            n_downsample_stages: 0,
            ..Default::default()
        };
        assert!(d.validate().is_err());
        let t = TrainConfig {
            alpha1: -1.0,
            ..Default::default()
        };
        assert!(t.validate().is_err());
    }
}
