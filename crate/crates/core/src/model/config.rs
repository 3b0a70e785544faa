use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architectural hyperparameters of the transformer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub in_channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub layer_norm_eps: f64,
    /// Reserved; only 0 is supported.
    #[serde(default)]
    pub dropout: f64,
}

impl ViTConfig {
    /// ViT-Base, patch 16, 224×224 input.
    pub fn base(num_classes: usize) -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            in_channels: 3,
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            mlp_ratio: 4,
            num_classes,
            layer_norm_eps: 1e-6,
            dropout: 0.0,
        }
    }

    /// 32×32 input, patch 8, width 16, two blocks of two heads.
    pub fn tiny(num_classes: usize) -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            in_channels: 3,
            embed_dim: 16,
            depth: 2,
            num_heads: 2,
            mlp_ratio: 4,
            num_classes,
            layer_norm_eps: 1e-6,
            dropout: 0.0,
        }
    }

    pub fn by_name(name: &str, num_classes: usize) -> Result<Self> {
        match name {
            "base" => Ok(Self::base(num_classes)),
            "tiny" => Ok(Self::tiny(num_classes)),
            other => Err(Error::Config(format!(
                "unknown model size `{other}` (expected base or tiny)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("in_channels", self.in_channels),
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("num_heads", self.num_heads),
            ("mlp_ratio", self.mlp_ratio),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        if self.dropout != 0.0 {
            return Err(Error::Config("dropout is not supported; use 0".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patch tokens plus the class token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn mlp_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    /// Flattened length of one patch.
    pub fn patch_dim(&self) -> usize {
        self.in_channels * self.patch_size * self.patch_size
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.in_channels, self.image_size, self.image_size]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_lengths() {
        let b = ViTConfig::base(2);
        assert_eq!(b.num_patches(), 196);
        assert_eq!(b.seq_len(), 197);
        assert_eq!(b.patch_dim(), 768);
        assert_eq!(ViTConfig::tiny(2).seq_len(), 17);
    }

    #[test]
    fn validation() {
        assert!(ViTConfig::base(2).validate().is_ok());
        let mut c = ViTConfig::tiny(2);
        c.num_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ViTConfig::tiny(2);
        c.patch_size = 7;
        assert!(c.validate().is_err());
        assert!(ViTConfig::by_name("huge", 2).is_err());
    }
}
