//! The Vision Transformer classifier.

mod config;
mod params;
mod vit;

pub use config::ViTConfig;
pub use params::{
    init_kind, param_count, BlockParams, InitKind, LayerNormParams, LinearParams, ViTParams,
    INIT_STD,
};
pub use vit::{
    activation_floats_per_sample, attention, encoder_block, extract_patches, patch_embed,
    ForwardCache, Mode, ViT,
};
