//! Semantic defurnishing of textured, instance-labeled indoor scan meshes.

pub mod atlas;
pub mod evaluation;
pub mod geometry;
pub mod inpainting;
pub mod mesh;
pub mod pipeline;
pub mod reconstruction;
pub mod segmentation;
pub mod uv_mapping;
