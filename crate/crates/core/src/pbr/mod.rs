//! Physically-based shading: cubemap environments, split-sum IBL with a
//! precomputed BRDF table, prefiltered mip pyramids, a Monte-Carlo
//! reference shader, equirectangular projections, and sRGB tone mapping.

pub mod brdf;
pub mod cubemap;
pub mod equirect;
pub mod lut;
pub mod mc;
pub mod prefilter;
pub mod tonemap;

pub use brdf::{
    diffuse_weight, fresnel, fresnel_f0, shade_splitsum, shade_splitsum_fast,
    shade_splitsum_parts, shade_splitsum_vjp, ShadeParts, SurfaceCot, SurfacePoint,
};
pub use cubemap::Cubemap;
pub use equirect::{cubemap_to_equirect, equirect_to_cubemap, sample_equirect};
pub use lut::{bake_lut, SplitSumLUT};
pub use mc::{shade_reference_mc, McMode};
pub use prefilter::{prefilter_environment, PrefilterOperator, PrefilteredEnvironment};
pub use tonemap::{srgb_to_linear, tonemap_rgb, tonemap_srgb, tonemap_srgb_deriv};
