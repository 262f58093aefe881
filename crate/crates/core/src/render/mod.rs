//! Volumetric view rendering: cameras, emission-absorption marching with
//! adjoints, deferred shading, compositing, and pseudo-normal estimation.

pub mod camera;
pub mod march;
pub mod view;

pub use camera::{read_cameras_json, write_cameras_json, Camera, CameraJson};
pub use march::{
    march_ray, march_ray_backward, ray_span, MarchConfig, MarchTape, RayAccum, RayAccumCot,
    SceneField,
};
pub use view::{
    composite_background, pseudo_normals, render_full, render_full_backward, render_view,
    shade_buffers, write_buffer_set, BufferCots, CompositeOrder, RenderBuffers, ShadingContext,
    ViewGrads,
};
