//! Contour heat-map math: project bus positions, triangulate them, spread
//! per-bus values linearly across each triangle, color and rasterize.

mod colormap;
mod delaunay;
mod interpolate;
mod projection;
mod raster;

pub use colormap::{colormap, HeatRange};
pub use delaunay::{delaunay, incircle_normalized, orient2d, Triangulation, TriangulationError, DELAUNAY_EPS};
pub use interpolate::{barycentric, interpolate, BARYCENTRIC_TOLERANCE};
pub use projection::{project_mercator, ProjectedPoint, MAX_LATITUDE};
pub use raster::{
    rasterize_frame, read_ppm, write_ppm, ContourFrame, Image, RasterError, RasterPlan, Viewport,
};
