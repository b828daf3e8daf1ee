use std::f64::consts::PI;

/// Latitudes are clamped to this many degrees before projecting.
pub const MAX_LATITUDE: f64 = 85.06;

/// Web-Mercator coordinates: `x` is longitude in radians, `y` the Mercator
/// ordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
}

impl ProjectedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        ProjectedPoint { x, y }
    }

    pub fn distance(&self, other: &ProjectedPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub fn project_mercator(lat: f64, lon: f64) -> ProjectedPoint {
    let phi = lat.clamp(-MAX_LATITUDE, MAX_LATITUDE).to_radians();
    ProjectedPoint {
        x: lon * PI / 180.0,
        // ln(tan(π/4 + φ/2)) rewritten as asinh(tan φ): exact at the equator
        // and odd in φ.
        y: phi.tan().asinh(),
    }
}
