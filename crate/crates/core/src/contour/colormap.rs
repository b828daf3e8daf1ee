use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("heat range half-width must be positive and finite, got {0}")]
pub struct BadHeatRange(pub f64);

/// Value window mapped onto the palette: `center ± half_width`. The
/// half-width is the "sensitivity" of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatRange {
    center: f64,
    half_width: f64,
}

impl HeatRange {
    pub fn new(center: f64, half_width: f64) -> Result<Self, BadHeatRange> {
        if half_width > 0.0 && half_width.is_finite() && center.is_finite() {
            Ok(HeatRange { center, half_width })
        } else {
            Err(BadHeatRange(half_width))
        }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Position of `v` on the palette, clamped to [0, 1]. NaN maps to 0.
    pub fn position(&self, v: f64) -> f64 {
        let t = (v - (self.center - self.half_width)) / (2.0 * self.half_width);
        if t.is_nan() {
            0.0
        } else {
            t.clamp(0.0, 1.0)
        }
    }
}

fn channel(x: f64) -> u8 {
    (x * 255.0 + 0.5).floor() as u8
}

/// Blue at the low end, green at the center, red at the high end, linear in
/// between.
pub fn colormap(v: f64, range: HeatRange) -> [u8; 3] {
    let t = range.position(v);
    if t <= 0.5 {
        let s = t / 0.5;
        [0, channel(s), channel(1.0 - s)]
    } else {
        let s = (t - 0.5) / 0.5;
        [channel(s), channel(1.0 - s), 0]
    }
}
