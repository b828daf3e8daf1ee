use thiserror::Error;

use super::colormap::{colormap, HeatRange};
use super::delaunay::Triangulation;
use super::interpolate::{barycentric, blend, inside};
use super::projection::ProjectedPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("viewport must have positive area and size, got {width}x{height} over {dx}x{dy}")]
    BadViewport { width: u32, height: u32, dx: f64, dy: f64 },
    #[error("frame has {got} values for {expected} vertices")]
    ValueCount { expected: usize, got: usize },
    #[error("not a binary PPM: {0}")]
    BadPpm(String),
}

/// One timestamped vector of per-bus values.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourFrame {
    pub t: f64,
    pub values: Vec<f64>,
}

/// A projected-coordinate bounding box sampled on a `width`×`height` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
    width: u32,
    height: u32,
}

impl Viewport {
    pub fn new(
        min: ProjectedPoint,
        max: ProjectedPoint,
        width: u32,
        height: u32,
    ) -> Result<Self, RasterError> {
        let (dx, dy) = (max.x - min.x, max.y - min.y);
        if width == 0 || height == 0 || !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(RasterError::BadViewport { width, height, dx, dy });
        }
        Ok(Viewport { min_x: min.x, min_y: min.y, max_x: max.x, max_y: max.y, width, height })
    }

    /// Bounding box of `points`, grown by `margin` of its extent on every
    /// side. A flat extent is widened to 1e-6 so the box keeps positive area.
    pub fn fit(points: &[ProjectedPoint], margin: f64, width: u32, height: u32) -> Result<Self, RasterError> {
        let mut lo = ProjectedPoint::new(f64::INFINITY, f64::INFINITY);
        let mut hi = ProjectedPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = ProjectedPoint::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = ProjectedPoint::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let mx = ((hi.x - lo.x) * margin).max(1e-6);
        let my = ((hi.y - lo.y) * margin).max(1e-6);
        Viewport::new(
            ProjectedPoint::new(lo.x - mx, lo.y - my),
            ProjectedPoint::new(hi.x + mx, hi.y + my),
            width,
            height,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn min(&self) -> ProjectedPoint {
        ProjectedPoint::new(self.min_x, self.min_y)
    }

    pub fn max(&self) -> ProjectedPoint {
        ProjectedPoint::new(self.max_x, self.max_y)
    }

    /// Projected coordinates of a pixel center. Row 0 is the top edge.
    pub fn pixel_center(&self, col: u32, row: u32) -> ProjectedPoint {
        let dx = self.max_x - self.min_x;
        let dy = self.max_y - self.min_y;
        ProjectedPoint::new(
            self.min_x + (col as f64 + 0.5) / self.width as f64 * dx,
            self.max_y - (row as f64 + 0.5) / self.height as f64 * dy,
        )
    }

    /// Pixel whose cell contains `p`, if inside the viewport.
    pub fn pixel_at(&self, p: ProjectedPoint) -> Option<(u32, u32)> {
        let fx = (p.x - self.min_x) / (self.max_x - self.min_x) * self.width as f64;
        let fy = (self.max_y - p.y) / (self.max_y - self.min_y) * self.height as f64;
        if !(0.0..self.width as f64).contains(&fx) || !(0.0..self.height as f64).contains(&fy) {
            return None;
        }
        Some((fx as u32, fy as u32))
    }
}

/// RGBA image, rows top to bottom. Alpha 0 marks pixels outside the hull.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Image { width, height, rgba: vec![0; width as usize * height as usize * 4] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgba(&self) -> &[u8] {
        &self.rgba
    }

    fn offset(&self, col: u32, row: u32) -> usize {
        assert!(col < self.width && row < self.height, "pixel out of range");
        (row as usize * self.width as usize + col as usize) * 4
    }

    pub fn pixel(&self, col: u32, row: u32) -> [u8; 4] {
        let o = self.offset(col, row);
        [self.rgba[o], self.rgba[o + 1], self.rgba[o + 2], self.rgba[o + 3]]
    }

    pub fn set_pixel(&mut self, col: u32, row: u32, px: [u8; 4]) {
        let o = self.offset(col, row);
        self.rgba[o..o + 4].copy_from_slice(&px);
    }

    /// RGB bytes composited over a white background.
    pub fn to_rgb(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.rgba.len() / 4 * 3);
        for px in self.rgba.chunks_exact(4) {
            let a = px[3] as u32;
            for &c in &px[..3] {
                out.push(((c as u32 * a + 255 * (255 - a) + 127) / 255) as u8);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    tri: usize,
    w: [f64; 3],
}

/// Pixel-to-triangle assignment for one triangulation and viewport, so a
/// stream of frames can be rendered without repeating point location. The
/// assignment matches first-hit `interpolate` exactly.
#[derive(Debug, Clone)]
pub struct RasterPlan {
    viewport: Viewport,
    vertex_count: usize,
    tris: Vec<[usize; 3]>,
    cells: Vec<Option<Cell>>,
}

impl RasterPlan {
    pub fn new(tri: &Triangulation, viewport: Viewport) -> Self {
        let (w, h) = (viewport.width, viewport.height);
        let mut cells: Vec<Option<Cell>> = vec![None; w as usize * h as usize];
        let dx = viewport.max_x - viewport.min_x;
        let dy = viewport.max_y - viewport.min_y;
        for t in 0..tri.triangles().len() {
            let v = tri.vertices(t);
            let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (v[0].x, v[0].x, v[0].y, v[0].y);
            for p in &v[1..] {
                lo_x = lo_x.min(p.x);
                hi_x = hi_x.max(p.x);
                lo_y = lo_y.min(p.y);
                hi_y = hi_y.max(p.y);
            }
            // Pixel ranges whose centers may fall in the bbox, padded by one
            // so boundary-tolerant hits are never missed.
            let c0 = (((lo_x - viewport.min_x) / dx * w as f64 - 0.5).floor() - 1.0).max(0.0) as u32;
            let c1 = (((hi_x - viewport.min_x) / dx * w as f64 - 0.5).ceil() + 1.0).min(w as f64 - 1.0);
            let r0 = (((viewport.max_y - hi_y) / dy * h as f64 - 0.5).floor() - 1.0).max(0.0) as u32;
            let r1 = (((viewport.max_y - lo_y) / dy * h as f64 - 0.5).ceil() + 1.0).min(h as f64 - 1.0);
            if c1 < 0.0 || r1 < 0.0 {
                continue;
            }
            for row in r0..=r1 as u32 {
                for col in c0..=c1 as u32 {
                    let slot = &mut cells[row as usize * w as usize + col as usize];
                    if slot.is_some() {
                        continue;
                    }
                    if let Some(wts) = barycentric(v, viewport.pixel_center(col, row)) {
                        if inside(&wts) {
                            *slot = Some(Cell { tri: t, w: wts });
                        }
                    }
                }
            }
        }
        RasterPlan {
            viewport,
            vertex_count: tri.points().len(),
            tris: tri.triangles().to_vec(),
            cells,
        }
    }

    pub fn viewport(&self) -> &Viewport {
        &self.viewport
    }

    /// Interpolated value at a pixel, `None` outside the hull.
    pub fn value_at(&self, col: u32, row: u32, values: &[f64]) -> Option<f64> {
        let cell = self.cells[row as usize * self.viewport.width as usize + col as usize]?;
        Some(blend(&cell.w, self.tris[cell.tri], values))
    }

    pub fn render(&self, values: &[f64], range: HeatRange) -> Result<Image, RasterError> {
        if values.len() != self.vertex_count {
            return Err(RasterError::ValueCount { expected: self.vertex_count, got: values.len() });
        }
        let mut img = Image::new(self.viewport.width, self.viewport.height);
        for (i, cell) in self.cells.iter().enumerate() {
            if let Some(cell) = cell {
                let [r, g, b] = colormap(blend(&cell.w, self.tris[cell.tri], values), range);
                img.rgba[i * 4..i * 4 + 4].copy_from_slice(&[r, g, b, 255]);
            }
        }
        Ok(img)
    }
}

pub fn rasterize_frame(
    tri: &Triangulation,
    frame: &ContourFrame,
    range: HeatRange,
    viewport: Viewport,
) -> Result<Image, RasterError> {
    RasterPlan::new(tri, viewport).render(&frame.values, range)
}

pub fn write_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.to_rgb());
    out
}

/// Reads a binary PPM with maxval 255. Returns width, height and RGB bytes.
pub fn read_ppm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), RasterError> {
    let bad = |m: &str| RasterError::BadPpm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P6" {
        return Err(bad("magic is not P6"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() {
        return Err(bad("truncated header"));
    }
    pos += 1;
    let num = |f: &[u8]| -> Result<u32, RasterError> {
        std::str::from_utf8(f).ok().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad number"))
    };
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let len = (w as u64) * (h as u64) * 3;
    if (bytes.len() - pos) as u64 != len {
        return Err(bad("raster length does not match dimensions"));
    }
    Ok((w, h, bytes[pos..].to_vec()))
}
