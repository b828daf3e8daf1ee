use std::fs;
use std::path::PathBuf;

use log::info;

use crate::case::{CaseTopology, StreamTopology, TOPO_BUS};
use crate::contour::{delaunay, project_mercator, write_ppm, HeatRange, ProjectedPoint, RasterPlan, Viewport};

use super::recording::Record;
use super::ToolError;

/// Margin added on each side of the projected bus bounding box.
pub const VIEWPORT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub var: String,
    pub range: HeatRange,
    pub width: u32,
    pub height: u32,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RenderReport {
    pub files: Vec<PathBuf>,
    pub viewport: Viewport,
}

fn frame_values<'a>(case: &CaseTopology, records: &'a [Record], var: &str) -> Result<Vec<&'a [f64]>, ToolError> {
    let n = case.buses.len();
    let mut frames = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.values.get(TOPO_BUS).is_some() {
            let topo = StreamTopology::from_vars(&r.values)?;
            if topo.buses.len() != n {
                return Err(ToolError::Mismatch { frame: i, expected: n, got: topo.buses.len() });
            }
        }
        let Some(v) = r.values.get(var) else { continue };
        let data = v
            .as_array()
            .and_then(|a| a.as_f64())
            .ok_or_else(|| ToolError::Usage(format!("record {i}: {var} is a {}, not a double array", v.kind())))?;
        if data.len() != n {
            return Err(ToolError::Mismatch { frame: i, expected: n, got: data.len() });
        }
        frames.push(data);
    }
    if frames.is_empty() {
        return Err(ToolError::VariableAbsent(var.to_owned()));
    }
    Ok(frames)
}

/// Projected bus positions in case order.
pub fn project_case(case: &CaseTopology) -> Vec<ProjectedPoint> {
    case.buses.iter().map(|b| project_mercator(b.lat, b.lon)).collect()
}

/// Writes `frame_000000.ppm`, `frame_000001.ppm`, ... for every record that
/// carries the variable. Everything is validated before the first file is
/// written.
pub fn render(case: &CaseTopology, records: &[Record], opts: &RenderOptions) -> Result<RenderReport, ToolError> {
    let frames = frame_values(case, records, &opts.var)?;
    let points = project_case(case);
    let tri = delaunay(&points)?;
    let viewport = Viewport::fit(&points, VIEWPORT_MARGIN, opts.width, opts.height)?;
    let plan = RasterPlan::new(&tri, viewport);

    fs::create_dir_all(&opts.out_dir)?;
    let mut files = Vec::with_capacity(frames.len());
    for (i, values) in frames.iter().enumerate() {
        let img = plan.render(values, opts.range)?;
        let path = opts.out_dir.join(format!("frame_{i:06}.ppm"));
        fs::write(&path, write_ppm(&img))?;
        files.push(path);
    }
    info!("wrote {} frames to {}", files.len(), opts.out_dir.display());
    Ok(RenderReport { files, viewport })
}

