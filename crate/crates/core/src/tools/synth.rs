//! Frame sources for the driver: a synthetic damped wave spreading from one
//! bus, or a CSV series of `t, v1, ..., vN` rows.

use std::f64::consts::PI;
use std::path::Path;

use crate::case::CaseTopology;
use crate::contour::{project_mercator, ContourFrame};

use super::ToolError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub f0: f64,
    pub amplitude: f64,
    pub origin_bus: i64,
    /// Propagation speed in projected units per second.
    pub speed: f64,
    pub decay: f64,
    pub t_event: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { f0: 60.0, amplitude: 0.05, origin_bus: 1, speed: 0.05, decay: 0.3, t_event: 0.5 }
    }
}

/// Planar distances in projected space from every bus to the origin bus.
fn distances(case: &CaseTopology, origin: i64) -> Result<Vec<f64>, ToolError> {
    let o = case.bus_position(origin).ok_or(ToolError::UnknownBus(origin))?;
    let po = project_mercator(case.buses[o].lat, case.buses[o].lon);
    Ok(case
        .buses
        .iter()
        .map(|b| project_mercator(b.lat, b.lon).distance(&po))
        .collect())
}

fn wave(p: &SynthParams, d: &[f64], t: f64) -> Vec<f64> {
    let since = t - p.t_event;
    d.iter()
        .map(|&di| {
            let lag = di / p.speed;
            if since < 0.0 || since < lag {
                p.f0
            } else {
                p.f0 + p.amplitude * (2.0 * PI * (since - lag)).cos() * (-p.decay * since).exp()
            }
        })
        .collect()
}

pub fn synth_wave(case: &CaseTopology, params: &SynthParams, t: f64) -> Result<Vec<f64>, ToolError> {
    Ok(wave(params, &distances(case, params.origin_bus)?, t))
}

/// `count` frames at `t = i * dt`.
pub fn synth_frames(
    case: &CaseTopology,
    params: &SynthParams,
    count: usize,
    dt: f64,
) -> Result<Vec<ContourFrame>, ToolError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ToolError::BadSeries(format!("frame spacing must be positive, got {dt}")));
    }
    if !(params.speed > 0.0) {
        return Err(ToolError::BadSeries(format!("wave speed must be positive, got {}", params.speed)));
    }
    let d = distances(case, params.origin_bus)?;
    Ok((0..count)
        .map(|i| {
            let t = i as f64 * dt;
            ContourFrame { t, values: wave(params, &d, t) }
        })
        .collect())
}

/// Parses a series CSV. A first row whose leading cell is not a number is
/// taken as a header.
pub fn parse_series(bytes: &[u8]) -> Result<Vec<ContourFrame>, ToolError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let mut frames: Vec<ContourFrame> = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| ToolError::BadSeries(e.to_string()))?;
        let mut cells = row.iter().map(str::parse::<f64>);
        let t = match cells.next() {
            Some(Ok(t)) => t,
            _ if line == 0 => continue,
            _ => return Err(ToolError::BadSeries(format!("row {}: bad time", line + 1))),
        };
        let values = cells
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| ToolError::BadSeries(format!("row {}: {e}", line + 1)))?;
        if let Some(prev) = frames.last() {
            if !(t > prev.t) {
                return Err(ToolError::BadSeries(format!("row {}: time {t} does not increase", line + 1)));
            }
        }
        frames.push(ContourFrame { t, values });
    }
    Ok(frames)
}

pub fn load_series(path: &Path) -> Result<Vec<ContourFrame>, ToolError> {
    parse_series(&std::fs::read(path)?)
}

pub fn write_series(frames: &[ContourFrame]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for f in frames {
        let mut row = vec![f.t.to_string()];
        row.extend(f.values.iter().map(f64::to_string));
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

/// Every frame must carry one value per bus.
pub fn check_frames(case: &CaseTopology, frames: &[ContourFrame]) -> Result<(), ToolError> {
    for (i, f) in frames.iter().enumerate() {
        if f.values.len() != case.buses.len() {
            return Err(ToolError::Mismatch { frame: i, expected: case.buses.len(), got: f.values.len() });
        }
    }
    Ok(())
}
