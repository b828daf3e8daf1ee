//! Grid case files: buses with geographic coordinates and the lines joining
//! them.
//!
//! Two interchangeable formats are read:
//!
//! * one JSON document `{"name", "buses": [{"idx","name","lat","lon"}], "lines": [{"idx","from","to"}]}`
//!   (unknown fields are ignored);
//! * a CSV pair, `buses.csv` with header `idx,name,lat,lon` and `lines.csv`
//!   with header `idx,from,to`.
//!
//! Spreadsheet exports should be saved as that CSV pair.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{ArrayData, NamedValues, NdArray, Value};

pub const TOPO_BUS: &str = "topo_bus";
pub const TOPO_LINE: &str = "topo_line";
pub const TOPO_NAME: &str = "topo_name";

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("bus {idx}: {what} {value} out of range")]
    Range { idx: i64, what: &'static str, value: f64 },
    #[error("line {line}: {reason}")]
    Ref { line: i64, reason: String },
    #[error("duplicate {kind} idx {idx}")]
    Dup { kind: &'static str, idx: i64 },
    #[error("cannot read case: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub idx: i64,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRecord {
    pub idx: i64,
    #[serde(rename = "from")]
    pub from_bus: i64,
    #[serde(rename = "to")]
    pub to_bus: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTopology {
    pub name: String,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

/// A case document in one of the accepted formats.
#[derive(Debug, Clone, Copy)]
pub enum CaseDocument<'a> {
    Json(&'a [u8]),
    Csv {
        name: &'a str,
        buses: &'a [u8],
        lines: &'a [u8],
    },
}

pub fn parse_case(doc: CaseDocument<'_>) -> Result<CaseTopology, CaseError> {
    let case = match doc {
        CaseDocument::Json(bytes) => {
            serde_json::from_slice::<CaseTopology>(bytes).map_err(|e| CaseError::Schema(e.to_string()))?
        }
        CaseDocument::Csv { name, buses, lines } => CaseTopology {
            name: name.to_owned(),
            buses: read_csv(buses, "buses.csv")?,
            lines: read_csv(lines, "lines.csv")?,
        },
    };
    case.validate()?;
    Ok(case)
}

fn read_csv<T: for<'de> Deserialize<'de>>(bytes: &[u8], what: &str) -> Result<Vec<T>, CaseError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CaseError::Schema(format!("{what}: {e}")))
}

/// Loads a case from a `.json` file, or from a directory (or either file of
/// the pair) holding `buses.csv` and `lines.csv`. CSV cases are named after
/// their directory.
pub fn load_case(path: &Path) -> Result<CaseTopology, CaseError> {
    let dir = if path.is_dir() {
        Some(path.to_path_buf())
    } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        path.parent().map(Path::to_path_buf)
    } else {
        None
    };
    match dir {
        Some(dir) => {
            let buses = fs::read(dir.join("buses.csv"))?;
            let lines = fs::read(dir.join("lines.csv"))?;
            let name = dir
                .canonicalize()
                .ok()
                .and_then(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "case".into());
            parse_case(CaseDocument::Csv {
                name: &name,
                buses: &buses,
                lines: &lines,
            })
        }
        None => parse_case(CaseDocument::Json(&fs::read(path)?)),
    }
}

impl CaseTopology {
    pub fn validate(&self) -> Result<(), CaseError> {
        if self.buses.is_empty() {
            return Err(CaseError::Schema("case has no buses".into()));
        }
        let mut seen = HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.idx) {
                return Err(CaseError::Dup { kind: "bus", idx: b.idx });
            }
            if !(-90.0..=90.0).contains(&b.lat) {
                return Err(CaseError::Range {
                    idx: b.idx,
                    what: "lat",
                    value: b.lat,
                });
            }
            if !(-180.0..=180.0).contains(&b.lon) {
                return Err(CaseError::Range {
                    idx: b.idx,
                    what: "lon",
                    value: b.lon,
                });
            }
        }
        let mut line_ids = HashSet::new();
        for l in &self.lines {
            if !line_ids.insert(l.idx) {
                return Err(CaseError::Dup { kind: "line", idx: l.idx });
            }
            for end in [l.from_bus, l.to_bus] {
                if !seen.contains(&end) {
                    return Err(CaseError::Ref {
                        line: l.idx,
                        reason: format!("bus {end} does not exist"),
                    });
                }
            }
            if l.from_bus == l.to_bus {
                return Err(CaseError::Ref {
                    line: l.idx,
                    reason: format!("both ends on bus {}", l.from_bus),
                });
            }
        }
        Ok(())
    }

    pub fn bus_position(&self, idx: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.idx == idx)
    }

    /// Canonical JSON form: fixed key order, two-space indentation, trailing
    /// newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case serializes");
        s.push('\n');
        s
    }

    /// `(buses.csv, lines.csv)` contents.
    pub fn to_csv(&self) -> (String, String) {
        fn write<T: Serialize>(rows: &[T]) -> String {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).expect("row serializes");
            }
            String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is UTF-8")
        }
        let buses = if self.buses.is_empty() {
            "idx,name,lat,lon\n".to_owned()
        } else {
            write(&self.buses)
        };
        let lines = if self.lines.is_empty() {
            "idx,from,to\n".to_owned()
        } else {
            write(&self.lines)
        };
        (buses, lines)
    }

    /// The three variables a producer publishes before any frame data:
    /// `topo_bus` (N x 3 doubles: idx, lat, lon), `topo_line` (M x 2 ints:
    /// from, to) and `topo_name`. A case without lines yields a 0 x 2 array.
    pub fn to_topology_vars(&self) -> NamedValues {
        let mut bus = Vec::with_capacity(self.buses.len() * 3);
        for b in &self.buses {
            bus.extend_from_slice(&[b.idx as f64, b.lat, b.lon]);
        }
        let mut line = Vec::with_capacity(self.lines.len() * 2);
        for l in &self.lines {
            line.extend_from_slice(&[l.from_bus, l.to_bus]);
        }
        let bus = NdArray::new(vec![self.buses.len() as u32, 3], ArrayData::Double(bus)).expect("N x 3");
        let line = NdArray::new(vec![self.lines.len() as u32, 2], ArrayData::Int(line)).expect("M x 2");
        NamedValues::new()
            .with(TOPO_BUS, bus)
            .and_then(|nv| nv.with(TOPO_LINE, line))
            .and_then(|nv| nv.with(TOPO_NAME, self.name.as_str()))
            .expect("distinct names")
    }
}

/// Convenience for the conversion subcommand: reads any supported case
/// format and returns canonical JSON.
pub fn convert_case(doc: CaseDocument<'_>) -> Result<String, CaseError> {
    Ok(parse_case(doc)?.to_json())
}

/// Geometry and connectivity recovered from streamed topology variables.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTopology {
    pub name: String,
    /// (idx, lat, lon) in publication order.
    pub buses: Vec<(i64, f64, f64)>,
    pub lines: Vec<(i64, i64)>,
}

impl StreamTopology {
    pub fn from_vars(vars: &NamedValues) -> Result<StreamTopology, CaseError> {
        let schema = |m: &str| CaseError::Schema(m.to_owned());
        let bus = vars
            .get(TOPO_BUS)
            .and_then(Value::as_array)
            .ok_or_else(|| schema("topo_bus missing or not an array"))?;
        let line = vars
            .get(TOPO_LINE)
            .and_then(Value::as_array)
            .ok_or_else(|| schema("topo_line missing or not an array"))?;
        let name = vars
            .get(TOPO_NAME)
            .and_then(Value::as_str)
            .ok_or_else(|| schema("topo_name missing or not a string"))?;
        let (bus_data, line_data) = match (bus.as_f64(), line.as_i64()) {
            (Some(b), Some(l)) if bus.dims().len() == 2 && bus.dims()[1] == 3 && line.dims().len() == 2 && line.dims()[1] == 2 => (b, l),
            _ => return Err(schema("topology arrays have the wrong shape or element type")),
        };
        Ok(StreamTopology {
            name: name.to_owned(),
            buses: bus_data
                .chunks_exact(3)
                .map(|r| (r[0] as i64, r[1], r[2]))
                .collect(),
            lines: line_data.chunks_exact(2).map(|r| (r[0], r[1])).collect(),
        })
    }
}
