//! Pipeline tools behind the `gridmesh` subcommands.

mod bench;
mod pipeline;
mod recording;
mod render;
mod synth;

use std::io;

use thiserror::Error;

use crate::case::CaseError;
use crate::client::ClientError;
use crate::contour::{RasterError, TriangulationError};
use crate::value::ValueError;

pub use bench::{bench, BenchDirection, BenchOptions, BenchReport};
pub use pipeline::{
    drive, record, replay, DriveOptions, DriveReport, Rate, RecordOptions, RecordOutcome, RecordReport,
    ReplayOptions, ReplayReport, ACK_VAR, DONE_VAR, FRAMES_VAR, TS_VAR,
};
pub use recording::{
    load_recording, read_recording, Record, RecordingError, RecordingWriter, RECORDING_MAGIC, RECORDING_VERSION,
};
pub use render::{render, RenderOptions, RenderReport};
pub use synth::{check_frames, load_series, parse_series, synth_frames, synth_wave, write_series, SynthParams};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Triangulation(#[from] TriangulationError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("frame {frame} has {got} values but the case has {expected} buses")]
    Mismatch { frame: usize, expected: usize, got: usize },
    #[error("no bus with idx {0}")]
    UnknownBus(i64),
    #[error("bad series: {0}")]
    BadSeries(String),
    #[error("variable {0:?} does not appear in the recording")]
    VariableAbsent(String),
    #[error("no ack {expected} from the consumer within the timeout")]
    AckTimeout { expected: i64 },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
