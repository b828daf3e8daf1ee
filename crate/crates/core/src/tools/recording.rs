//! Append-only recording file: `"DREC"`, u32 version, then records of
//! `f64 ts | u32 len | NamedValues`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::value::{decode_named_values, encode_named_values, NamedValues, ValueError};

pub const RECORDING_MAGIC: [u8; 4] = *b"DREC";
pub const RECORDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 8;
const RECORD_PREFIX: usize = 12;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("bad recording magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported recording version {0}")]
    Version(u32),
    #[error("recording truncated at byte {0}")]
    Truncated(usize),
    #[error("record {index}: timestamp {ts} goes backwards or is not finite")]
    Timestamp { index: usize, ts: f64 },
    #[error("record {index}: {source}")]
    Payload { index: usize, source: ValueError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub ts: f64,
    pub values: NamedValues,
}

pub struct RecordingWriter<W: Write> {
    out: W,
    last_ts: f64,
    count: usize,
}

impl RecordingWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, RecordingError> {
        RecordingWriter::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> RecordingWriter<W> {
    pub fn new(mut out: W) -> Result<Self, RecordingError> {
        out.write_all(&RECORDING_MAGIC)?;
        out.write_all(&RECORDING_VERSION.to_le_bytes())?;
        Ok(RecordingWriter { out, last_ts: f64::NEG_INFINITY, count: 0 })
    }

    pub fn append(&mut self, ts: f64, values: &NamedValues) -> Result<(), RecordingError> {
        if !ts.is_finite() || ts < self.last_ts {
            return Err(RecordingError::Timestamp { index: self.count, ts });
        }
        let payload =
            encode_named_values(values).map_err(|source| RecordingError::Payload { index: self.count, source })?;
        let len = u32::try_from(payload.len())
            .map_err(|_| RecordingError::Payload { index: self.count, source: ValueError::TooLarge(payload.len()) })?;
        self.out.write_all(&ts.to_le_bytes())?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(&payload)?;
        self.last_ts = ts;
        self.count += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn flush(&mut self) -> Result<(), RecordingError> {
        Ok(self.out.flush()?)
    }

    pub fn into_inner(mut self) -> Result<W, RecordingError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_recording(bytes: &[u8]) -> Result<Vec<Record>, RecordingError> {
    if bytes.len() < HEADER_LEN {
        return Err(RecordingError::Truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != RECORDING_MAGIC {
        return Err(RecordingError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != RECORDING_VERSION {
        return Err(RecordingError::Version(version));
    }
    let mut pos = HEADER_LEN;
    let mut out = Vec::new();
    let mut last = f64::NEG_INFINITY;
    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_PREFIX {
            return Err(RecordingError::Truncated(pos));
        }
        let ts = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        let len = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap()) as usize;
        pos += RECORD_PREFIX;
        if !ts.is_finite() || ts < last {
            return Err(RecordingError::Timestamp { index: out.len(), ts });
        }
        if bytes.len() - pos < len {
            return Err(RecordingError::Truncated(pos));
        }
        let values = decode_named_values(&bytes[pos..pos + len])
            .map_err(|source| RecordingError::Payload { index: out.len(), source })?;
        pos += len;
        last = ts;
        out.push(Record { ts, values });
    }
    Ok(out)
}

pub fn load_recording(path: &Path) -> Result<Vec<Record>, RecordingError> {
    read_recording(&std::fs::read(path)?)
}
