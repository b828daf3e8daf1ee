use std::io::Write;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info};

use crate::case::CaseTopology;
use crate::client::Client;
use crate::contour::ContourFrame;
use crate::value::{NamedValues, NdArray, Value};
use crate::wire::TransportBinding;

use super::recording::{Record, RecordingWriter};
use super::synth::check_frames;
use super::ToolError;

/// Frame timestamp.
pub const TS_VAR: &str = "ts";
/// End-of-stream marker, broadcast as `Bool(true)`.
pub const DONE_VAR: &str = "done";
/// Number of frames the producer sent, carried with the end marker.
pub const FRAMES_VAR: &str = "frames";
/// Records written so far, sent back by the recorder after every batch.
pub const ACK_VAR: &str = "ack";

const CONNECT_ATTEMPTS: usize = 50;
const CONNECT_PAUSE: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    /// Pace frames by their timestamps.
    RealTime,
    /// Back to back.
    Max,
}

#[derive(Debug, Clone)]
pub struct DriveOptions {
    pub binding: TransportBinding,
    pub group: String,
    pub var: String,
    pub rate: Rate,
    pub lockstep: bool,
    pub ack_timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveReport {
    pub frames: usize,
    pub elapsed: Duration,
}

/// Waits until the consumer's ack counter reaches `expected`.
fn await_ack(client: &mut Client, expected: i64, timeout: Duration) -> Result<(), ToolError> {
    let deadline = Instant::now() + timeout;
    loop {
        if client.workspace().get(ACK_VAR).and_then(Value::as_i64).is_some_and(|n| n >= expected) {
            return Ok(());
        }
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(ToolError::AckTimeout { expected });
        }
        if client.wait(Some(left))? {
            client.sync(None)?;
        }
    }
}

fn sleep_until(at: Instant) {
    let now = Instant::now();
    if at > now {
        thread::sleep(at - now);
    }
}

/// Publishes the case topology, then every frame as `ts` plus `var`, then
/// broadcasts the end marker.
pub fn drive(case: &CaseTopology, frames: &[ContourFrame], opts: &DriveOptions) -> Result<DriveReport, ToolError> {
    check_frames(case, frames)?;
    let mut client = Client::connect_retry(&opts.binding, CONNECT_ATTEMPTS, CONNECT_PAUSE)?;
    let group = [opts.group.as_str()];
    client.join(&group)?;

    let started = Instant::now();
    client.send_values(&group, case.to_topology_vars())?;
    let mut acked = 1;
    if opts.lockstep {
        await_ack(&mut client, acked, opts.ack_timeout)?;
    }
    let t0 = frames.first().map_or(0.0, |f| f.t);
    let paced_from = Instant::now();
    for (i, f) in frames.iter().enumerate() {
        if opts.rate == Rate::RealTime {
            sleep_until(paced_from + Duration::from_secs_f64((f.t - t0).max(0.0)));
        }
        let payload = NamedValues::new()
            .with(TS_VAR, f.t)?
            .with(opts.var.as_str(), NdArray::from_f64(f.values.clone()))?;
        client.send_values(&group, payload)?;
        debug!("frame {i} t={}", f.t);
        if opts.lockstep {
            acked += 1;
            await_ack(&mut client, acked, opts.ack_timeout)?;
        }
    }
    let done = NamedValues::new().with(DONE_VAR, true)?.with(FRAMES_VAR, frames.len() as i64)?;
    client.broadcast_values(done)?;
    let elapsed = started.elapsed();
    info!("drove {} frames in {:.3}s", frames.len(), elapsed.as_secs_f64());
    client.close();
    Ok(DriveReport { frames: frames.len(), elapsed })
}

#[derive(Debug, Clone)]
pub struct RecordOptions {
    pub binding: TransportBinding,
    pub group: String,
    pub idle_timeout: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordOutcome {
    Done,
    IdleTimeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordReport {
    pub outcome: RecordOutcome,
    pub records: usize,
    /// Batches that carried a timestamp.
    pub frames: usize,
    /// Frame count announced with the end marker, if one arrived.
    pub frames_total: Option<i64>,
}

/// Joins the group and appends every sync batch as one record until the end
/// marker arrives or the group stays silent for the idle timeout. After each
/// record the running count is sent back to the group as `ack`.
pub fn record<W: Write>(opts: &RecordOptions, out: &mut RecordingWriter<W>) -> Result<RecordReport, ToolError> {
    let mut client = Client::connect_retry(&opts.binding, CONNECT_ATTEMPTS, CONNECT_PAUSE)?;
    let group = [opts.group.as_str()];
    client.join(&group)?;

    let mut ts = 0.0;
    let mut frames = 0;
    let mut frames_total = None;
    let mut last_activity = Instant::now();
    let outcome = loop {
        let left = opts.idle_timeout.saturating_sub(last_activity.elapsed());
        if left.is_zero() {
            break RecordOutcome::IdleTimeout;
        }
        if !client.wait(Some(left))? {
            continue;
        }
        let batch = client.sync_r(None)?;
        if batch.is_empty() {
            continue;
        }
        last_activity = Instant::now();
        if let Some(t) = batch.get(TS_VAR).and_then(Value::as_f64) {
            ts = t;
            frames += 1;
        }
        out.append(ts, &batch)?;
        out.flush()?;
        client.send_r(&group, ACK_VAR, out.len() as i64)?;
        if let Some(Value::Bool(true)) = batch.get(DONE_VAR) {
            frames_total = batch.get(FRAMES_VAR).and_then(Value::as_i64);
            info!("stream done: {frames} frames received of {frames_total:?}");
            break RecordOutcome::Done;
        }
    };
    client.close();
    Ok(RecordReport {
        outcome,
        records: out.len(),
        frames,
        frames_total,
    })
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub binding: TransportBinding,
    pub group: String,
    /// Playback speed multiplier; infinity sends back to back.
    pub speed: f64,
    pub lockstep: bool,
    pub ack_timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub records: usize,
    pub elapsed: Duration,
}

/// Republishes each record to the group on the recorded schedule scaled by
/// `1 / speed`.
pub fn replay(records: &[Record], opts: &ReplayOptions) -> Result<ReplayReport, ToolError> {
    if !(opts.speed > 0.0) {
        return Err(ToolError::Usage(format!("speed must be positive, got {}", opts.speed)));
    }
    let mut client = Client::connect_retry(&opts.binding, CONNECT_ATTEMPTS, CONNECT_PAUSE)?;
    let group = [opts.group.as_str()];
    client.join(&group)?;
    let t0 = records.first().map_or(0.0, |r| r.ts);
    let started = Instant::now();
    for (i, r) in records.iter().enumerate() {
        if opts.speed.is_finite() {
            sleep_until(started + Duration::from_secs_f64((r.ts - t0) / opts.speed));
        }
        client.send_values(&group, r.values.clone())?;
        if opts.lockstep {
            await_ack(&mut client, i as i64 + 1, opts.ack_timeout)?;
        }
    }
    let elapsed = started.elapsed();
    client.close();
    Ok(ReplayReport { records: records.len(), elapsed })
}
