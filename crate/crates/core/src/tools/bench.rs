use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use crate::client::Client;
use crate::value::{NamedValues, NdArray, Value};
use crate::wire::TransportBinding;

use super::pipeline::ACK_VAR;
use super::ToolError;

/// Sends the producer may have in flight before it waits for the consumer.
/// Each in-flight send uses its own variable, so nothing is coalesced away.
const WINDOW: usize = 4;
const STALL_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchDirection {
    /// Producer to consumer only.
    Send,
    /// One array at a time, echoed back by the consumer; both deliveries
    /// count.
    Roundtrip,
}

impl FromStr for BenchDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "send" => Ok(BenchDirection::Send),
            "roundtrip" => Ok(BenchDirection::Roundtrip),
            other => Err(format!("unknown direction {other:?} (send|roundtrip)")),
        }
    }
}

impl fmt::Display for BenchDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchDirection::Send => "send",
            BenchDirection::Roundtrip => "roundtrip",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub binding: TransportBinding,
    pub group: String,
    pub k: usize,
    pub m: usize,
    pub direction: BenchDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub direction: BenchDirection,
    pub k: usize,
    pub m: usize,
    /// Payload doubles delivered to receivers; framing is not counted.
    pub doubles: u64,
    /// Arrays delivered.
    pub frames: u64,
    /// Encoded payload bytes delivered.
    pub bytes: u64,
    pub elapsed: Duration,
}

impl BenchReport {
    fn rate(&self, n: u64) -> f64 {
        n as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }

    pub fn doubles_per_sec(&self) -> f64 {
        self.rate(self.doubles)
    }

    pub fn frames_per_sec(&self) -> f64 {
        self.rate(self.frames)
    }

    pub fn bytes_per_sec(&self) -> f64 {
        self.rate(self.bytes)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bench direction={} k={} m={} doubles={} frames={} bytes={} secs={:.6} doubles_per_s={:.0} frames_per_s={:.1} bytes_per_s={:.0}",
            self.direction,
            self.k,
            self.m,
            self.doubles,
            self.frames,
            self.bytes,
            self.elapsed.as_secs_f64(),
            self.doubles_per_sec(),
            self.frames_per_sec(),
            self.bytes_per_sec()
        )
    }
}

#[derive(Default)]
struct Tally {
    doubles: u64,
    frames: u64,
    bytes: u64,
}

impl Tally {
    fn add(&mut self, v: &Value, name: &str) {
        if let Some(a) = v.as_array() {
            self.doubles += a.data().len() as u64;
            self.frames += 1;
            self.bytes += (4 + name.len() + v.encoded_len()) as u64;
        }
    }
}

fn slot(i: usize) -> String {
    format!("b{}", i % WINDOW)
}

/// Waits until the workspace counter `name` reaches `at_least`.
fn await_count(client: &mut Client, name: &str, at_least: i64) -> Result<(), ToolError> {
    let deadline = Instant::now() + STALL_TIMEOUT;
    while client.workspace().get(name).and_then(Value::as_i64).unwrap_or(0) < at_least {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(ToolError::AckTimeout { expected: at_least });
        }
        if client.wait(Some(left))? {
            client.sync(None)?;
        }
    }
    Ok(())
}

fn await_echo(client: &mut Client, tally: &mut Tally) -> Result<(), ToolError> {
    loop {
        if !client.wait(Some(STALL_TIMEOUT))? {
            return Err(ToolError::AckTimeout { expected: tally.frames as i64 + 1 });
        }
        let mut got = false;
        for (name, v) in client.sync_r(None)?.iter() {
            if name.starts_with('e') {
                tally.add(v, name);
                got = true;
            }
        }
        if got {
            return Ok(());
        }
    }
}

fn consume(mut client: Client, group: String, m: usize, direction: BenchDirection) -> Result<(Tally, Instant), ToolError> {
    let group = [group.as_str()];
    let mut tally = Tally::default();
    let mut seen = 0usize;
    while seen < m {
        if !client.wait(Some(STALL_TIMEOUT))? {
            return Err(ToolError::AckTimeout { expected: seen as i64 + 1 });
        }
        let batch = client.sync_r(None)?;
        let mut echo = NamedValues::new();
        for (name, v) in batch.iter() {
            if let Some(slot) = name.strip_prefix('b') {
                tally.add(v, name);
                seen += 1;
                if direction == BenchDirection::Roundtrip {
                    echo.push(format!("e{slot}"), v.clone())?;
                }
            }
        }
        if !echo.is_empty() {
            let mut payload = echo;
            payload.upsert(ACK_VAR, Value::Int(seen as i64));
            client.send_values(&group, payload)?;
        } else {
            client.send_r(&group, ACK_VAR, seen as i64)?;
        }
    }
    let done = Instant::now();
    client.close();
    Ok((tally, done))
}

/// Pushes `m` arrays of `k` doubles through the server from a producer to
/// a consumer in the same process and measures delivered throughput.
pub fn bench(opts: &BenchOptions) -> Result<BenchReport, ToolError> {
    let group = [opts.group.as_str()];
    let mut consumer = Client::connect(&opts.binding)?;
    consumer.join(&group)?;
    let mut producer = Client::connect(&opts.binding)?;
    producer.join(&group)?;

    let array = NdArray::from_f64((0..opts.k).map(|i| i as f64 * 0.5).collect());
    let slots = match opts.direction {
        BenchDirection::Send => WINDOW.min(opts.m),
        BenchDirection::Roundtrip => 1,
    };
    for i in 0..slots {
        producer.workspace_mut().set(slot(i), array.clone());
    }
    drop(array);

    let (g, m, dir) = (opts.group.clone(), opts.m, opts.direction);
    let worker = thread::spawn(move || consume(consumer, g, m, dir));

    let start = Instant::now();
    let mut echoed = Tally::default();
    match opts.direction {
        BenchDirection::Send => {
            for i in 0..opts.m {
                if i >= WINDOW {
                    await_count(&mut producer, ACK_VAR, (i - WINDOW + 1) as i64)?;
                }
                producer.send(&group, &[slot(i)])?;
            }
        }
        BenchDirection::Roundtrip => {
            for _ in 0..opts.m {
                producer.send(&group, &[slot(0)])?;
                await_echo(&mut producer, &mut echoed)?;
            }
        }
    }
    let echoes_done = Instant::now();
    let (mut tally, consumer_done) = worker.join().expect("bench consumer panicked")?;
    let end = match opts.direction {
        BenchDirection::Send => consumer_done,
        BenchDirection::Roundtrip => echoes_done,
    };
    producer.close();
    tally.doubles += echoed.doubles;
    tally.frames += echoed.frames;
    tally.bytes += echoed.bytes;
    Ok(BenchReport {
        direction: opts.direction,
        k: opts.k,
        m: opts.m,
        doubles: tally.doubles,
        frames: tally.frames,
        bytes: tally.bytes,
        elapsed: end.duration_since(start),
    })
}
