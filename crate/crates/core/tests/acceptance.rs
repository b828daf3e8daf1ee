//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use common::gen::{any_frame, any_value};
use common::geometry::{check_delaunay, hull_area, signed_area};
use gridmesh::case::{load_case, TOPO_BUS};
use gridmesh::client::Client;
use gridmesh::contour::{barycentric, delaunay, interpolate, ProjectedPoint, TriangulationError, DELAUNAY_EPS};
use gridmesh::server::ServerHandle;
use gridmesh::tools::{load_recording, RecordingWriter, DONE_VAR};
use gridmesh::value::{decode_value, encode_value, NamedValues, NdArray};
use gridmesh::wire::{decode_frame, encode_frame, Frame, TransportBinding};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
}

fn p(x: f64, y: f64) -> ProjectedPoint {
    ProjectedPoint::new(x, y)
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridmesh"))
}

/// `gridmesh serve` on an ephemeral TCP port, killed on drop.
struct Serve {
    child: Child,
    binding: String,
}

impl Serve {
    fn start() -> Serve {
        let mut child = bin()
            .args(["serve", "--tcp", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let binding = line.trim().strip_prefix("listening ").expect("serve banner").to_owned();
        Serve { child, binding }
    }
}

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn value_round_trip() -> Verdict {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xA11);
    for i in 0..10_000 {
        let v = any_value(&mut rng, 4, 10_000);
        let bytes = encode_value(&v).map_err(|e| format!("value {i}: {e}"))?;
        let (back, used) = decode_value(&bytes).map_err(|e| format!("value {i}: {e}"))?;
        ensure(back == v && used == bytes.len(), || format!("value {i} differs after round trip"))?;
    }
    within(started, Duration::from_secs(30))?;
    Ok(format!("10000 values in {:.1}s", started.elapsed().as_secs_f64()))
}

fn frame_concatenation() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0xA12);
    let mut total = 0;
    for i in 0..1000 {
        let frames: Vec<Frame> = (0..rng.gen_range(1..=10)).map(|_| any_frame(&mut rng)).collect();
        let mut stream = Vec::new();
        for f in &frames {
            stream.extend(encode_frame(f).map_err(|e| e.to_string())?);
        }
        let mut rest = &stream[..];
        let mut back = Vec::new();
        while !rest.is_empty() {
            let (f, used) = decode_frame(rest).map_err(|e| format!("stream {i}: {e}"))?;
            back.push(f);
            rest = &rest[used..];
        }
        ensure(back == frames, || format!("stream {i} decoded to a different sequence"))?;
        total += frames.len();
    }
    Ok(format!("1000 streams, {total} frames, no residue"))
}

fn protocol_oracle() -> (Verdict, Verdict) {
    let server = ServerHandle::start_tcp().expect("server");
    let report = common::oracle::run(&server, 0xA13, 10_000);
    let eq = if report.mismatches.is_empty() {
        Ok(format!("{} commands, {} syncs, 100% agreement", report.commands, report.syncs))
    } else {
        Err(format!("{} disagreements, first: {}", report.mismatches.len(), report.mismatches[0]))
    };
    let iso = if report.isolation_violations == 0 {
        Ok(format!("{} deliveries, 0 from non-joined groups", report.deliveries))
    } else {
        Err(format!("{} of {} deliveries came from non-joined groups", report.isolation_violations, report.deliveries))
    };
    (eq, iso)
}

const THROUGHPUT_FLOOR: f64 = 5_000_000.0;

fn throughput() -> Verdict {
    let started = Instant::now();
    let serve = Serve::start();
    let out = bin()
        .args(["bench", "--k", "1000000", "--m", "20", "--direction", "send", "--server", &serve.binding])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("bench failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    let line = String::from_utf8_lossy(&out.stdout).trim().to_owned();
    let rate: f64 = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("doubles_per_s="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("unparsable report: {line}"))?;
    within(started, Duration::from_secs(60))?;
    ensure(rate >= THROUGHPUT_FLOOR, || format!("{rate:.0} doubles/s is below {THROUGHPUT_FLOOR:.0}"))?;
    Ok(format!("{:.1}M doubles/s (K=1e6, M=20, tcp)", rate / 1e6))
}

fn delaunay_sets() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0xA14);
    let mut done = 0;
    let mut skipped = 0;
    while done < 1000 {
        let n = rng.gen_range(3..=12);
        // A quarter of the sets sit on a small integer lattice, which is
        // full of cocircular quadruples.
        let pts: Vec<ProjectedPoint> = if rng.gen_bool(0.25) {
            (0..n).map(|_| p(rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64)).collect()
        } else {
            (0..n).map(|_| p(rng.gen(), rng.gen())).collect()
        };
        let tri = match delaunay(&pts) {
            Ok(t) => t,
            Err(TriangulationError::AllCollinear | TriangulationError::DuplicatePoint(..)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(format!("{e}: {pts:?}")),
        };
        check_delaunay(&pts, tri.triangles(), DELAUNAY_EPS).map_err(|e| format!("{e}: {pts:?}"))?;
        let area: f64 = tri.triangles().iter().map(|&[a, b, c]| signed_area(pts[a], pts[b], pts[c])).sum();
        let hull = hull_area(&pts);
        ensure((area - hull).abs() <= 1e-9 * hull.max(1.0), || format!("covers {area}, hull {hull}: {pts:?}"))?;
        for _ in 0..10 {
            let again = delaunay(&pts).map_err(|e| e.to_string())?;
            ensure(again.triangles() == tri.triangles(), || format!("nondeterministic on {pts:?}"))?;
        }
        done += 1;
    }
    Ok(format!("1000 sets at eps {DELAUNAY_EPS:e}, 10 repeats each ({skipped} degenerate inputs redrawn)"))
}

fn interpolation() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0xA15);
    let pts: Vec<ProjectedPoint> = (0..25).map(|_| p(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0))).collect();
    let tri = delaunay(&pts).map_err(|e| e.to_string())?;
    let hull = hull_area(&pts);

    // In-hull test that does not touch the triangulation: adding an interior
    // point leaves the hull area unchanged.
    let mut queries = Vec::new();
    while queries.len() < 100 {
        let q = p(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0));
        let mut with = pts.clone();
        with.push(q);
        if hull_area(&with) <= hull * (1.0 + 1e-12) {
            queries.push(q);
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (a, b, c) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let f = |q: ProjectedPoint| a + b * q.x + c * q.y;
        let vals: Vec<f64> = pts.iter().map(|&q| f(q)).collect();
        for &q in &queries {
            let got = interpolate(&tri, &vals, q).ok_or_else(|| format!("{q:?} reported outside the hull"))?;
            worst = worst.max((got - f(q)).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("linear field error {worst:e}"))?;

    let vals: Vec<f64> = (0..pts.len()).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let mut seam: f64 = 0.0;
    let mut edges = 0;
    for (t1, a) in tri.triangles().iter().enumerate() {
        for (t2, b) in tri.triangles().iter().enumerate().skip(t1 + 1) {
            let shared: Vec<usize> = a.iter().copied().filter(|v| b.contains(v)).collect();
            if shared.len() != 2 {
                continue;
            }
            edges += 1;
            let (u, v) = (pts[shared[0]], pts[shared[1]]);
            for k in 0..=10 {
                let s = k as f64 / 10.0;
                let q = p(u.x + s * (v.x - u.x), u.y + s * (v.y - u.y));
                let eval = |t: usize, idx: &[usize; 3]| {
                    let w = barycentric(tri.vertices(t), q).expect("edge point lies in both triangles");
                    w[0] * vals[idx[0]] + w[1] * vals[idx[1]] + w[2] * vals[idx[2]]
                };
                seam = seam.max((eval(t1, a) - eval(t2, b)).abs());
            }
        }
    }
    ensure(seam <= 1e-9, || format!("shared-edge jump {seam:e}"))?;
    Ok(format!("100 points x 50 fields, max error {worst:.1e}; {edges} shared edges, max jump {seam:.1e}"))
}

/// Palette written from the documented stops: blue, green, red.
fn palette(v: f64, center: f64, half_width: f64) -> [u8; 3] {
    let t = ((v - (center - half_width)) / (2.0 * half_width)).clamp(0.0, 1.0);
    let (r, g, b) = if t <= 0.5 {
        (0.0, 2.0 * t, 1.0 - 2.0 * t)
    } else {
        (2.0 * t - 1.0, 2.0 - 2.0 * t, 0.0)
    };
    [r, g, b].map(|c| (c * 255.0 + 0.5).floor() as u8)
}

fn mercator(lat: f64, lon: f64) -> ProjectedPoint {
    let phi = lat.to_radians();
    p(lon.to_radians(), (std::f64::consts::FRAC_PI_4 + phi / 2.0).tan().ln())
}

// Large enough that the pixel nearest each bus resolves the synthetic
// wavefront, where neighboring buses can differ by the full amplitude.
const RENDER_W: u32 = 1600;
const RENDER_H: u32 = 1200;
const CENTER: f64 = 60.0;
const HALF_WIDTH: f64 = 0.1;

fn end_to_end() -> Verdict {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rec_path = dir.path().join("run.drec");
    let out_dir = dir.path().join("frames");
    let case_path = fixture("ieee39/case.json");
    let serve = Serve::start();

    let mut recorder = bin()
        .args(["record", "--server", &serve.binding, "--group", "e2e", "--idle-timeout", "30", "--out"])
        .arg(&rec_path)
        .stderr(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let binding: TransportBinding = serve.binding.parse()?;
    let mut probe = Client::connect(&binding).map_err(|e| e.to_string())?;
    while !probe.list().map_err(|e| e.to_string())?.iter().any(|g| g.name == "e2e") {
        ensure(started.elapsed() < Duration::from_secs(20), || "recorder never joined".into())?;
        thread::sleep(Duration::from_millis(10));
    }
    probe.close();

    let drive = bin()
        .args(["drive", "--server", &serve.binding, "--group", "e2e", "--rate", "max", "--lockstep", "--frames", "100"])
        .arg("--case")
        .arg(&case_path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(drive.status.success(), || format!("drive failed: {}", String::from_utf8_lossy(&drive.stderr)))?;
    let status = recorder.wait().map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("record exited with {status}"))?;

    let records = load_recording(&rec_path).map_err(|e| e.to_string())?;
    ensure(records.len() == 102, || format!("{} records, expected 102", records.len()))?;
    ensure(records[0].values.get(TOPO_BUS).is_some(), || "first record is not the topology".into())?;
    let frames = &records[1..101];
    ensure(frames.iter().all(|r| r.values.get("freq").is_some()), || "a frame record lacks freq".into())?;
    ensure(frames.windows(2).all(|w| w[0].ts < w[1].ts), || "frame timestamps not increasing".into())?;
    ensure(records[101].values.get(DONE_VAR).and_then(|v| v.as_bool()) == Some(true), || "no done marker".into())?;

    let render = bin()
        .args(["render", "--center", &CENTER.to_string(), "--half-width", &HALF_WIDTH.to_string()])
        .args(["--size", &format!("{RENDER_W}x{RENDER_H}")])
        .arg("--case")
        .arg(&case_path)
        .arg("--recording")
        .arg(&rec_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(render.status.success(), || format!("render failed: {}", String::from_utf8_lossy(&render.stderr)))?;

    // Rebuild the view: projected bounding box grown by 5% per side.
    let case = load_case(&case_path).map_err(|e| e.to_string())?;
    let proj: Vec<ProjectedPoint> = case.buses.iter().map(|b| mercator(b.lat, b.lon)).collect();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for q in &proj {
        (x0, y0, x1, y1) = (x0.min(q.x), y0.min(q.y), x1.max(q.x), y1.max(q.y));
    }
    let (mx, my) = ((x1 - x0) * 0.05, (y1 - y0) * 0.05);
    let (x0, y0, x1, y1) = (x0 - mx, y0 - my, x1 + mx, y1 + my);
    let center = |c: u32, r: u32| {
        p(
            x0 + (c as f64 + 0.5) / RENDER_W as f64 * (x1 - x0),
            y1 - (r as f64 + 0.5) / RENDER_H as f64 * (y1 - y0),
        )
    };

    let load = |i: usize| -> Result<image::RgbImage, String> {
        let path = out_dir.join(format!("frame_{i:06}.ppm"));
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
            .map_err(|e| format!("{}: {e}", path.display()))?
            .to_rgb8();
        ensure(img.dimensions() == (RENDER_W, RENDER_H), || format!("{} has size {:?}", path.display(), img.dimensions()))?;
        Ok(img)
    };
    let files = std::fs::read_dir(&out_dir).map_err(|e| e.to_string())?.count();
    ensure(files == 100, || format!("{files} files in the output directory"))?;

    // The palette never produces white, so white pixels lie outside the hull.
    let first = load(0)?;
    let covered = |c: u32, r: u32| first.get_pixel(c, r).0 != [255, 255, 255];
    let mut nearest = Vec::with_capacity(proj.len());
    for q in &proj {
        let mut best: Option<(f64, u32, u32)> = None;
        for r in 0..RENDER_H {
            for c in 0..RENDER_W {
                let d = center(c, r).distance(q);
                if best.is_none_or(|b| d < b.0) && covered(c, r) {
                    best = Some((d, c, r));
                }
            }
        }
        nearest.push(best.ok_or("no covered pixel")?);
    }

    let mut worst = 0u8;
    for (i, f) in frames.iter().enumerate() {
        let img = if i == 0 { first.clone() } else { load(i)? };
        let vals = f.values.get("freq").and_then(|v| v.as_array()).and_then(NdArray::as_f64).ok_or("freq is not f64")?;
        for (bus, &(_, c, r)) in nearest.iter().enumerate() {
            let want = palette(vals[bus], CENTER, HALF_WIDTH);
            let got = img.get_pixel(c, r).0;
            for k in 0..3 {
                worst = worst.max(want[k].abs_diff(got[k]));
            }
        }
    }
    ensure(worst <= 1, || format!("a bus pixel is off by {worst}/255"))?;
    within(started, Duration::from_secs(120))?;
    let far = nearest.iter().map(|n| n.0).fold(0.0, f64::max) / ((x1 - x0) / RENDER_W as f64);
    Ok(format!(
        "102 records, 100 PPMs at {RENDER_W}x{RENDER_H}, bus pixels within {worst}/255 (farthest {far:.2} px), {:.1}s",
        started.elapsed().as_secs_f64()
    ))
}

fn replay_timing() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("span.drec");
    let mut w = RecordingWriter::create(&path).map_err(|e| e.to_string())?;
    for i in 0..=40 {
        let ts = i as f64 * 0.05;
        let nv = NamedValues::new().with("ts", ts).and_then(|nv| nv.with("freq", NdArray::from_f64(vec![60.0; 39])));
        w.append(ts, &nv.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())?;
    drop(w);

    let serve = Serve::start();
    let mut parts = Vec::new();
    for (speed, expect) in [(1.0, 2.0), (2.0, 1.0)] {
        let started = Instant::now();
        let out = bin()
            .args(["replay", "--server", &serve.binding, "--speed", &speed.to_string(), "--recording"])
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        let wall = started.elapsed().as_secs_f64();
        ensure(out.status.success(), || format!("replay failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        ensure((wall - expect).abs() <= 0.2 * expect, || format!("speed {speed}: {wall:.3}s, expected {expect}s +/- 20%"))?;
        parts.push(format!("speed {speed}: {wall:.2}s"));
    }
    Ok(parts.join(", "))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, verdict: Verdict| {
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    };
    let guarded = |f: fn() -> Verdict| {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        })
    };

    report("value round-trip", guarded(value_round_trip));
    report("frame self-delimiting", guarded(frame_concatenation));
    let (eq, iso) = catch_unwind(protocol_oracle).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    report("protocol oracle equivalence", eq);
    report("isolation", iso);
    report("throughput", guarded(throughput));
    report("delaunay correctness", guarded(delaunay_sets));
    report("interpolation", guarded(interpolation));
    report("end-to-end pipeline", guarded(end_to_end));
    report("replay timing", guarded(replay_timing));

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
