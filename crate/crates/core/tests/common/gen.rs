//! Seeded random generators for values, payloads and frames.

use gridmesh::value::{ArrayData, NamedValues, NdArray, Value};
use gridmesh::wire::{Command, Frame};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::Rng;

/// Any bit pattern, so NaN payloads and signed zeros show up.
pub fn any_f64(rng: &mut StdRng) -> f64 {
    match rng.gen_range(0..6) {
        0 => f64::from_bits(rng.gen()),
        1 => f64::from_bits(0x7ff8_0000_0000_0000 | rng.gen_range(1..1u64 << 51)),
        2 => [0.0, -0.0, f64::INFINITY, f64::NEG_INFINITY, f64::MIN_POSITIVE, f64::MAX][rng.gen_range(0..6)],
        _ => rng.gen_range(-1e6..1e6),
    }
}

pub fn any_string(rng: &mut StdRng, max: usize) -> String {
    let len = rng.gen_range(0..=max);
    (0..len)
        .map(|_| match rng.gen_range(0..4) {
            0 => rng.gen_range('\u{80}'..'\u{7ff}'),
            1 => rng.gen_range('\u{800}'..'\u{d7ff}'),
            2 => rng.gen_range('\u{10000}'..'\u{10ffff}'),
            _ => rng.gen_range(' '..'~'),
        })
        .collect()
}

pub fn any_array(rng: &mut StdRng, max_elems: usize) -> NdArray {
    let ndim = rng.gen_range(1..=8);
    let mut dims = Vec::with_capacity(ndim);
    let mut budget = max_elems.max(1);
    for _ in 0..ndim {
        let d = if rng.gen_bool(0.03) { 0 } else { rng.gen_range(1..=budget.min(40)) };
        budget = (budget / d.max(1)).max(1);
        dims.push(d as u32);
    }
    let n: usize = dims.iter().map(|&d| d as usize).product();
    let data = match rng.gen_range(0..3) {
        0 => ArrayData::Int((0..n).map(|_| rng.gen()).collect()),
        1 => ArrayData::Double((0..n).map(|_| any_f64(rng)).collect()),
        _ => ArrayData::Complex((0..n).map(|_| Complex64::new(any_f64(rng), any_f64(rng))).collect()),
    };
    NdArray::new(dims, data).expect("extents match data")
}

/// A random value nested at most `depth` containers deep.
pub fn any_value(rng: &mut StdRng, depth: usize, max_elems: usize) -> Value {
    let top = if depth == 0 { 7 } else { 9 };
    match rng.gen_range(0..top) {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => Value::Int(rng.gen()),
        3 => Value::Double(any_f64(rng)),
        4 => Value::Complex(Complex64::new(any_f64(rng), any_f64(rng))),
        5 => Value::Str(any_string(rng, 24)),
        6 => Value::Array(any_array(rng, max_elems)),
        7 => {
            let n = rng.gen_range(0..5);
            Value::List((0..n).map(|_| any_value(rng, depth - 1, max_elems)).collect())
        }
        _ => {
            let n = rng.gen_range(0..5);
            let mut pairs: Vec<(String, Value)> = Vec::new();
            while pairs.len() < n {
                let k = any_string(rng, 8);
                if pairs.iter().all(|(x, _)| *x != k) {
                    pairs.push((k, any_value(rng, depth - 1, max_elems)));
                }
            }
            Value::Map(pairs)
        }
    }
}

pub fn any_named_values(rng: &mut StdRng, max_pairs: usize) -> NamedValues {
    let mut nv = NamedValues::new();
    let n = rng.gen_range(0..=max_pairs);
    while nv.len() < n {
        let mut name = any_string(rng, 10);
        if name.is_empty() {
            name.push('v');
        }
        if nv.get(&name).is_none() {
            nv.push(name, any_value(rng, 2, 64)).unwrap();
        }
    }
    nv
}

/// A header value that survives the JSON round trip unchanged.
fn json_value(rng: &mut StdRng, depth: usize) -> Value {
    match rng.gen_range(0..if depth == 0 { 5 } else { 7 }) {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => Value::Int(rng.gen()),
        // Non-integral and finite, so it comes back as a double.
        3 => Value::Double(rng.gen_range(-1_000_000i32..1_000_000) as f64 + 0.25),
        4 => Value::Str(any_string(rng, 12)),
        5 => Value::List((0..rng.gen_range(0..4)).map(|_| json_value(rng, depth - 1)).collect()),
        _ => {
            let mut pairs: Vec<(String, Value)> = Vec::new();
            for _ in 0..rng.gen_range(0..4) {
                let k = any_string(rng, 6);
                if pairs.iter().all(|(x, _)| *x != k) {
                    pairs.push((k, json_value(rng, depth - 1)));
                }
            }
            Value::Map(pairs)
        }
    }
}

fn group_list(rng: &mut StdRng) -> Vec<String> {
    (0..rng.gen_range(1..4)).map(|i| format!("g{i}{}", any_string(rng, 4))).collect()
}

pub fn any_frame(rng: &mut StdRng) -> Frame {
    let cmd = Command::ALL[rng.gen_range(0..Command::ALL.len())];
    let mut f = match cmd {
        Command::Hello => Frame::hello(rng.gen_range(0..i64::MAX)),
        Command::Err => Frame::err(&any_string(rng, 12), any_string(rng, 30)),
        Command::Join => Frame::join(&group_list(rng)),
        Command::Leave => Frame::leave(&group_list(rng)),
        Command::Send => Frame::send(&group_list(rng), NamedValues::new()),
        Command::Sync => Frame::sync(if rng.gen() { None } else { Some(rng.gen_range(0..1000)) }),
        Command::Wait => Frame::wait(if rng.gen() { None } else { Some(rng.gen_range(0..100_000)) }),
        Command::Notify => Frame::notify(rng.gen()),
        other => Frame::new(other),
    };
    for i in 0..rng.gen_range(0..3) {
        f = f.with_header(&format!("x{i}"), json_value(rng, 2));
    }
    f.with_payload(any_named_values(rng, 4))
}
