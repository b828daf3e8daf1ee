//! Byte-level reference encoder, written straight from the layout table.

use gridmesh::value::{ArrayData, NamedValues, Value};

fn u32le(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_le_bytes());
}

fn string(out: &mut Vec<u8>, s: &str) {
    out.push(0x05);
    u32le(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(v: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    put(&mut out, v);
    out
}

fn put(out: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Null => out.push(0x00),
        Value::Bool(b) => out.extend_from_slice(&[0x01, *b as u8]),
        Value::Int(i) => {
            out.push(0x02);
            out.extend_from_slice(&i.to_le_bytes());
        }
        Value::Double(d) => {
            out.push(0x03);
            out.extend_from_slice(&d.to_bits().to_le_bytes());
        }
        Value::Complex(c) => {
            out.push(0x04);
            out.extend_from_slice(&c.re.to_bits().to_le_bytes());
            out.extend_from_slice(&c.im.to_bits().to_le_bytes());
        }
        Value::Str(s) => string(out, s),
        Value::Array(a) => {
            out.push(0x06);
            out.push(match a.data() {
                ArrayData::Int(_) => 0x02,
                ArrayData::Double(_) => 0x03,
                ArrayData::Complex(_) => 0x04,
            });
            out.push(a.dims().len() as u8);
            for &d in a.dims() {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match a.data() {
                ArrayData::Int(xs) => xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::Double(xs) => xs.iter().for_each(|x| out.extend_from_slice(&x.to_bits().to_le_bytes())),
                ArrayData::Complex(xs) => xs.iter().for_each(|x| {
                    out.extend_from_slice(&x.re.to_bits().to_le_bytes());
                    out.extend_from_slice(&x.im.to_bits().to_le_bytes());
                }),
            }
        }
        Value::List(items) => {
            out.push(0x07);
            u32le(out, items.len());
            items.iter().for_each(|i| put(out, i));
        }
        Value::Map(pairs) => {
            out.push(0x08);
            u32le(out, pairs.len());
            for (k, v) in pairs {
                string(out, k);
                put(out, v);
            }
        }
    }
}

pub fn encode_named(nv: &NamedValues) -> Vec<u8> {
    let mut out = Vec::new();
    u32le(&mut out, nv.len());
    for (name, v) in nv.iter() {
        u32le(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put(&mut out, v);
    }
    out
}
