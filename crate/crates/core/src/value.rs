//! Typed values exchanged between clients and their canonical binary encoding.
//!
//! Layout (all multi-byte fields little-endian):
//!
//! ```text
//! 0x00 Null
//! 0x01 Bool      u8 (0 or 1)
//! 0x02 Int       i64
//! 0x03 Double    f64
//! 0x04 Complex   f64 re, f64 im
//! 0x05 Str       u32 byte length, UTF-8 bytes
//! 0x06 NDArray   u8 element tag (0x02|0x03|0x04), u8 dim count, u32 per extent, row-major elements
//! 0x07 List      u32 count, values
//! 0x08 Map       u32 count, (Str-encoded key, value) pairs
//! ```
//!
//! Equal values always produce identical bytes. Float comparison through
//! [`Value`]'s `PartialEq` is by bit pattern, so NaN payloads survive a
//! round trip and compare equal to themselves.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

pub const TAG_NULL: u8 = 0x00;
pub const TAG_BOOL: u8 = 0x01;
pub const TAG_INT: u8 = 0x02;
pub const TAG_DOUBLE: u8 = 0x03;
pub const TAG_COMPLEX: u8 = 0x04;
pub const TAG_STR: u8 = 0x05;
pub const TAG_NDARRAY: u8 = 0x06;
pub const TAG_LIST: u8 = 0x07;
pub const TAG_MAP: u8 = 0x08;

/// Maximum List/Map nesting depth.
pub const MAX_DEPTH: usize = 32;
/// Maximum number of array dimensions.
pub const MAX_DIMS: usize = 8;
/// Largest encoded size of a single value.
pub const MAX_ENCODED_LEN: usize = (1 << 31) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    /// The input bytes are not a valid encoding. Fatal to a connection.
    #[error("malformed value at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("encoded value is {0} bytes, limit is {MAX_ENCODED_LEN}")]
    TooLarge(usize),
}

impl ValueError {
    fn malformed(offset: usize, reason: impl Into<String>) -> Self {
        ValueError::Malformed {
            offset,
            reason: reason.into(),
        }
    }
}

/// Element storage of an [`NdArray`].
#[derive(Debug, Clone)]
pub enum ArrayData {
    Int(Vec<i64>),
    Double(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::Int(v) => v.len(),
            ArrayData::Double(v) => v.len(),
            ArrayData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elem_tag(&self) -> u8 {
        match self {
            ArrayData::Int(_) => TAG_INT,
            ArrayData::Double(_) => TAG_DOUBLE,
            ArrayData::Complex(_) => TAG_COMPLEX,
        }
    }

    fn elem_size(&self) -> usize {
        match self {
            ArrayData::Int(_) | ArrayData::Double(_) => 8,
            ArrayData::Complex(_) => 16,
        }
    }
}

impl PartialEq for ArrayData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ArrayData::Int(a), ArrayData::Int(b)) => a == b,
            (ArrayData::Double(a), ArrayData::Double(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ArrayData::Complex(a), ArrayData::Complex(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| complex_bits_eq(x, y))
            }
            _ => false,
        }
    }
}

/// A homogeneous row-major N-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    dims: Vec<u32>,
    data: ArrayData,
}

impl NdArray {
    /// Builds an array, checking that `dims` has 1 to 8 entries and that
    /// their product equals the element count. Zero extents are allowed.
    pub fn new(dims: Vec<u32>, data: ArrayData) -> Result<Self, ValueError> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(ValueError::Invalid(format!(
                "array must have 1..={MAX_DIMS} dims, got {}",
                dims.len()
            )));
        }
        let expected = element_count(&dims)
            .ok_or_else(|| ValueError::Invalid("array extent product overflows".into()))?;
        if expected != data.len() {
            return Err(ValueError::Invalid(format!(
                "dims {:?} need {} elements, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(NdArray { dims, data })
    }

    /// One-dimensional array of doubles.
    pub fn from_f64(data: Vec<f64>) -> Self {
        let n = u32::try_from(data.len()).expect("array extent exceeds u32");
        NdArray {
            dims: vec![n],
            data: ArrayData::Double(data),
        }
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn into_data(self) -> ArrayData {
        self.data
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.data {
            ArrayData::Double(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match &self.data {
            ArrayData::Int(v) => Some(v),
            _ => None,
        }
    }
}

fn element_count(dims: &[u32]) -> Option<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Double(f64),
    Complex(Complex64),
    Str(String),
    Array(NdArray),
    List(Vec<Value>),
    /// Insertion-ordered; keys must be unique.
    Map(Vec<(String, Value)>),
}

fn complex_bits_eq(a: &Complex64, b: &Complex64) -> bool {
    a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        use Value::*;
        match (self, other) {
            (Null, Null) => true,
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            (Double(a), Double(b)) => a.to_bits() == b.to_bits(),
            (Complex(a), Complex(b)) => complex_bits_eq(a, b),
            (Str(a), Str(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            (List(a), List(b)) => a == b,
            (Map(a), Map(b)) => a == b,
            _ => false,
        }
    }
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Double(_) => "double",
            Value::Complex(_) => "complex",
            Value::Str(_) => "str",
            Value::Array(_) => "ndarray",
            Value::List(_) => "list",
            Value::Map(_) => "map",
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Double(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&NdArray> {
        match self {
            Value::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    /// List/Map nesting depth; scalars and arrays are 0.
    pub fn depth(&self) -> usize {
        match self {
            Value::List(items) => 1 + items.iter().map(Value::depth).max().unwrap_or(0),
            Value::Map(pairs) => 1 + pairs.iter().map(|(_, v)| v.depth()).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Checks the invariants not enforced by construction: unique map keys
    /// and bounded nesting.
    pub fn validate(&self) -> Result<(), ValueError> {
        self.validate_at(1)
    }

    fn validate_at(&self, level: usize) -> Result<(), ValueError> {
        match self {
            Value::List(items) => {
                if level > MAX_DEPTH {
                    return Err(ValueError::Invalid(format!("nesting deeper than {MAX_DEPTH}")));
                }
                items.iter().try_for_each(|v| v.validate_at(level + 1))
            }
            Value::Map(pairs) => {
                if level > MAX_DEPTH {
                    return Err(ValueError::Invalid(format!("nesting deeper than {MAX_DEPTH}")));
                }
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if pairs[..i].iter().any(|(other, _)| other == k) {
                        return Err(ValueError::Invalid(format!("duplicate map key {k:?}")));
                    }
                    v.validate_at(level + 1)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Exact size of [`encode_value`]'s output.
    pub fn encoded_len(&self) -> usize {
        match self {
            Value::Null => 1,
            Value::Bool(_) => 2,
            Value::Int(_) | Value::Double(_) => 9,
            Value::Complex(_) => 17,
            Value::Str(s) => 5 + s.len(),
            Value::Array(a) => 3 + 4 * a.dims.len() + a.data.elem_size() * a.data.len(),
            Value::List(items) => 5 + items.iter().map(Value::encoded_len).sum::<usize>(),
            Value::Map(pairs) => {
                5 + pairs
                    .iter()
                    .map(|(k, v)| 5 + k.len() + v.encoded_len())
                    .sum::<usize>()
            }
        }
    }

    /// Appends the canonical encoding to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), ValueError> {
        self.validate()?;
        let len = self.encoded_len();
        if len > MAX_ENCODED_LEN {
            return Err(ValueError::TooLarge(len));
        }
        out.reserve(len);
        write_value(self, out);
        Ok(())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Double(d) => write!(f, "{d}"),
            Value::Complex(c) => write!(f, "{}{:+}i", c.re, c.im),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Array(a) => write!(f, "ndarray<{}>{:?}", a.data.elem_tag(), a.dims),
            Value::List(l) => write!(f, "list[{}]", l.len()),
            Value::Map(m) => write!(f, "map[{}]", m.len()),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(d: f64) -> Self {
        Value::Double(d)
    }
}

impl From<Complex64> for Value {
    fn from(c: Complex64) -> Self {
        Value::Complex(c)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<NdArray> for Value {
    fn from(a: NdArray) -> Self {
        Value::Array(a)
    }
}

/// Encodes `v` canonically.
pub fn encode_value(v: &Value) -> Result<Vec<u8>, ValueError> {
    let mut out = Vec::new();
    v.encode_into(&mut out)?;
    Ok(out)
}

/// Decodes one value from the front of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_value(bytes: &[u8]) -> Result<(Value, usize), ValueError> {
    let mut r = Reader::new(bytes);
    let v = r.value(1)?;
    Ok((v, r.pos))
}

fn write_u32(out: &mut Vec<u8>, n: usize) {
    // Callers have already bounded lengths by MAX_ENCODED_LEN.
    out.extend_from_slice(&(n as u32).to_le_bytes());
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn write_value(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Null => out.push(TAG_NULL),
        Value::Bool(b) => {
            out.push(TAG_BOOL);
            out.push(u8::from(*b));
        }
        Value::Int(i) => {
            out.push(TAG_INT);
            out.extend_from_slice(&i.to_le_bytes());
        }
        Value::Double(d) => {
            out.push(TAG_DOUBLE);
            out.extend_from_slice(&d.to_le_bytes());
        }
        Value::Complex(c) => {
            out.push(TAG_COMPLEX);
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        Value::Str(s) => {
            out.push(TAG_STR);
            write_str(out, s);
        }
        Value::Array(a) => {
            out.push(TAG_NDARRAY);
            out.push(a.data.elem_tag());
            out.push(a.dims.len() as u8);
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            write_elements(&a.data, out);
        }
        Value::List(items) => {
            out.push(TAG_LIST);
            write_u32(out, items.len());
            for item in items {
                write_value(item, out);
            }
        }
        Value::Map(pairs) => {
            out.push(TAG_MAP);
            write_u32(out, pairs.len());
            for (k, v) in pairs {
                out.push(TAG_STR);
                write_str(out, k);
                write_value(v, out);
            }
        }
    }
}

#[cfg(target_endian = "little")]
fn write_elements(data: &ArrayData, out: &mut Vec<u8>) {
    match data {
        ArrayData::Int(v) => out.extend_from_slice(bytemuck::cast_slice(v)),
        ArrayData::Double(v) => out.extend_from_slice(bytemuck::cast_slice(v)),
        ArrayData::Complex(v) => out.extend_from_slice(bytemuck::cast_slice(v)),
    }
}

#[cfg(not(target_endian = "little"))]
fn write_elements(data: &ArrayData, out: &mut Vec<u8>) {
    match data {
        ArrayData::Int(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::Double(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::Complex(v) => v.iter().for_each(|c| {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ValueError> {
        if n > self.remaining() {
            return Err(ValueError::malformed(self.pos, "truncated input"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ValueError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ValueError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ValueError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ValueError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn string(&mut self) -> Result<String, ValueError> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let bytes = self.take(len)?;
        std::str::from_utf8(bytes)
            .map(str::to_owned)
            .map_err(|_| ValueError::malformed(start, "invalid UTF-8"))
    }

    /// Rejects counts that could not possibly fit in what is left, so a
    /// hostile count never drives a huge allocation.
    fn count(&mut self, min_item: usize) -> Result<usize, ValueError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.remaining() {
            return Err(ValueError::malformed(at, "count exceeds remaining input"));
        }
        Ok(n)
    }

    fn value(&mut self, level: usize) -> Result<Value, ValueError> {
        let at = self.pos;
        let tag = self.u8()?;
        Ok(match tag {
            TAG_NULL => Value::Null,
            TAG_BOOL => match self.u8()? {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                _ => return Err(ValueError::malformed(at + 1, "bool byte must be 0 or 1")),
            },
            TAG_INT => Value::Int(self.u64()? as i64),
            TAG_DOUBLE => Value::Double(self.f64()?),
            TAG_COMPLEX => {
                let re = self.f64()?;
                let im = self.f64()?;
                Value::Complex(Complex64::new(re, im))
            }
            TAG_STR => Value::Str(self.string()?),
            TAG_NDARRAY => Value::Array(self.array()?),
            TAG_LIST => {
                if level > MAX_DEPTH {
                    return Err(ValueError::malformed(at, "nesting too deep"));
                }
                let n = self.count(1)?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.value(level + 1)?);
                }
                Value::List(items)
            }
            TAG_MAP => {
                if level > MAX_DEPTH {
                    return Err(ValueError::malformed(at, "nesting too deep"));
                }
                let n = self.count(6)?;
                let mut pairs: Vec<(String, Value)> = Vec::with_capacity(n);
                for _ in 0..n {
                    let key_at = self.pos;
                    if self.u8()? != TAG_STR {
                        return Err(ValueError::malformed(key_at, "map key is not a string"));
                    }
                    let key = self.string()?;
                    if pairs.iter().any(|(k, _)| *k == key) {
                        return Err(ValueError::malformed(key_at, format!("duplicate map key {key:?}")));
                    }
                    let v = self.value(level + 1)?;
                    pairs.push((key, v));
                }
                Value::Map(pairs)
            }
            other => return Err(ValueError::malformed(at, format!("unknown tag 0x{other:02x}"))),
        })
    }

    fn array(&mut self) -> Result<NdArray, ValueError> {
        let at = self.pos;
        let elem = self.u8()?;
        let elem_size = match elem {
            TAG_INT | TAG_DOUBLE => 8,
            TAG_COMPLEX => 16,
            _ => return Err(ValueError::malformed(at, format!("bad array element tag 0x{elem:02x}"))),
        };
        let ndims = self.u8()? as usize;
        if ndims == 0 || ndims > MAX_DIMS {
            return Err(ValueError::malformed(at + 1, "array dim count out of 1..=8"));
        }
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(self.u32()?);
        }
        let n = element_count(&dims)
            .filter(|n| n.checked_mul(elem_size).is_some_and(|b| b <= self.remaining()))
            .ok_or_else(|| ValueError::malformed(self.pos, "array elements truncated"))?;
        let bytes = self.take(n * elem_size)?;
        let data = match elem {
            TAG_INT => ArrayData::Int(read_elements(bytes, n)),
            TAG_DOUBLE => ArrayData::Double(read_elements(bytes, n)),
            _ => ArrayData::Complex(read_elements(bytes, n)),
        };
        Ok(NdArray { dims, data })
    }
}

trait LeElement: bytemuck::Pod {
    #[cfg_attr(target_endian = "little", allow(dead_code))]
    fn from_le(bytes: &[u8]) -> Self;
}

impl LeElement for i64 {
    fn from_le(bytes: &[u8]) -> Self {
        i64::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl LeElement for f64 {
    fn from_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl LeElement for Complex64 {
    fn from_le(bytes: &[u8]) -> Self {
        Complex64::new(f64::from_le(&bytes[..8]), f64::from_le(&bytes[8..]))
    }
}

#[cfg(target_endian = "little")]
fn read_elements<T: LeElement>(bytes: &[u8], n: usize) -> Vec<T> {
    let mut out = vec![T::zeroed(); n];
    bytemuck::cast_slice_mut::<T, u8>(&mut out).copy_from_slice(bytes);
    out
}

#[cfg(not(target_endian = "little"))]
fn read_elements<T: LeElement>(bytes: &[u8], n: usize) -> Vec<T> {
    let size = std::mem::size_of::<T>();
    (0..n).map(|i| T::from_le(&bytes[i * size..(i + 1) * size])).collect()
}

/// An ordered list of uniquely named values: the payload of a frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NamedValues {
    pairs: Vec<(String, Value)>,
}

impl NamedValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a pair, rejecting empty or already-present names.
    pub fn push(&mut self, name: impl Into<String>, value: Value) -> Result<(), ValueError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ValueError::Invalid("empty variable name".into()));
        }
        if self.get(&name).is_some() {
            return Err(ValueError::Invalid(format!("duplicate variable name {name:?}")));
        }
        self.pairs.push((name, value));
        Ok(())
    }

    /// Replaces the value under `name` in place, or appends it.
    pub fn upsert(&mut self, name: &str, value: Value) {
        assert!(!name.is_empty(), "empty variable name");
        match self.pairs.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((name.to_owned(), value)),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Result<Self, ValueError> {
        self.push(name, value.into())?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.pairs.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &Value)> + Clone {
        self.pairs.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(n, _)| n.as_str())
    }

    pub fn encoded_len(&self) -> usize {
        4 + self
            .pairs
            .iter()
            .map(|(n, v)| 4 + n.len() + v.encoded_len())
            .sum::<usize>()
    }
}

impl IntoIterator for NamedValues {
    type Item = (String, Value);
    type IntoIter = std::vec::IntoIter<(String, Value)>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.into_iter()
    }
}

impl TryFrom<Vec<(String, Value)>> for NamedValues {
    type Error = ValueError;

    fn try_from(pairs: Vec<(String, Value)>) -> Result<Self, ValueError> {
        let mut nv = NamedValues::new();
        for (n, v) in pairs {
            nv.push(n, v)?;
        }
        Ok(nv)
    }
}

/// Encodes a name/value sequence: u32 count, then per pair a u32 name
/// length, the name bytes and the encoded value.
pub fn encode_named_values(nv: &NamedValues) -> Result<Vec<u8>, ValueError> {
    let mut out = Vec::with_capacity(nv.encoded_len());
    encode_pairs_into(nv.iter(), &mut out)?;
    Ok(out)
}

/// Encodes borrowed pairs without building a [`NamedValues`]. Names must be
/// non-empty and unique; the caller guarantees it.
pub fn encode_pairs_into<'a, I>(pairs: I, out: &mut Vec<u8>) -> Result<(), ValueError>
where
    I: ExactSizeIterator<Item = (&'a str, &'a Value)>,
{
    write_u32(out, pairs.len());
    for (name, value) in pairs {
        write_str(out, name);
        value.encode_into(out)?;
    }
    Ok(())
}

/// Decodes a complete name/value sequence; trailing bytes are an error.
pub fn decode_named_values(bytes: &[u8]) -> Result<NamedValues, ValueError> {
    let mut r = Reader::new(bytes);
    let n = r.count(5)?;
    let mut nv = NamedValues {
        pairs: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let at = r.pos;
        let name = r.string()?;
        if name.is_empty() {
            return Err(ValueError::malformed(at, "empty variable name"));
        }
        if nv.get(&name).is_some() {
            return Err(ValueError::malformed(at, format!("duplicate variable name {name:?}")));
        }
        let v = r.value(1)?;
        nv.pairs.push((name, v));
    }
    if r.remaining() != 0 {
        return Err(ValueError::malformed(r.pos, "trailing bytes after payload"));
    }
    Ok(nv)
}
