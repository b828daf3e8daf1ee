#![no_main]

use gridmesh::case::{parse_case, CaseDocument};
use libfuzzer_sys::fuzz_target;

// Input is buses.csv and lines.csv joined by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (buses, rest) = data.split_at(split);
    let lines = rest.get(1..).unwrap_or_default();
    let _ = parse_case(CaseDocument::Csv { name: "fuzz", buses, lines });
});
