#![no_main]

use gridmesh::case::{parse_case, CaseDocument};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_case(CaseDocument::Json(data));
});
