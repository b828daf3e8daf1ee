#![no_main]

use gridmesh::value::{decode_named_values, encode_named_values};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(nv) = decode_named_values(data) {
        assert_eq!(encode_named_values(&nv).unwrap(), data);
    }
});
