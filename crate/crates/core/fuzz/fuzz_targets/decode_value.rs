#![no_main]

use gridmesh::value::{decode_value, encode_value};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((v, used)) = decode_value(data) {
        // Whatever decodes must re-encode to the bytes it came from.
        assert_eq!(encode_value(&v).unwrap(), &data[..used]);
    }
});
