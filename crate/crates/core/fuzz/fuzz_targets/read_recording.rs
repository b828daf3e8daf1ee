#![no_main]

use gridmesh::tools::read_recording;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_recording(data) {
        assert!(records.windows(2).all(|w| w[0].ts <= w[1].ts));
    }
});
