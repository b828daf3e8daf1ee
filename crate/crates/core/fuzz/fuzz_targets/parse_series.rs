#![no_main]

use gridmesh::tools::parse_series;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(frames) = parse_series(data) {
        assert!(frames.windows(2).all(|w| w[0].t < w[1].t));
    }
});
