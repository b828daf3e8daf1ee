#![no_main]

use gridmesh::contour::read_ppm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((w, h, rgb)) = read_ppm(data) {
        assert_eq!(rgb.len(), w as usize * h as usize * 3);
    }
});
