#![no_main]

use gridmesh::wire::{decode_frame, encode_frame};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((frame, _)) = decode_frame(data) {
        // Header JSON spelling may differ; the decoded frame may not.
        let bytes = encode_frame(&frame).expect("decoded frames re-encode");
        let (again, used) = decode_frame(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(again, frame);
    }
});
