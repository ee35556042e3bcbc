#![no_main]

use dapc::runtime::{decode_frame, encode_frame};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((msg, used)) = decode_frame(data) {
        assert!(used <= data.len());
        assert_eq!(encode_frame(&msg), &data[..used]);
    }
});
