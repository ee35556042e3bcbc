#![no_main]

use dapc::runtime::protocol::read_message;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut cursor = data;
    while let Ok(Some(_)) = read_message(&mut cursor) {}
});
