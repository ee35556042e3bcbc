#![no_main]

use dapc::mm::{parse_matrix_market, write_matrix_market};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // anything that parses must survive a write/parse round trip
    if let Ok(m) = parse_matrix_market(data) {
        let again = parse_matrix_market(&write_matrix_market(&m)).expect("re-parse written output");
        assert_eq!(again.shape(), m.shape());
    }
});
