//! Replays the checked-in fuzz seeds through the same checks the fuzz
//! targets make, so the seeds stay meaningful without a fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use dapc::mm::{parse_matrix_market, write_matrix_market};
use dapc::runtime::protocol::read_message;
use dapc::runtime::{decode_frame, encode_frame};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed-"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn frame_seeds_decode_canonically() {
    for (name, bytes) in seeds("decode_frame") {
        let (msg, used) = decode_frame(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(used, bytes.len(), "{name}");
        assert_eq!(encode_frame(&msg), bytes, "{name}");
    }
}

#[test]
fn stream_seeds() {
    for (name, bytes) in seeds("read_message") {
        let mut cursor = &bytes[..];
        let mut count = 0;
        while let Ok(Some(_)) = read_message(&mut cursor) {
            count += 1;
        }
        let expected = if name.contains("truncated") { 1 } else { 3 };
        assert_eq!(count, expected, "{name}");
    }
}

#[test]
fn matrix_market_seeds() {
    for (name, bytes) in seeds("parse_matrix_market") {
        match parse_matrix_market(&bytes) {
            Ok(m) => {
                assert!(!name.contains("bad") && !name.contains("out-of-bounds"), "{name} should fail");
                let again = parse_matrix_market(&write_matrix_market(&m)).unwrap();
                assert_eq!(again.shape(), m.shape(), "{name}");
            }
            Err(e) => assert!(name.contains("bad") || name.contains("out-of-bounds"), "{name}: {e}"),
        }
    }
}
