//! Fuzz target for the binary checkpoint decoder.
//!
//! Decoding arbitrary bytes must fail cleanly. For a checkpoint that
//! decodes, its encoding must decode and re-encode to the same bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode(data) {
        let bytes = encode(&ckpt).unwrap();
        let again = decode(&bytes).expect("encoded checkpoint decodes");
        assert_eq!(encode(&again).unwrap(), bytes);
    }
});
