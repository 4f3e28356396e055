//! Fuzz target for the constraint-file parser.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::evaluation::Constraints;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Constraints::parse(data) {
        let mut text = Vec::new();
        c.write(&mut text).unwrap();
        let back = Constraints::parse(&text[..]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.vocab(), c.vocab());
    }
});
