//! Fuzz target for the embedding text parser.
//!
//! Parsing must never panic. A table that parses must survive a write and
//! re-parse with identical words and bit-identical values.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::embeddings::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    let Ok((table, _)) = EmbeddingTable::parse_bytes(data, None) else {
        return;
    };
    let mut text = Vec::new();
    table.write(&mut text).unwrap();
    let (back, report) = EmbeddingTable::parse_bytes(&text, Some(table.dim())).unwrap();
    assert_eq!(report.duplicates, 0);
    assert_eq!(back.words(), table.words());
    let same = back
        .vectors()
        .as_slice()
        .iter()
        .zip(table.vectors().as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same, "values changed across a write/parse round trip");
});
