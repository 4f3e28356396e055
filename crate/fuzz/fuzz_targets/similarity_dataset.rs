//! Fuzz target for the word-similarity benchmark parser, in every layout.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::evaluation::{DatasetFormat, SimilarityDataset};

fuzz_target!(|data: &[u8]| {
    for format in [DatasetFormat::SIMLEX, DatasetFormat::SIMVERB, DatasetFormat::CARD660] {
        if let Ok(ds) = SimilarityDataset::parse(data, format, "fuzz") {
            assert!(!ds.is_empty());
            assert!(ds.pairs.iter().all(|p| p.gold.is_finite()));
            let mut text = Vec::new();
            ds.write_tsv(&mut text).unwrap();
            let back = SimilarityDataset::parse(&text[..], DatasetFormat::TSV, "fuzz").unwrap();
            assert_eq!(back.pairs, ds.pairs);
        }
    }
});
