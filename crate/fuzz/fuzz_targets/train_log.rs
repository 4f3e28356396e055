//! Fuzz target for the JSON-lines training log reader.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::trainer::TrainLog;

fuzz_target!(|data: &str| {
    if let Ok(log) = TrainLog::read_jsonl(data) {
        let mut out = Vec::new();
        log.write_jsonl(&mut out).unwrap();
        let back = TrainLog::read_jsonl(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(back.records.len(), log.records.len());
    }
});
