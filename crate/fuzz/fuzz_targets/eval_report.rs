//! Fuzz target for report rows read back from TSV.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::evaluation::EvalReport;

fuzz_target!(|data: &str| {
    for line in data.lines() {
        if let Ok(report) = EvalReport::from_tsv(line) {
            let again = EvalReport::from_tsv(&report.to_tsv()).unwrap();
            assert_eq!(again.dataset, report.dataset);
            assert_eq!(again.mode, report.mode);
            assert_eq!((again.evaluated, again.skipped), (report.evaluated, report.skipped));
        }
    }
});
