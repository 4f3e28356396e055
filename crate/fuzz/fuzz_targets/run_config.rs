//! Fuzz target for run-config TOML resolution.

#![no_main]

use libfuzzer_sys::fuzz_target;
use retrogan::config::RunConfigFile;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfigFile::parse(data) {
        let text = cfg.to_toml().unwrap();
        let again = RunConfigFile::parse(&text).expect("serialized config parses");
        assert_eq!(again.to_toml().unwrap(), text);
    }
});
