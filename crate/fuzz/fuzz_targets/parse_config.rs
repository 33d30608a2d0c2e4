#![no_main]

use libfuzzer_sys::fuzz_target;
use nma_inconsistency::config::AnalysisConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = AnalysisConfig::from_toml_str(text) {
            let back = cfg.to_toml_string().expect("valid config serializes");
            assert_eq!(AnalysisConfig::from_toml_str(&back).expect("round trip parses"), cfg);
        }
    }
});
