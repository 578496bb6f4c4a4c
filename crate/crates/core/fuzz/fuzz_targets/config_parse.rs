#![no_main]

use libfuzzer_sys::fuzz_target;
use memxbar::harness::ExperimentConfig;

fuzz_target!(|data: &str| {
    if data.len() > 16_384 {
        return;
    }
    if let Ok(cfg) = ExperimentConfig::from_toml_str(data) {
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).expect("round trip");
        assert_eq!(cfg, again);
    }
});
