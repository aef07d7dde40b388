#![no_main]

use codazzi_cli::SuiteConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SuiteConfig::from_json(s) {
        let json = serde_json::to_string(&cfg).expect("serialisable");
        assert_eq!(SuiteConfig::from_json(&json).expect("valid config re-parses"), cfg);
    }
});
