#![no_main]

use codazzi::cone::{wedge_surgery, WedgeScene};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = WedgeScene::from_json(s) {
        // bad angles and distances must come back as errors, not panics
        let _ = wedge_surgery(&scene);
    }
});
