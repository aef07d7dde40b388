#![no_main]

use codazzi::holonomy::TransCocycle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(t) = TransCocycle::from_json(s) {
        let again = TransCocycle::from_json(&t.to_json()).expect("accepted cocycle re-parses");
        assert_eq!(again.to_flat(), t.to_flat());
    }
});
