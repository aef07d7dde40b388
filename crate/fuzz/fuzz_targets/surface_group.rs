#![no_main]

use codazzi::holonomy::SurfaceGroup;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(g) = SurfaceGroup::from_json(s) {
        let again = SurfaceGroup::from_json(&g.to_json()).expect("accepted group re-parses");
        assert_eq!(again.to_json(), g.to_json());
        assert!(g.relator_defect().is_finite());
    }
});
