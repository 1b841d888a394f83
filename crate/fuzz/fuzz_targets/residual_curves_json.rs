#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = qhalab::io::ResidualCurves::from_json(text) {
            let again = qhalab::io::ResidualCurves::from_json(&c.to_json()).unwrap();
            assert_eq!(again.curves.len(), c.curves.len());
        }
    }
});
