#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = qhalab::io::ResidualCurves::from_csv(text) {
            let again = qhalab::io::ResidualCurves::from_csv(&c.to_csv()).unwrap();
            assert_eq!(again.curves.len(), c.curves.len());
        }
    }
});
