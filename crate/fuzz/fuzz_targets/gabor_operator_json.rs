#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(op) = qhalab::io::gabor_operator_from_json(text) {
            let again = qhalab::io::gabor_operator_from_json(&qhalab::io::gabor_operator_to_json(&op)).unwrap();
            assert_eq!(again, op);
        }
    }
});
