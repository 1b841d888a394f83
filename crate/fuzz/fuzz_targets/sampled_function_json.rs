#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(f) = qhalab::io::sampled_function_from_json(text) {
            assert_eq!(qhalab::io::sampled_function_from_json(&qhalab::io::sampled_function_to_json(&f)).unwrap(), f);
        }
    }
});
