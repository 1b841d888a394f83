#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = qhalab::io::phase_space_from_csv(text) {
            assert_eq!(qhalab::io::phase_space_from_csv(&qhalab::io::phase_space_to_csv(&map)).unwrap(), map);
        }
    }
});
