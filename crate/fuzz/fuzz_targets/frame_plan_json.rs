#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(loaded) = qhalab::io::load_frame_plan(text) {
            let again = qhalab::io::frame_plan_from_json(&qhalab::io::frame_plan_to_json(&loaded.plan)).unwrap();
            assert_eq!(again, loaded.plan);
        }
    }
});
