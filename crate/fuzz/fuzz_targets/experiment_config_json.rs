#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = qhalab_cli::ExperimentConfig::from_json(text) {
            let _ = cfg.shift();
            let _ = cfg.p(4.0);
            let _ = cfg.grid_n(32);
            let _ = cfg.tolerance_scale();
        }
    }
});
