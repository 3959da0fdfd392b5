#![no_main]

use libfuzzer_sys::fuzz_target;
use mnilab::concentration::HwTestConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = HwTestConfig::from_json_str(text) {
        // building the form is cheap for small n; running trials is not
        if cfg.n <= 64 {
            let _ = cfg.form_matrix();
        }
    }
});
