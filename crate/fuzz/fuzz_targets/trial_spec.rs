#![no_main]

use libfuzzer_sys::fuzz_target;
use mnilab::experiments::TrialSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = TrialSpec::from_json_str(text) {
        // accepted specs must derive without panicking
        let _ = spec.params().derive();
        let _ = spec.spectrum_cap();
    }
});
