#![no_main]

use libfuzzer_sys::fuzz_target;
use mnilab::cli::PhasePlotConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = serde_json::from_str::<PhasePlotConfig>(text);
});
