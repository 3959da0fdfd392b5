#![no_main]

use libfuzzer_sys::fuzz_target;
use mnilab::concentration::OrthantConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = OrthantConfig::from_json_str(text);
});
