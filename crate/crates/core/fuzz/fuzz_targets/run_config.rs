#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ecx::config::RunConfig::parse(text, std::iter::empty::<(String, String)>(), None);
    }
});
