#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(convs) = ecx::dataset::parse_corpus(text) {
            for c in &convs {
                let _ = ecx::dataset::cumulative_clips(c);
            }
        }
    }
});
