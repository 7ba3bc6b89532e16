//! Container decoder: must never panic, and anything it accepts must
//! re-encode to the same bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = ecx::container::decode(data) {
        assert_eq!(ecx::container::encode(&t), data);
    }
});
