//! Request lines as the serving side sees them.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(req) = ecx::prompt::WireRequest::parse_line(line) {
        if let Ok(bundle) = req.into_bundle() {
            let _ = ecx::prompt::assemble_prompt(&bundle);
        }
    }
});
