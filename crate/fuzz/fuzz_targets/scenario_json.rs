#![no_main]

use libfuzzer_sys::fuzz_target;
use lifshitz::scenario::ScenarioFile;

fuzz_target!(|data: &[u8]| {
    // The scenario parser must reject arbitrary input without panicking.
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ScenarioFile::from_json_str(text);
    }
});
