#![no_main]

use libfuzzer_sys::fuzz_target;
use lifshitz::materials::Tabulated;
use lifshitz::scenario::parse_material_table;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(samples) = parse_material_table(text) {
            if let Ok(model) = Tabulated::new(&samples) {
                // Any accepted table must evaluate without panicking.
                for zeta in [0.0, 1.0, 1e6] {
                    let _ = model.epsilon_at(zeta);
                }
            }
        }
    }
});
