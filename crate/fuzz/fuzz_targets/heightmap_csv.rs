#![no_main]

use libfuzzer_sys::fuzz_target;
use lifshitz::rough::HeightMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = HeightMap::from_csv_str(text, 1) {
            // Accepted maps must round-trip bit-exactly through the writer.
            let rt = HeightMap::from_csv_str(&map.to_csv_string(), 1).unwrap();
            assert_eq!(map.samples(), rt.samples());
        }
    }
});
