#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = cplab::io::parse_thresholds(text) {
        for w in table.rows().windows(2) {
            assert!(w[0].epsilon < w[1].epsilon);
        }
    }
});
