#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = cplab::io::parse_config(text) {
        // Whatever parses must survive a canonical round trip.
        let again = cplab::io::parse_config(&cplab::io::format_config(&cfg)).expect("canonical text parses");
        assert_eq!(cplab::io::config_hash(&cfg), cplab::io::config_hash(&again));
        let _ = cfg.validate();
    }
});
