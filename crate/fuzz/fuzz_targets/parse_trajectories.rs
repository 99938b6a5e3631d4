#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = cplab::io::parse_trajectories(text) {
        let obs = &file.observations;
        assert!(obs.iter_events().all(|t| (0.0..=obs.tau()).contains(&t)));
    }
});
