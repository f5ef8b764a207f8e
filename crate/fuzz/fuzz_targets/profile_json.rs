#![no_main]

use libfuzzer_sys::fuzz_target;
use roadplane_core::calibration::load_profile_json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(loaded) = load_profile_json(text) {
        let _ = loaded.profile.to_json();
    }
});
