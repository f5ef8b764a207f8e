#![no_main]

use libfuzzer_sys::fuzz_target;
use roadplane_cli::config::{ConfigFile, Overrides, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = ConfigFile::from_json(text) {
        let _ = RunConfig::resolve(file, Overrides::default(), Some("out".into()));
    }
});
