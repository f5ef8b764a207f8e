#![no_main]

use libfuzzer_sys::fuzz_target;
use roadplane_core::ingest::FrameMap;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = FrameMap::from_csv(text) {
        let back = FrameMap::from_csv(&map.to_csv()).expect("written map parses");
        assert_eq!(back.entries(), map.entries());
    }
});
