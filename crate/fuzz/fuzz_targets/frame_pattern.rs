#![no_main]

use libfuzzer_sys::fuzz_target;
use roadplane_core::ingest::FrameNamePattern;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = FrameNamePattern::parse(text) {
        let _ = p.render(0);
        let _ = p.render(u32::MAX);
        assert_eq!(FrameNamePattern::parse(&p.as_pattern()).unwrap(), p);
    }
});
