#![no_main]

use libfuzzer_sys::fuzz_target;
use roadplane_core::ingest::{format_annotations, parse_annotations, ParseMode};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let strict = parse_annotations(text, ParseMode::Strict);
    let lenient = parse_annotations(text, ParseMode::Lenient).expect("lenient parsing only skips rows");
    if let Ok(s) = strict {
        assert_eq!(s.observations, lenient.observations);
    }
    // whatever survives parsing must survive a round trip
    let again = parse_annotations(&format_annotations(&lenient.observations), ParseMode::Strict).unwrap();
    assert_eq!(again.observations.len(), lenient.observations.len());
});
