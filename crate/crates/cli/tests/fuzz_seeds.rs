//! Replays the checked-in fuzz corpus through the same entry points and
//! invariants as the fuzz targets, then throws mutated seeds at them.

use std::path::PathBuf;

use proptest::prelude::*;
use roadplane_cli::config::{ConfigFile, Overrides, RunConfig};
use roadplane_core::calibration::load_profile_json;
use roadplane_core::ingest::{format_annotations, parse_annotations, FrameMap, FrameNamePattern, ParseMode};
use roadplane_core::synth::{render_observations, SyntheticScene};

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect()
}

fn annotations(text: &str) {
    let strict = parse_annotations(text, ParseMode::Strict);
    let lenient = parse_annotations(text, ParseMode::Lenient).expect("lenient parsing only skips rows");
    if let Ok(s) = strict {
        assert_eq!(s.observations, lenient.observations);
    }
    let again = parse_annotations(&format_annotations(&lenient.observations), ParseMode::Strict).unwrap();
    assert_eq!(again.observations.len(), lenient.observations.len());
}

fn frame_map(text: &str) {
    if let Ok(map) = FrameMap::from_csv(text) {
        let back = FrameMap::from_csv(&map.to_csv()).expect("written map parses");
        assert_eq!(back.entries(), map.entries());
    }
}

fn pattern(text: &str) {
    if let Ok(p) = FrameNamePattern::parse(text) {
        let _ = p.render(0);
        let _ = p.render(u32::MAX);
        assert_eq!(FrameNamePattern::parse(&p.as_pattern()).unwrap(), p);
    }
}

fn profile(text: &str) {
    if let Ok(loaded) = load_profile_json(text) {
        let _ = loaded.profile.to_json();
    }
}

fn scene(text: &str) {
    if let Ok(scene) = SyntheticScene::from_json(text) {
        if scene.samples <= 200 && scene.agents.len() <= 32 {
            let _ = render_observations(&scene);
        }
    }
}

fn config(text: &str) {
    if let Ok(file) = ConfigFile::from_json(text) {
        let _ = RunConfig::resolve(file, Overrides::default(), Some("out".into()));
    }
}

type Check = fn(&str);

const TARGETS: [(&str, Check); 6] = [
    ("parse_annotations", annotations),
    ("frame_map_csv", frame_map),
    ("frame_pattern", pattern),
    ("profile_json", profile),
    ("scene_json", scene),
    ("config_json", config),
];

#[test]
fn corpus_seeds_replay() {
    for (target, check) in TARGETS {
        for s in seeds(target) {
            check(&s);
        }
    }
}

#[test]
fn good_seeds_parse() {
    assert!(parse_annotations(&seeds("parse_annotations")[2], ParseMode::Strict).is_ok());
    assert!(load_profile_json(&seeds("profile_json")[0]).is_ok());
    assert!(SyntheticScene::from_json(&seeds("scene_json")[1]).is_ok());
}

/// Seed with one byte range replaced, kept as valid UTF-8.
fn mutated(target: &'static str) -> impl Strategy<Value = String> {
    let all = seeds(target);
    (0..all.len(), any::<prop::sample::Index>(), 0usize..8, "\\PC{0,6}").prop_map(move |(k, at, len, insert)| {
        let s = &all[k];
        let chars: Vec<char> = s.chars().collect();
        let start = at.index(chars.len() + 1);
        let end = (start + len).min(chars.len());
        chars[..start].iter().chain(insert.chars().collect::<Vec<_>>().iter()).chain(&chars[end..]).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        for (_, check) in TARGETS {
            check(&text);
        }
    }

    #[test]
    fn mutated_annotations(text in mutated("parse_annotations")) { annotations(&text) }

    #[test]
    fn mutated_frame_maps(text in mutated("frame_map_csv")) { frame_map(&text) }

    #[test]
    fn mutated_profiles(text in mutated("profile_json")) { profile(&text) }

    #[test]
    fn mutated_scenes(text in mutated("scene_json")) { scene(&text) }

    #[test]
    fn mutated_configs(text in mutated("config_json")) { config(&text) }
}
