#![no_main]

use libfuzzer_sys::fuzz_target;
use roadplane_core::synth::SyntheticScene;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = SyntheticScene::from_json(text) {
        // rendering is bounded by the validated sample count
        if scene.samples <= 200 && scene.agents.len() <= 32 {
            let _ = roadplane_core::synth::render_observations(&scene);
        }
    }
});
