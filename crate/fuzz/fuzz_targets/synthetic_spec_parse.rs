#![no_main]
use libfuzzer_sys::fuzz_target;
use point_set_diffusion::datagen::SyntheticSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = serde_json::from_str::<SyntheticSpec>(text) {
            let _ = spec.validate();
        }
    }
});
