#![no_main]
use libfuzzer_sys::fuzz_target;
use point_set_diffusion::nn::params::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Checkpoint::parse(text);
    }
});
