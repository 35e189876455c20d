#![no_main]
use libfuzzer_sys::fuzz_target;
use point_set_diffusion::ModelFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // A model file that parses has already been rebuilt into a network.
        let _ = ModelFile::parse(text);
    }
});
