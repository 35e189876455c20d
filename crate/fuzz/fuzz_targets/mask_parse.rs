#![no_main]
use libfuzzer_sys::fuzz_target;
use point_set_diffusion::io::parse_mask;

fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    // First byte picks the dimension, the rest is the mask text.
    let dim = 1 + (data[0] % 4) as usize;
    if let Ok(text) = std::str::from_utf8(&data[1..]) {
        if let Ok(mask) = parse_mask(text, dim) {
            let _ = mask.contains(&vec![0.0; dim]);
        }
    }
});
