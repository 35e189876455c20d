#![no_main]
use libfuzzer_sys::fuzz_target;
use point_set_diffusion::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ds) = Dataset::parse(text) {
            // Anything accepted must survive a round trip unchanged.
            let again = Dataset::parse(&ds.to_jsonl()).expect("serialized dataset reparses");
            assert_eq!(ds, again);
        }
    }
});
