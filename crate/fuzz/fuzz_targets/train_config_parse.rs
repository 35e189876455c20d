#![no_main]
use libfuzzer_sys::fuzz_target;
use point_set_diffusion::TrainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = TrainConfig::from_kv_str(text) {
            let again = TrainConfig::from_kv_str(&cfg.to_kv_string()).expect("rendered config reparses");
            assert_eq!(cfg.to_kv_string(), again.to_kv_string());
        }
    }
});
