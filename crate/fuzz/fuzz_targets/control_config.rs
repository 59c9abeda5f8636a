#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::control::ControlConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<ControlConfig>(data) {
        if cfg.validate().is_ok() {
            let _ = cfg.ranges();
            let _ = cfg.trace_count();
        }
    }
});
