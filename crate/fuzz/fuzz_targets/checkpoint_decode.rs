#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::checkpoint::{to_model, Checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        let _ = to_model(&ck);
    }
});
