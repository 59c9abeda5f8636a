#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::formats::{parse_grid, write_grid};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(frames) = parse_grid(text) {
        assert_eq!(parse_grid(&write_grid(&frames)).unwrap(), frames);
    }
});
