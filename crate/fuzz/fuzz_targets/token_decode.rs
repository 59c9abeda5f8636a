#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::pxtk;
use pixelbytes::sequence::{build_context_2d, ContextArray};
use pixelbytes::Tokenizer;

// Streams that pass validation must decode and build contexts without panicking.
fuzz_target!(|data: &[u8]| {
    let Ok(records) = pxtk::decode(data) else {
        return;
    };
    let tk = Tokenizer::default();
    for r in &records {
        if r.validate().is_err() {
            continue;
        }
        if let Ok(d) = tk.decode(r) {
            assert_eq!(&tk.encode_decoded(&d).unwrap(), r);
        }
        let _ = ContextArray::from_stream(r);
        let _ = build_context_2d(r);
    }
});
