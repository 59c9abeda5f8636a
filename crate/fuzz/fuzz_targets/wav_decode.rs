#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::formats::parse_wav;
use pixelbytes::Tokenizer;

fuzz_target!(|data: &[u8]| {
    if let Ok(wav) = parse_wav(data) {
        let _ = Tokenizer::default().encode_audio(&wav.channels);
    }
});
