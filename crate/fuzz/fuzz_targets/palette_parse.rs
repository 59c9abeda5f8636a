#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::Palette;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = Palette::parse(text) {
        let again = Palette::parse(&p.to_file_string()).unwrap();
        assert_eq!(again.len(), p.len());
        for i in 0..p.len() {
            assert_eq!(again.rgb(i).unwrap(), p.rgb(i).unwrap());
        }
    }
});
