#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelbytes::pxtk;

fuzz_target!(|data: &[u8]| {
    let Ok(records) = pxtk::decode(data) else {
        return;
    };
    // Anything that decodes must survive a write/read cycle unchanged.
    let bytes = pxtk::encode(&records).expect("decoded records re-encode");
    assert_eq!(pxtk::decode(&bytes).unwrap(), records);
});
