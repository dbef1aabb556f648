#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = llcg::model::decode_model(data) {
        assert_eq!(llcg::model::encode_model(&m), data);
    }
});
