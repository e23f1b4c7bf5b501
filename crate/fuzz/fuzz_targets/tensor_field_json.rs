#![no_main]

use libfuzzer_sys::fuzz_target;
use lsdisc::groupoid::TensorFieldOnX;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(field) = TensorFieldOnX::from_json(text) {
        field.validate().expect("decoded fields are validated");
        let back = TensorFieldOnX::from_json(&field.to_json()).expect("encoded field decodes");
        assert_eq!(back, field);
    }
});
