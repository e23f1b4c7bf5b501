#![no_main]

use libfuzzer_sys::fuzz_target;
use lsdisc::groupoid::RandomWalkFamily;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(family) = RandomWalkFamily::from_json(text) {
        family.validate().expect("decoded families are validated");
        let back = RandomWalkFamily::from_json(&family.to_json()).expect("encoded family decodes");
        assert_eq!(back, family);
    }
});
