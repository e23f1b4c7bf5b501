#![no_main]

use libfuzzer_sys::fuzz_target;
use lsdisc::harness::parse_config_str;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(settings) = parse_config_str(text) {
        // Anything accepted must survive a round trip through its own emitted form.
        let again = parse_config_str(&settings.config.emit()).expect("emitted config parses");
        assert_eq!(again.config, settings.config);
    }
});
