#![no_main]

use libfuzzer_sys::fuzz_target;
use sensorforge::definitions::{parse_sdd, serialize_sdd};

// Anything that parses must survive a serialize/parse round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sdd) = parse_sdd(text) {
        let canonical = serialize_sdd(&sdd);
        let again = parse_sdd(&canonical).expect("canonical form reparses");
        assert_eq!(again, sdd);
        assert_eq!(serialize_sdd(&again), canonical);
    }
});
