#![no_main]

use libfuzzer_sys::fuzz_target;
use sensorforge::definitions::{make_wcr, parse_vsd, serialize_vsd};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(vsd) = parse_vsd(text) {
        let again = parse_vsd(&serialize_vsd(&vsd)).expect("canonical form reparses");
        assert_eq!(again, vsd);
        for source in &vsd.stream_sources {
            let _ = make_wcr(source);
        }
    }
});
