#![no_main]

use libfuzzer_sys::fuzz_target;
use sensorforge::devsim::DeviceFixture;
use sensorforge::runtime::FrameDecoder;

// A fixture that loads must frame its records so they decode back unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(fixture) = DeviceFixture::from_json(text) else { return };
    let mut decoder = FrameDecoder::new(fixture.framing);
    decoder.push(&fixture.wire_bytes());
    for record in &fixture.records {
        let frame = decoder.next_frame().expect("frame present").expect("frame decodes");
        assert_eq!(&frame, record);
    }
    assert!(decoder.next_frame().is_none());
});
