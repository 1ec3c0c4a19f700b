#![no_main]

use libfuzzer_sys::fuzz_target;
use sensorforge::definitions::Framing;
use sensorforge::runtime::{FrameDecoder, FrameError};

fn drain(decoder: &mut FrameDecoder, out: &mut Vec<Result<Vec<u8>, FrameError>>) {
    while let Some(frame) = decoder.next_frame() {
        out.push(frame);
    }
}

// Byte 0 picks the framing, byte 1 the chunk size. How the stream is split
// into reads must never change which frames come out.
fuzz_target!(|data: &[u8]| {
    let [mode, chunk, stream @ ..] = data else { return };
    let framing = match mode % 3 {
        0 => Framing::LineDelimited,
        1 => Framing::LengthPrefixedU16BigEndian,
        _ => Framing::Fixed(1 + (*mode as usize % 64)),
    };

    let mut whole = FrameDecoder::new(framing);
    let mut expected = Vec::new();
    whole.push(stream);
    drain(&mut whole, &mut expected);

    let mut pieces = FrameDecoder::new(framing);
    let mut got = Vec::new();
    for part in stream.chunks(1 + *chunk as usize) {
        pieces.push(part);
        drain(&mut pieces, &mut got);
    }
    assert_eq!(got, expected);
    assert_eq!(pieces.pending(), whole.pending());
});
