//! Record framing over byte streams.

use thiserror::Error;

use crate::definitions::Framing;

/// Longest accepted line for line-delimited framing, excluding the newline.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("record of {0} bytes exceeds the framing limit")]
    Oversized(usize),
    #[error("line-delimited record contains a newline or ends with a carriage return")]
    EmbeddedNewline,
    #[error("record is {actual} bytes, fixed framing needs {expected}")]
    WrongSize { expected: usize, actual: usize },
    #[error("empty record")]
    Empty,
}

/// Frames one payload for the wire.
pub fn encode_frame(framing: Framing, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.is_empty() {
        return Err(FrameError::Empty);
    }
    match framing {
        Framing::LineDelimited => {
            if payload.contains(&b'\n') || payload.last() == Some(&b'\r') {
                return Err(FrameError::EmbeddedNewline);
            }
            if payload.len() > MAX_LINE_BYTES {
                return Err(FrameError::Oversized(payload.len()));
            }
            let mut out = Vec::with_capacity(payload.len() + 1);
            out.extend_from_slice(payload);
            out.push(b'\n');
            Ok(out)
        }
        Framing::LengthPrefixedU16BigEndian => {
            let len = u16::try_from(payload.len()).map_err(|_| FrameError::Oversized(payload.len()))?;
            let mut out = Vec::with_capacity(payload.len() + 2);
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(payload);
            Ok(out)
        }
        Framing::Fixed(n) => {
            if payload.len() != n {
                return Err(FrameError::WrongSize {
                    expected: n,
                    actual: payload.len(),
                });
            }
            Ok(payload.to_vec())
        }
    }
}

/// Incremental decoder: feed arbitrary chunks, pull complete records.
#[derive(Debug)]
pub struct FrameDecoder {
    framing: Framing,
    buf: Vec<u8>,
    start: usize,
    scanned: usize,
    /// Bytes of an over-long line already thrown away; the error is reported
    /// once its newline arrives, so it never depends on read boundaries.
    discarded: Option<Discarded>,
}

#[derive(Debug, Clone, Copy)]
struct Discarded {
    bytes: usize,
    ends_with_cr: bool,
}

impl FrameDecoder {
    pub fn new(framing: Framing) -> Self {
        FrameDecoder {
            framing,
            buf: Vec::new(),
            start: 0,
            scanned: 0,
            discarded: None,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start * 2 >= self.buf.len() {
            self.buf.drain(..self.start);
            self.scanned = self.scanned.saturating_sub(self.start);
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet part of a complete record.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Consumes `literal` from the front of the pending bytes.
    ///
    /// `None` means more bytes are needed to decide.
    pub fn consume_literal(&mut self, literal: &[u8]) -> Option<bool> {
        let avail = &self.buf[self.start..];
        if avail.len() < literal.len() {
            return if literal.starts_with(avail) { None } else { Some(false) };
        }
        if avail.starts_with(literal) {
            self.start += literal.len();
            self.scanned = self.scanned.max(self.start);
            Some(true)
        } else {
            Some(false)
        }
    }

    /// The next complete record, or an error for a record that had to be dropped.
    pub fn next_frame(&mut self) -> Option<Result<Vec<u8>, FrameError>> {
        let avail = &self.buf[self.start..];
        match self.framing {
            Framing::LineDelimited => {
                let from = self.scanned.max(self.start) - self.start;
                match avail[from..].iter().position(|b| *b == b'\n') {
                    Some(pos) => {
                        let end = from + pos;
                        let mut line = &avail[..end];
                        self.start += end + 1;
                        self.scanned = self.start;
                        if let Some(d) = self.discarded.take() {
                            let cr = line.last().map_or(d.ends_with_cr, |b| *b == b'\r');
                            return Some(Err(FrameError::Oversized(d.bytes + end - usize::from(cr))));
                        }
                        if line.last() == Some(&b'\r') {
                            line = &line[..line.len() - 1];
                        }
                        if line.len() > MAX_LINE_BYTES {
                            return Some(Err(FrameError::Oversized(line.len())));
                        }
                        Some(Ok(line.to_vec()))
                    }
                    None => {
                        self.scanned = self.buf.len();
                        if avail.len() > MAX_LINE_BYTES + 1 || (self.discarded.is_some() && !avail.is_empty()) {
                            let d = self.discarded.get_or_insert(Discarded {
                                bytes: 0,
                                ends_with_cr: false,
                            });
                            d.bytes += avail.len();
                            d.ends_with_cr = avail.last() == Some(&b'\r');
                            self.start = self.buf.len();
                            self.scanned = self.start;
                        }
                        None
                    }
                }
            }
            Framing::LengthPrefixedU16BigEndian => {
                if avail.len() < 2 {
                    return None;
                }
                let len = u16::from_be_bytes([avail[0], avail[1]]) as usize;
                if avail.len() < 2 + len {
                    return None;
                }
                let record = avail[2..2 + len].to_vec();
                self.start += 2 + len;
                Some(Ok(record))
            }
            Framing::Fixed(n) => {
                if n == 0 || avail.len() < n {
                    return None;
                }
                let record = avail[..n].to_vec();
                self.start += n;
                Some(Ok(record))
            }
        }
    }
}
