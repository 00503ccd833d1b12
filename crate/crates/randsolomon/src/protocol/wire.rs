//! Canonical, length-prefixed message encoding.
//!
//! Signatures sign these exact bytes and reveal verification compares
//! ciphertexts bit for bit, so the encoding must be byte-stable: all
//! integers are little-endian `u32`, byte strings carry a `u32` length
//! prefix, fields appear in a fixed order and no padding is allowed.
//!
//! ```text
//! frame             := tag:u8 payload sig
//! sig               := signer:u32 tag:[u8;32]
//! GENERATED payload := origin:u32 count:u32 (len:u32 bytes)*count
//! REVEAL payload    := revealer:u32 count:u32 cell*count
//! cell              := origin:u32 kind:u8 (len:u32 bytes)?   // kind 0 = block, 1 = marker
//! ```

use thiserror::Error;

use crate::crypto::{EncryptedBlock, ProcessId, Signature};

use super::{Commitment, ProtocolMessage, RevealCell, RevealMsg};

pub const TAG_GENERATED: u8 = 1;
pub const TAG_REVEAL: u8 = 2;

/// Upper bound on any single length prefix; a parser guard, far above any
/// legitimate block or frame.
const MAX_LEN: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown frame tag {0}")]
    BadTag(u8),
    #[error("unknown reveal cell kind {0}")]
    BadCellKind(u8),
    #[error("length prefix {0} out of bounds")]
    BadLength(usize),
    #[error("GENERATED carries {got} blocks, system has {want} processes")]
    WrongBlockCount { got: usize, want: usize },
    #[error("REVEAL carries {0} cells, more than the system size")]
    TooManyCells(usize),
    #[error("trailing bytes after frame")]
    TrailingBytes,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        let b = *self.buf.get(self.pos).ok_or(WireError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        let end = self.pos + 4;
        let bytes = self.buf.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos + len;
        let bytes = self.buf.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(bytes)
    }

    fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        if len > MAX_LEN {
            return Err(WireError::BadLength(len));
        }
        self.take(len)
    }

    fn done(&self) -> Result<(), WireError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::TrailingBytes)
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

/// The byte string a commitment signature covers.
pub fn commitment_payload(origin: ProcessId, blocks: &[EncryptedBlock]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, origin.0 as u32);
    put_u32(&mut out, blocks.len() as u32);
    for b in blocks {
        put_bytes(&mut out, &b.bytes);
    }
    out
}

/// The byte string a reveal signature covers.
pub fn reveal_payload(revealer: ProcessId, cells: &[(ProcessId, RevealCell)]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, revealer.0 as u32);
    put_u32(&mut out, cells.len() as u32);
    for (origin, cell) in cells {
        put_u32(&mut out, origin.0 as u32);
        match cell {
            RevealCell::Block(bytes) => {
                out.push(0);
                put_bytes(&mut out, bytes);
            }
            RevealCell::Undecryptable => out.push(1),
        }
    }
    out
}

/// Serializes a message to its canonical frame.
pub fn encode_message(msg: &ProtocolMessage) -> Vec<u8> {
    let (tag, payload, sig) = match msg {
        ProtocolMessage::Generated(c) => (TAG_GENERATED, c.signed_payload(), &c.sig),
        ProtocolMessage::Reveal(r) => (TAG_REVEAL, r.signed_payload(), &r.sig),
    };
    let mut out = Vec::with_capacity(1 + payload.len() + 36);
    out.push(tag);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&sig.to_bytes());
    out
}

/// Parses a canonical frame for a system of `n` processes. Only structure
/// is checked here; signatures and semantics are the state machine's job.
pub fn decode_message(n: usize, buf: &[u8]) -> Result<ProtocolMessage, WireError> {
    let mut r = Reader::new(buf);
    let tag = r.u8()?;
    let msg = match tag {
        TAG_GENERATED => {
            let origin = ProcessId(r.u32()? as usize);
            let count = r.u32()? as usize;
            if count != n {
                return Err(WireError::WrongBlockCount { got: count, want: n });
            }
            let mut enc_blocks = Vec::with_capacity(count);
            for k in 0..count {
                enc_blocks.push(EncryptedBlock {
                    recipient: ProcessId(k),
                    bytes: r.bytes()?.to_vec(),
                });
            }
            let sig = read_sig(&mut r)?;
            ProtocolMessage::Generated(Commitment {
                origin,
                enc_blocks,
                sig,
            })
        }
        TAG_REVEAL => {
            let revealer = ProcessId(r.u32()? as usize);
            let count = r.u32()? as usize;
            if count > n {
                return Err(WireError::TooManyCells(count));
            }
            let mut cells = Vec::with_capacity(count);
            for _ in 0..count {
                let origin = ProcessId(r.u32()? as usize);
                let kind = r.u8()?;
                let cell = match kind {
                    0 => RevealCell::Block(r.bytes()?.to_vec()),
                    1 => RevealCell::Undecryptable,
                    k => return Err(WireError::BadCellKind(k)),
                };
                cells.push((origin, cell));
            }
            let sig = read_sig(&mut r)?;
            ProtocolMessage::Reveal(RevealMsg {
                revealer,
                cells,
                sig,
            })
        }
        t => return Err(WireError::BadTag(t)),
    };
    r.done()?;
    Ok(msg)
}

fn read_sig(r: &mut Reader<'_>) -> Result<Signature, WireError> {
    let signer = ProcessId(r.u32()? as usize);
    let tag: [u8; 32] = r.take(32)?.try_into().unwrap();
    Ok(Signature::from_bytes(signer, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_cell() -> impl Strategy<Value = RevealCell> {
        prop_oneof![
            proptest::collection::vec(any::<u8>(), 0..40).prop_map(RevealCell::Block),
            Just(RevealCell::Undecryptable),
        ]
    }

    fn arb_message(n: usize) -> impl Strategy<Value = ProtocolMessage> {
        let gen = (
            0..n,
            proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..40), n),
            any::<[u8; 32]>(),
        )
            .prop_map(move |(origin, blocks, tag)| {
                ProtocolMessage::Generated(Commitment {
                    origin: ProcessId(origin),
                    enc_blocks: blocks
                        .into_iter()
                        .enumerate()
                        .map(|(k, bytes)| EncryptedBlock {
                            recipient: ProcessId(k),
                            bytes,
                        })
                        .collect(),
                    sig: Signature::from_bytes(ProcessId(origin), tag),
                })
            });
        let reveal = (
            0..n,
            proptest::collection::vec((0..n, arb_cell()), 0..=n),
            any::<[u8; 32]>(),
        )
            .prop_map(move |(revealer, cells, tag)| {
                ProtocolMessage::Reveal(RevealMsg {
                    revealer: ProcessId(revealer),
                    cells: cells
                        .into_iter()
                        .map(|(o, c)| (ProcessId(o), c))
                        .collect(),
                    sig: Signature::from_bytes(ProcessId(revealer), tag),
                })
            });
        prop_oneof![gen, reveal]
    }

    proptest! {
        #[test]
        fn round_trip(msg in arb_message(4)) {
            let bytes = encode_message(&msg);
            let back = decode_message(4, &bytes).unwrap();
            prop_assert_eq!(back, msg);
        }

        #[test]
        fn truncation_never_panics(msg in arb_message(4), cut in 0usize..200) {
            let bytes = encode_message(&msg);
            let cut = cut.min(bytes.len().saturating_sub(1));
            prop_assert!(decode_message(4, &bytes[..cut]).is_err());
        }
    }

    #[test]
    fn rejects_wrong_block_count_and_bad_tag() {
        let mut frame = vec![TAG_GENERATED];
        frame.extend_from_slice(&7u32.to_le_bytes()); // origin
        frame.extend_from_slice(&2u32.to_le_bytes()); // only 2 blocks
        assert!(matches!(
            decode_message(4, &frame),
            Err(WireError::WrongBlockCount { got: 2, want: 4 })
        ));
        assert!(matches!(decode_message(4, &[9u8]), Err(WireError::BadTag(9))));
    }
}
