//! Binary framing for diagnostic messages.
//!
//! Every frame has the same shape (all multi-byte fields little-endian):
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0x7E44
//! 2       1     version, currently 0x01
//! 3       2     msg_type
//! 5       8     timestamp_us
//! 13      2     payload_len (bytes of payload only)
//! 15      n     payload
//! 15+n    2     crc16 over bytes [0, 15+n)
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE (polynomial 0x1021, init 0xFFFF, no
//! reflection, no final xor), whose check value over `"123456789"` is 0x29B1.
//!
//! Payload layouts per message type:
//!
//! ```text
//! dci_grant      (8 B): u8 carrier_id, u8 direction, u16 prb,
//!                       u8 tbs_index, u8 mimo_layers, u16 tti_us
//! granted_bytes (20 B): u32 window_us, u64 bytes_granted, u64 bytes_used
//! cell_meas      (6 B): i32 rsrp_centi_dbm, u16 cell_id
//! ```
//!
//! [`StreamDecoder`] consumes arbitrary chunkings of a byte stream and emits
//! the same frame sequence regardless of where the chunk boundaries fall. On
//! any framing failure (bad version, wrong length for a known type, CRC
//! mismatch) it records a diagnostic and restarts the magic scan one byte
//! further on, so a single corrupted byte can only ever destroy the frame it
//! landed in — the scan can never jump past the start of a healthy frame.

use super::{
    CellMeas, DciGrant, DiagFrame, Direction, FrameError, FramePayload, GrantedBytesReport, MsgType,
};

/// Frame prefix, encoded little-endian on the wire.
pub const MAGIC: u16 = 0x7E44;
const MAGIC_BYTES: [u8; 2] = MAGIC.to_le_bytes();
/// Only wire version this codec speaks.
pub const VERSION: u8 = 0x01;
/// Bytes before the payload: magic, version, msg_type, timestamp, payload_len.
pub const HEADER_LEN: usize = 15;
/// Bytes after the payload: the CRC.
pub const TRAILER_LEN: usize = 2;

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection, no
/// final xor.
pub fn crc16(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

fn payload_len(mt: MsgType) -> usize {
    match mt {
        MsgType::DciGrant => 8,
        MsgType::GrantedBytes => 20,
        MsgType::CellMeas => 6,
    }
}

fn write_payload(payload: &FramePayload, out: &mut Vec<u8>) {
    match payload {
        FramePayload::Dci(g) => {
            out.push(g.carrier_id);
            out.push(g.direction.wire());
            out.extend_from_slice(&g.prb.to_le_bytes());
            out.push(g.tbs_index);
            out.push(g.mimo_layers);
            out.extend_from_slice(&g.tti_us.to_le_bytes());
        }
        FramePayload::GrantedBytes(r) => {
            out.extend_from_slice(&r.window_us.to_le_bytes());
            out.extend_from_slice(&r.bytes_granted.to_le_bytes());
            out.extend_from_slice(&r.bytes_used.to_le_bytes());
        }
        FramePayload::CellMeas(m) => {
            out.extend_from_slice(&m.rsrp_centi_dbm.to_le_bytes());
            out.extend_from_slice(&m.cell_id.to_le_bytes());
        }
    }
}

fn parse_payload(mt: MsgType, bytes: &[u8]) -> Result<FramePayload, FrameError> {
    debug_assert_eq!(bytes.len(), payload_len(mt));
    let payload = match mt {
        MsgType::DciGrant => {
            let direction =
                Direction::from_wire(bytes[1]).ok_or(FrameError::BadDirection(bytes[1]))?;
            let g = DciGrant {
                carrier_id: bytes[0],
                direction,
                prb: u16::from_le_bytes([bytes[2], bytes[3]]),
                tbs_index: bytes[4],
                mimo_layers: bytes[5],
                tti_us: u16::from_le_bytes([bytes[6], bytes[7]]),
            };
            g.validate()?;
            FramePayload::Dci(g)
        }
        MsgType::GrantedBytes => {
            let r = GrantedBytesReport {
                window_us: u32::from_le_bytes(bytes[0..4].try_into().unwrap()),
                bytes_granted: u64::from_le_bytes(bytes[4..12].try_into().unwrap()),
                bytes_used: u64::from_le_bytes(bytes[12..20].try_into().unwrap()),
            };
            r.validate()?;
            FramePayload::GrantedBytes(r)
        }
        MsgType::CellMeas => FramePayload::CellMeas(CellMeas {
            rsrp_centi_dbm: i32::from_le_bytes(bytes[0..4].try_into().unwrap()),
            cell_id: u16::from_le_bytes(bytes[4..6].try_into().unwrap()),
        }),
    };
    Ok(payload)
}

/// Appends the encoding of `frame` to `out`. Fails if the payload violates
/// its field ranges (see [`DiagFrame::validate`]).
pub fn encode_frame_into(frame: &DiagFrame, out: &mut Vec<u8>) -> Result<(), FrameError> {
    frame.validate()?;
    let start = out.len();
    out.extend_from_slice(&MAGIC_BYTES);
    out.push(VERSION);
    out.extend_from_slice(&frame.msg_type().wire().to_le_bytes());
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    let plen = payload_len(frame.msg_type()) as u16;
    out.extend_from_slice(&plen.to_le_bytes());
    write_payload(&frame.payload, out);
    let crc = crc16(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(())
}

/// Encodes one frame into a fresh buffer.
pub fn encode_frame(frame: &DiagFrame) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len(frame.msg_type()) + TRAILER_LEN);
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

/// Counters describing everything a decoder skipped or rejected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Frames decoded successfully.
    pub frames: u64,
    /// Candidates whose CRC check failed.
    pub crc_errors: u64,
    /// Candidates with an unsupported version byte.
    pub bad_version: u64,
    /// Candidates whose payload_len didn't match their (known) msg_type.
    pub bad_length: u64,
    /// CRC-valid frames of a message type this decoder doesn't know.
    pub unknown_msg_type: u64,
    /// CRC-valid frames whose payload failed field validation.
    pub invalid_payload: u64,
    /// Raw bytes skipped while hunting for the next frame start.
    pub resync_bytes: u64,
}

impl DecodeStats {
    /// True when the stream decoded without any skips or rejects.
    pub fn is_clean(&self) -> bool {
        let DecodeStats {
            frames: _,
            crc_errors,
            bad_version,
            bad_length,
            unknown_msg_type,
            invalid_payload,
            resync_bytes,
        } = *self;
        crc_errors == 0
            && bad_version == 0
            && bad_length == 0
            && unknown_msg_type == 0
            && invalid_payload == 0
            && resync_bytes == 0
    }
}

/// Incremental frame decoder.
///
/// Feed it byte chunks with [`push`](Self::push); it buffers any trailing
/// partial frame internally, so the emitted frame sequence depends only on
/// the concatenated input, never on the chunking.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    stats: DecodeStats,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Consumes a chunk and returns every frame completed by it, in stream
    /// order.
    pub fn push(&mut self, bytes: &[u8]) -> Vec<DiagFrame> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let consumed = self.scan(&mut out);
        self.buf.drain(..consumed);
        out
    }

    /// Bytes held back because they might be the start of an incomplete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Diagnostic counters accumulated since construction.
    pub fn stats(&self) -> &DecodeStats {
        &self.stats
    }

    /// Walks `self.buf`, pushing decoded frames into `out`. Returns how many
    /// leading bytes are fully dealt with (decoded or given up on); the rest
    /// must be retained until more input arrives.
    fn scan(&mut self, out: &mut Vec<DiagFrame>) -> usize {
        let buf = &self.buf;
        let mut cur = 0;
        loop {
            let avail = buf.len() - cur;
            if avail < 2 {
                // A lone trailing byte is kept only if it could open a magic.
                if avail == 1 && buf[cur] != MAGIC_BYTES[0] {
                    self.stats.resync_bytes += 1;
                    cur += 1;
                }
                return cur;
            }
            if buf[cur] != MAGIC_BYTES[0] || buf[cur + 1] != MAGIC_BYTES[1] {
                self.stats.resync_bytes += 1;
                cur += 1;
                continue;
            }
            if avail < HEADER_LEN {
                return cur; // wait for the full header
            }
            if buf[cur + 2] != VERSION {
                self.stats.bad_version += 1;
                self.stats.resync_bytes += 1;
                cur += 1;
                continue;
            }
            let wire_type = u16::from_le_bytes([buf[cur + 3], buf[cur + 4]]);
            let declared_len = u16::from_le_bytes([buf[cur + 13], buf[cur + 14]]) as usize;
            let known = MsgType::from_wire(wire_type);
            if let Some(mt) = known {
                // Known types have fixed payloads, so a corrupted length byte
                // is caught here instead of derailing the framing.
                if declared_len != payload_len(mt) {
                    self.stats.bad_length += 1;
                    self.stats.resync_bytes += 1;
                    cur += 1;
                    continue;
                }
            }
            let total = HEADER_LEN + declared_len + TRAILER_LEN;
            if avail < total {
                return cur; // wait for the rest of the frame
            }
            let body = &buf[cur..cur + HEADER_LEN + declared_len];
            let want = u16::from_le_bytes([
                buf[cur + HEADER_LEN + declared_len],
                buf[cur + HEADER_LEN + declared_len + 1],
            ]);
            if crc16(body) != want {
                self.stats.crc_errors += 1;
                self.stats.resync_bytes += 1;
                cur += 1;
                continue;
            }
            match known {
                None => {
                    // Well-framed but unsupported: skip it whole.
                    self.stats.unknown_msg_type += 1;
                }
                Some(mt) => {
                    let timestamp_us = u64::from_le_bytes(body[5..13].try_into().unwrap());
                    match parse_payload(mt, &body[HEADER_LEN..]) {
                        Ok(payload) => {
                            out.push(DiagFrame { timestamp_us, payload });
                            self.stats.frames += 1;
                        }
                        Err(_) => {
                            // CRC was fine, so trust the framing and drop just
                            // this record.
                            self.stats.invalid_payload += 1;
                        }
                    }
                }
            }
            cur += total;
        }
    }
}

/// Decodes a complete byte buffer in one go.
pub fn decode_all(bytes: &[u8]) -> (Vec<DiagFrame>, DecodeStats) {
    let mut dec = StreamDecoder::new();
    let frames = dec.push(bytes);
    let mut stats = *dec.stats();
    // Anything still pending at end-of-input is a truncated tail; count it as
    // skipped so `decode_all` callers see the whole picture.
    stats.resync_bytes += dec.pending() as u64;
    (frames, stats)
}
