//! Modem diagnostic messages, their wire framing, and in-process distribution.
//!
//! The emulated modem exports three kinds of diagnostic records:
//!
//! * [`DciGrant`] — one scheduling grant for a single carrier and TTI
//!   (resource blocks, transport-block-size index, spatial layers);
//! * [`GrantedBytesReport`] — how many bytes the scheduler granted (and the
//!   sender actually used) over a fixed accounting window, 100 ms by default;
//! * [`CellMeas`] — a periodic serving-cell power measurement.
//!
//! Each record travels inside a [`DiagFrame`] that carries its capture
//! timestamp. [`codec`] defines the binary framing (magic, version, CRC) and a
//! resynchronizing stream decoder; [`channel`] distributes decoded frames to
//! subscribers through per-type triple buffers so a slow reader never blocks
//! the producer and always sees a complete, most-recent frame.

pub mod channel;
pub mod codec;

pub use channel::{DiagChannel, LatestFrame, Subscription};
pub use codec::{decode_all, encode_frame, DecodeStats, StreamDecoder};

use std::fmt;

/// Direction a scheduling grant applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub(crate) fn wire(self) -> u8 {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }

    pub(crate) fn from_wire(b: u8) -> Option<Self> {
        match b {
            0 => Some(Direction::Uplink),
            1 => Some(Direction::Downlink),
            _ => None,
        }
    }
}

/// Kind tag of a diagnostic frame, as encoded in the frame header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MsgType {
    DciGrant,
    GrantedBytes,
    CellMeas,
}

/// All message types, in wire-id order. Handy for "subscribe to everything".
pub const ALL_MSG_TYPES: [MsgType; 3] = [MsgType::DciGrant, MsgType::GrantedBytes, MsgType::CellMeas];

impl MsgType {
    /// Wire identifier used in the frame header.
    pub fn wire(self) -> u16 {
        match self {
            MsgType::DciGrant => 0x0001,
            MsgType::GrantedBytes => 0x0002,
            MsgType::CellMeas => 0x0003,
        }
    }

    /// Inverse of [`MsgType::wire`]; `None` for ids this decoder doesn't know.
    pub fn from_wire(w: u16) -> Option<Self> {
        match w {
            0x0001 => Some(MsgType::DciGrant),
            0x0002 => Some(MsgType::GrantedBytes),
            0x0003 => Some(MsgType::CellMeas),
            _ => None,
        }
    }

    /// Dense index used for per-type slots (subscriptions, counters).
    pub(crate) fn slot(self) -> usize {
        match self {
            MsgType::DciGrant => 0,
            MsgType::GrantedBytes => 1,
            MsgType::CellMeas => 2,
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MsgType::DciGrant => "dci_grant",
            MsgType::GrantedBytes => "granted_bytes",
            MsgType::CellMeas => "cell_meas",
        };
        f.write_str(s)
    }
}

/// Largest resource-block allocation a single grant can carry.
pub const MAX_PRB: u16 = 273;
/// Largest transport-block-size index.
pub const MAX_TBS_INDEX: u8 = 26;

/// One scheduling grant: what the radio scheduler allocated to this UE on one
/// carrier for one TTI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DciGrant {
    /// Which component carrier the grant is for (0-based).
    pub carrier_id: u8,
    /// Uplink or downlink allocation.
    pub direction: Direction,
    /// Physical resource blocks allocated, `0..=273`. Zero means the UE got
    /// nothing this TTI.
    pub prb: u16,
    /// Transport-block-size index, `0..=26`; selects the throughput-table row
    /// together with `prb`.
    pub tbs_index: u8,
    /// Spatial multiplexing layers: 1, 2 or 4.
    pub mimo_layers: u8,
    /// TTI length this grant covers, in microseconds: 500 or 1000.
    pub tti_us: u16,
}

impl DciGrant {
    /// Checks the field ranges that the wire format and the throughput table
    /// rely on.
    pub fn validate(&self) -> Result<(), FrameError> {
        if self.prb > MAX_PRB {
            return Err(FrameError::PrbOutOfRange(self.prb));
        }
        if self.tbs_index > MAX_TBS_INDEX {
            return Err(FrameError::TbsIndexOutOfRange(self.tbs_index));
        }
        if !matches!(self.mimo_layers, 1 | 2 | 4) {
            return Err(FrameError::BadMimoLayers(self.mimo_layers));
        }
        if !matches!(self.tti_us, 500 | 1000) {
            return Err(FrameError::BadTti(self.tti_us));
        }
        Ok(())
    }
}

/// Default accounting window for granted-byte reports, in microseconds.
pub const DEFAULT_REPORT_WINDOW_US: u32 = 100_000;

/// Scheduler byte counters over one accounting window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrantedBytesReport {
    /// Window length in microseconds (100 ms by default).
    pub window_us: u32,
    /// Bytes the scheduler granted to this UE during the window.
    pub bytes_granted: u64,
    /// Bytes the UE actually transmitted; never exceeds `bytes_granted`.
    pub bytes_used: u64,
}

impl GrantedBytesReport {
    pub fn validate(&self) -> Result<(), FrameError> {
        if self.window_us == 0 {
            return Err(FrameError::ZeroWindow);
        }
        if self.bytes_used > self.bytes_granted {
            return Err(FrameError::UsedExceedsGranted {
                used: self.bytes_used,
                granted: self.bytes_granted,
            });
        }
        Ok(())
    }
}

/// Serving-cell power measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellMeas {
    /// Reference signal received power in centi-dBm (e.g. -9500 = -95.00 dBm).
    pub rsrp_centi_dbm: i32,
    /// Serving cell identifier.
    pub cell_id: u16,
}

/// Payload of a diagnostic frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FramePayload {
    Dci(DciGrant),
    GrantedBytes(GrantedBytesReport),
    CellMeas(CellMeas),
}

impl FramePayload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            FramePayload::Dci(_) => MsgType::DciGrant,
            FramePayload::GrantedBytes(_) => MsgType::GrantedBytes,
            FramePayload::CellMeas(_) => MsgType::CellMeas,
        }
    }
}

/// One timestamped diagnostic record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiagFrame {
    /// Capture time in microseconds since the start of the run.
    pub timestamp_us: u64,
    pub payload: FramePayload,
}

impl DiagFrame {
    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }

    /// Field-range validation for the payload; the codec refuses to encode
    /// frames that fail this.
    pub fn validate(&self) -> Result<(), FrameError> {
        match &self.payload {
            FramePayload::Dci(g) => g.validate(),
            FramePayload::GrantedBytes(r) => r.validate(),
            FramePayload::CellMeas(_) => Ok(()),
        }
    }
}

/// Why a frame could not be encoded (or a CRC-valid payload was rejected).
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("prb {0} out of range (max {MAX_PRB})")]
    PrbOutOfRange(u16),
    #[error("tbs_index {0} out of range (max {MAX_TBS_INDEX})")]
    TbsIndexOutOfRange(u8),
    #[error("mimo_layers must be 1, 2 or 4, got {0}")]
    BadMimoLayers(u8),
    #[error("tti_us must be 500 or 1000, got {0}")]
    BadTti(u16),
    #[error("bytes_used {used} exceeds bytes_granted {granted}")]
    UsedExceedsGranted { used: u64, granted: u64 },
    #[error("report window must be non-zero")]
    ZeroWindow,
    #[error("direction byte {0} is neither uplink (0) nor downlink (1)")]
    BadDirection(u8),
}
