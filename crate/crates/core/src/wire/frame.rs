//! Frame layout:
//!
//! ```text
//! 0      1    2    3       4        5..7          7..7+len   7+len..9+len
//! magic  len  seq  sys_id  comp_id  msg_id (LE)   payload    crc (LE)
//! ```
//!
//! The CRC covers `len` through the end of the payload.

use std::collections::HashMap;

use thiserror::Error;

use super::crc::crc16;
use super::message::{self, ids, Message, MAX_ACTUATORS};

pub const MAGIC: u8 = 0xA5;
pub const HEADER_LEN: usize = 7;
pub const CRC_LEN: usize = 2;
pub const MAX_PAYLOAD: usize = 255;

/// sys_id 0 is the ground station; robot `i` is `i + 1`.
pub const GCS_SYS_ID: u8 = 0;

pub fn sys_id_for(robot_index: usize) -> u8 {
    (robot_index + 1) as u8
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds 255")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("first byte is not the frame magic")]
    BadMagic,
    #[error("need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("crc mismatch: computed {computed:#06x}, frame carries {received:#06x}")]
    BadCrc { computed: u16, received: u16 },
    #[error("unknown message id {msg_id}")]
    UnknownMsgId { msg_id: u16, frame_len: usize },
    #[error("payload length {len} invalid for message id {msg_id}")]
    BadLength { msg_id: u16, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub seq: u8,
    pub sys_id: u8,
    pub comp_id: u8,
    pub msg_id: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub header: FrameHeader,
    pub message: Message,
}

pub fn frame_len(payload_len: usize) -> usize {
    HEADER_LEN + payload_len + CRC_LEN
}

pub fn encode(msg: &Message, seq: u8, sys_id: u8, comp_id: u8) -> Result<Vec<u8>, EncodeError> {
    if let Message::ActuatorCmd { forces } = msg {
        if forces.len() > MAX_ACTUATORS {
            return Err(EncodeError::PayloadTooLarge(1 + 4 * forces.len()));
        }
    }
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&[MAGIC, 0, seq, sys_id, comp_id]);
    out.extend_from_slice(&msg.msg_id().to_le_bytes());
    msg.write_payload(&mut out);
    let len = out.len() - HEADER_LEN;
    if len > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(len));
    }
    out[1] = len as u8;
    let crc = crc16(&out[1..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Decodes one frame from the front of `bytes`. On success returns the frame
/// and the number of bytes it occupied; trailing bytes are left untouched.
pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), DecodeError> {
    let Some(&first) = bytes.first() else {
        return Err(DecodeError::Truncated { needed: HEADER_LEN, available: 0 });
    };
    if first != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let len = bytes[1] as usize;
    let total = frame_len(len);
    if bytes.len() < total {
        return Err(DecodeError::Truncated { needed: total, available: bytes.len() });
    }
    let computed = crc16(&bytes[1..HEADER_LEN + len]);
    let received = u16::from_le_bytes([bytes[HEADER_LEN + len], bytes[HEADER_LEN + len + 1]]);
    if computed != received {
        return Err(DecodeError::BadCrc { computed, received });
    }
    let header = FrameHeader {
        seq: bytes[2],
        sys_id: bytes[3],
        comp_id: bytes[4],
        msg_id: u16::from_le_bytes([bytes[5], bytes[6]]),
    };
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    if !message::is_known(header.msg_id) {
        return Err(DecodeError::UnknownMsgId { msg_id: header.msg_id, frame_len: total });
    }
    let len_ok = match message::fixed_payload_len(header.msg_id) {
        Some(n) => n == len,
        None => header.msg_id == ids::ACTUATOR_CMD && len >= 1 && len == 1 + 4 * payload[0] as usize,
    };
    if !len_ok {
        return Err(DecodeError::BadLength { msg_id: header.msg_id, len });
    }
    let message = Message::read_payload(header.msg_id, payload).expect("known id with validated length");
    Ok((Frame { header, message }, total))
}

/// Sequence-gap accounting per source system.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeqTracker {
    last: HashMap<u8, u8>,
    gaps: u64,
}

impl SeqTracker {
    /// Records `seq` from `sys_id` and returns the number of frames skipped.
    pub fn observe(&mut self, sys_id: u8, seq: u8) -> u8 {
        let gap = match self.last.insert(sys_id, seq) {
            Some(prev) => seq.wrapping_sub(prev).wrapping_sub(1),
            None => 0,
        };
        self.gaps += gap as u64;
        gap
    }

    pub fn gaps(&self) -> u64 {
        self.gaps
    }
}

/// Outgoing sequence counter for one link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeqCounter(u8);

impl SeqCounter {
    pub fn next(&mut self) -> u8 {
        let s = self.0;
        self.0 = self.0.wrapping_add(1);
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReaderStats {
    pub frames: u64,
    pub bad_crc: u64,
    pub bad_length: u64,
    pub unknown: u64,
    pub skipped_bytes: u64,
}

/// Streaming reassembly over an arbitrary byte stream.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
    stats: ReaderStats,
    seq: SeqTracker,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn stats(&self) -> ReaderStats {
        self.stats
    }

    pub fn seq_gaps(&self) -> u64 {
        self.seq.gaps()
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, skipping and counting corrupt data. Returns `None`
    /// when more bytes are needed.
    pub fn next_frame(&mut self) -> Option<Frame> {
        loop {
            match decode(&self.buf) {
                Ok((frame, used)) => {
                    self.buf.drain(..used);
                    self.stats.frames += 1;
                    self.seq.observe(frame.header.sys_id, frame.header.seq);
                    return Some(frame);
                }
                Err(DecodeError::Truncated { .. }) => return None,
                Err(DecodeError::BadMagic) => {
                    let skip = self.buf.iter().position(|&b| b == MAGIC).unwrap_or(self.buf.len());
                    self.buf.drain(..skip);
                    self.stats.skipped_bytes += skip as u64;
                }
                Err(DecodeError::UnknownMsgId { frame_len, .. }) => {
                    self.buf.drain(..frame_len);
                    self.stats.unknown += 1;
                }
                Err(e) => {
                    match e {
                        DecodeError::BadCrc { .. } => self.stats.bad_crc += 1,
                        _ => self.stats.bad_length += 1,
                    }
                    self.buf.drain(..1);
                    self.stats.skipped_bytes += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::message::SensorPayload;
    use proptest::prelude::*;

    #[test]
    fn heartbeat_layout() {
        let bytes = encode(&Message::Heartbeat { mode: 0, armed: 0 }, 0, 1, 1).unwrap();
        assert_eq!(bytes.len(), 11);
        assert_eq!(&bytes[..7], &[0xA5, 0x02, 0x00, 0x01, 0x01, 0x00, 0x00]);
        // CRC over [02 00 01 01 00 00 00 00] from the bit-serial reference.
        assert_eq!(&bytes[9..], &[0x69, 0x51]);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode(&[]), Err(DecodeError::Truncated { .. })));
        assert_eq!(decode(&[0x00, 0x01]), Err(DecodeError::BadMagic));
        let bytes = encode(&Message::Arm { flag: 1 }, 3, 1, 1).unwrap();
        assert!(matches!(decode(&bytes[..5]), Err(DecodeError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[7] ^= 0x01;
        assert!(matches!(decode(&bad), Err(DecodeError::BadCrc { .. })));
    }

    #[test]
    fn unknown_id_is_skipped_with_length() {
        let mut raw = vec![MAGIC, 1, 0, 1, 1, 0x34, 0x12, 0x07];
        let crc = crc16(&raw[1..]);
        raw.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode(&raw), Err(DecodeError::UnknownMsgId { msg_id: 0x1234, frame_len: 10 }));
        let mut reader = FrameReader::new();
        reader.push(&raw);
        reader.push(&encode(&Message::Arm { flag: 1 }, 0, 1, 1).unwrap());
        assert_eq!(reader.next_frame().unwrap().message, Message::Arm { flag: 1 });
        assert_eq!(reader.stats().unknown, 1);
    }

    #[test]
    fn decode_leaves_trailing_bytes() {
        let mut bytes = encode(&Message::SetMode { mode: 2 }, 0, 2, 1).unwrap();
        let n = bytes.len();
        bytes.extend_from_slice(&[1, 2, 3]);
        let (_, used) = decode(&bytes).unwrap();
        assert_eq!(used, n);
    }

    #[test]
    fn reader_resyncs_after_garbage_and_counts_gaps() {
        let mut r = FrameReader::new();
        r.push(&[0x11, 0x22, MAGIC, 0x05]);
        r.push(&encode(&Message::Arm { flag: 1 }, 0, 1, 1).unwrap());
        r.push(&encode(&Message::Arm { flag: 0 }, 3, 1, 1).unwrap());
        assert_eq!(r.next_frame().unwrap().message, Message::Arm { flag: 1 });
        assert_eq!(r.next_frame().unwrap().message, Message::Arm { flag: 0 });
        assert!(r.next_frame().is_none());
        assert_eq!(r.seq_gaps(), 2);
        assert!(r.stats().skipped_bytes >= 2);
    }

    #[test]
    fn too_many_actuators() {
        let m = Message::ActuatorCmd { forces: vec![0.0; 64] };
        assert!(matches!(encode(&m, 0, 1, 1), Err(EncodeError::PayloadTooLarge(_))));
    }

    #[test]
    fn seq_wraps() {
        let mut c = SeqCounter::default();
        let seqs: Vec<u8> = (0..300).map(|_| c.next()).collect();
        assert_eq!(seqs[255], 255);
        assert_eq!(seqs[256], 0);
        let mut t = SeqTracker::default();
        for s in seqs {
            assert_eq!(t.observe(4, s), 0);
        }
    }

    pub(crate) fn arb_message() -> impl Strategy<Value = Message> {
        let f = || -1.0e6f32..1.0e6f32;
        prop_oneof![
            (any::<u8>(), any::<u8>()).prop_map(|(mode, armed)| Message::Heartbeat { mode, armed }),
            any::<u8>().prop_map(|flag| Message::Arm { flag }),
            any::<u8>().prop_map(|mode| Message::SetMode { mode }),
            proptest::array::uniform6(-1000i16..=1000).prop_map(|axes| Message::RcOverride { axes }),
            (proptest::array::uniform4(f()), proptest::array::uniform3(f()), any::<u32>())
                .prop_map(|(quaternion, rates, time_ms)| Message::Attitude { quaternion, rates, time_ms }),
            (proptest::array::uniform3(f()), proptest::array::uniform3(f()), any::<u32>())
                .prop_map(|(position, velocity, time_ms)| Message::LocalPosition { position, velocity, time_ms }),
            (proptest::array::uniform3(f()), proptest::array::uniform3(f()), f(), f(), proptest::array::uniform3(f()), any::<u8>(), any::<u32>())
                .prop_map(|(accel, gyro, heading, depth, fix, flags, time_ms)| Message::SensorState(SensorPayload {
                    accel, gyro, heading, depth, fix, flags, time_ms
                })),
            proptest::collection::vec(f(), 0..=MAX_ACTUATORS).prop_map(|forces| Message::ActuatorCmd { forces }),
            proptest::array::uniform4(f()).prop_map(|setpoint| Message::TrajectorySetpoint { setpoint }),
            (any::<u16>(), any::<u16>()).prop_map(|(traj_id, count)| Message::TrajectoryHeader { traj_id, count }),
            (any::<u16>(), any::<u16>(), f(), proptest::array::uniform4(f())).prop_map(
                |(traj_id, index, time_from_start, setpoint)| Message::TrajectoryPoint { traj_id, index, time_from_start, setpoint }
            ),
            (any::<u16>(), any::<u8>()).prop_map(|(msg_id, result)| Message::Ack { msg_id, result }),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(m in arb_message(), seq: u8, sys: u8, comp: u8) {
            let bytes = encode(&m, seq, sys, comp).unwrap();
            prop_assert_eq!(bytes.len(), frame_len(bytes[1] as usize));
            let (frame, used) = decode(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(frame.message, m);
            prop_assert_eq!(frame.header, FrameHeader { seq, sys_id: sys, comp_id: comp, msg_id: frame.header.msg_id });
        }

        #[test]
        fn any_split_reassembles(m in arb_message(), seq: u8) {
            let bytes = encode(&m, seq, 1, 1).unwrap();
            for cut in 0..=bytes.len() {
                let mut r = FrameReader::new();
                r.push(&bytes[..cut]);
                let early = r.next_frame();
                r.push(&bytes[cut..]);
                let frame = early.or_else(|| r.next_frame()).unwrap();
                prop_assert_eq!(&frame.message, &m);
            }
        }

        #[test]
        fn arbitrary_bytes_never_panic(data in proptest::collection::vec(any::<u8>(), 0..400)) {
            let _ = decode(&data);
            let mut r = FrameReader::new();
            r.push(&data);
            while r.next_frame().is_some() {}
        }
    }
}
