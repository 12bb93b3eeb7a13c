//! Compact framed binary protocol, per-robot port allocation and datagram
//! transports.

pub mod crc;
pub mod frame;
pub mod message;
pub mod ports;
pub mod transport;

pub use crc::crc16;
pub use frame::{decode, encode, sys_id_for, DecodeError, EncodeError, Frame, FrameHeader, FrameReader, SeqCounter, SeqTracker, GCS_SYS_ID};
pub use message::{AckResult, Message, SensorPayload};
pub use ports::{allocate_ports, PortBlock, PortError, PortRegistry};
pub use transport::{make_transport, Datagram, LoopbackTransport, Transport, TransportError, TransportKind, UdpTransport};
