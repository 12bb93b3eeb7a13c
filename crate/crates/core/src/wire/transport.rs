//! Datagram transports: real localhost UDP, or an in-process loopback with
//! identical semantics (one frame per datagram, unbound destinations drop).

use std::collections::{BTreeMap, VecDeque};
use std::io::ErrorKind;
use std::net::{Ipv4Addr, SocketAddrV4, UdpSocket};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("port {port} could not be bound: {reason}")]
    PortBindFailure { port: u16, reason: String },
    #[error("port {0} is not bound")]
    NotBound(u16),
    #[error("io error on port {port}: {source}")]
    Io { port: u16, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Loopback,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub from: u16,
    pub bytes: Vec<u8>,
}

pub trait Transport: Send {
    fn bind(&mut self, port: u16) -> Result<(), TransportError>;
    fn send(&mut self, from: u16, to: u16, bytes: &[u8]) -> Result<(), TransportError>;
    /// Next datagram queued on `port`. `wait` bounds blocking for transports
    /// that can block; loopback never blocks.
    fn recv(&mut self, port: u16, wait: Option<Duration>) -> Result<Option<Datagram>, TransportError>;
    fn bound_ports(&self) -> Vec<u16>;
    fn kind(&self) -> TransportKind;
}

pub fn make_transport(kind: TransportKind) -> Box<dyn Transport> {
    match kind {
        TransportKind::Loopback => Box::new(LoopbackTransport::default()),
        TransportKind::Udp => Box::new(UdpTransport::default()),
    }
}

#[derive(Debug, Default)]
pub struct LoopbackTransport {
    queues: BTreeMap<u16, VecDeque<Datagram>>,
    dropped: u64,
}

impl LoopbackTransport {
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

impl Transport for LoopbackTransport {
    fn bind(&mut self, port: u16) -> Result<(), TransportError> {
        if self.queues.contains_key(&port) {
            return Err(TransportError::PortBindFailure { port, reason: "address in use".into() });
        }
        self.queues.insert(port, VecDeque::new());
        Ok(())
    }

    fn send(&mut self, from: u16, to: u16, bytes: &[u8]) -> Result<(), TransportError> {
        if !self.queues.contains_key(&from) {
            return Err(TransportError::NotBound(from));
        }
        match self.queues.get_mut(&to) {
            Some(q) => q.push_back(Datagram { from, bytes: bytes.to_vec() }),
            None => self.dropped += 1,
        }
        Ok(())
    }

    fn recv(&mut self, port: u16, _wait: Option<Duration>) -> Result<Option<Datagram>, TransportError> {
        self.queues.get_mut(&port).map(|q| q.pop_front()).ok_or(TransportError::NotBound(port))
    }

    fn bound_ports(&self) -> Vec<u16> {
        self.queues.keys().copied().collect()
    }

    fn kind(&self) -> TransportKind {
        TransportKind::Loopback
    }
}

#[derive(Debug, Default)]
pub struct UdpTransport {
    sockets: BTreeMap<u16, UdpSocket>,
}

impl Transport for UdpTransport {
    fn bind(&mut self, port: u16) -> Result<(), TransportError> {
        let sock = UdpSocket::bind(SocketAddrV4::new(Ipv4Addr::LOCALHOST, port))
            .map_err(|e| TransportError::PortBindFailure { port, reason: e.to_string() })?;
        self.sockets.insert(port, sock);
        Ok(())
    }

    fn send(&mut self, from: u16, to: u16, bytes: &[u8]) -> Result<(), TransportError> {
        let sock = self.sockets.get(&from).ok_or(TransportError::NotBound(from))?;
        match sock.send_to(bytes, SocketAddrV4::new(Ipv4Addr::LOCALHOST, to)) {
            Ok(_) => Ok(()),
            // Nobody listening is a lost datagram, not a fault.
            Err(e) if e.kind() == ErrorKind::ConnectionRefused => Ok(()),
            Err(e) => Err(TransportError::Io { port: from, source: e }),
        }
    }

    fn recv(&mut self, port: u16, wait: Option<Duration>) -> Result<Option<Datagram>, TransportError> {
        let sock = self.sockets.get(&port).ok_or(TransportError::NotBound(port))?;
        let io = |e| TransportError::Io { port, source: e };
        match wait {
            Some(d) if !d.is_zero() => {
                sock.set_nonblocking(false).map_err(io)?;
                sock.set_read_timeout(Some(d)).map_err(io)?;
            }
            _ => sock.set_nonblocking(true).map_err(io)?,
        }
        let mut buf = [0u8; 512];
        loop {
            match sock.recv_from(&mut buf) {
                Ok((n, addr)) => return Ok(Some(Datagram { from: addr.port(), bytes: buf[..n].to_vec() })),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Ok(None),
                // ICMP unreachable from an earlier send surfaces here on Linux.
                Err(e) if e.kind() == ErrorKind::ConnectionRefused => continue,
                Err(e) => return Err(io(e)),
            }
        }
    }

    fn bound_ports(&self) -> Vec<u16> {
        self.sockets.keys().copied().collect()
    }

    fn kind(&self) -> TransportKind {
        TransportKind::Udp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_delivers_in_order_and_drops_unbound() {
        let mut t = LoopbackTransport::default();
        t.bind(1).unwrap();
        t.bind(2).unwrap();
        assert!(t.bind(2).is_err());
        t.send(1, 2, b"a").unwrap();
        t.send(1, 2, b"b").unwrap();
        t.send(1, 3, b"c").unwrap();
        assert_eq!(t.recv(2, None).unwrap().unwrap(), Datagram { from: 1, bytes: b"a".to_vec() });
        assert_eq!(t.recv(2, None).unwrap().unwrap().bytes, b"b");
        assert!(t.recv(2, None).unwrap().is_none());
        assert_eq!(t.dropped(), 1);
        assert!(matches!(t.send(9, 2, b"x"), Err(TransportError::NotBound(9))));
    }

    #[test]
    fn udp_round_trip() {
        let mut t = UdpTransport::default();
        // Ask the OS for free ports, then rebind them through the transport.
        let a = UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        if t.bind(a).is_err() || t.bind(b).is_err() {
            return;
        }
        t.send(a, b, b"hello").unwrap();
        let d = t.recv(b, Some(Duration::from_millis(500))).unwrap().unwrap();
        assert_eq!(d, Datagram { from: a, bytes: b"hello".to_vec() });
        assert!(t.recv(b, None).unwrap().is_none());
    }
}
