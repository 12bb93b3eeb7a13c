//! Ground-station proxy: decodes robot telemetry into a namespaced in-process
//! topic bus and encodes commands onto each robot's own link.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{decode, encode, AckResult, Message, PortBlock, SeqCounter, Transport, TransportError, GCS_SYS_ID};

#[derive(Debug, Error)]
pub enum GcsError {
    #[error("robot {0} has no allocated link")]
    UnknownRobot(usize),
    #[error("bad topic name {0:?}")]
    BadTopic(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    State,
    Attitude,
    Heartbeat,
    Ack,
    Cmd,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::State, Channel::Attitude, Channel::Heartbeat, Channel::Ack, Channel::Cmd];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::State => "state",
            Channel::Attitude => "attitude",
            Channel::Heartbeat => "heartbeat",
            Channel::Ack => "ack",
            Channel::Cmd => "cmd",
        }
    }

    /// Channel a robot-originated message is published on.
    pub fn for_telemetry(msg: &Message) -> Option<Channel> {
        match msg {
            Message::LocalPosition { .. } => Some(Channel::State),
            Message::Attitude { .. } => Some(Channel::Attitude),
            Message::Heartbeat { .. } => Some(Channel::Heartbeat),
            Message::Ack { .. } => Some(Channel::Ack),
            _ => None,
        }
    }
}

/// `/robot_<i>/<channel>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TopicName {
    pub robot: usize,
    pub channel: Channel,
}

impl TopicName {
    pub fn new(robot: usize, channel: Channel) -> Self {
        Self { robot, channel }
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/robot_{}/{}", self.robot, self.channel.as_str())
    }
}

impl FromStr for TopicName {
    type Err = GcsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GcsError::BadTopic(s.to_string());
        let rest = s.strip_prefix("/robot_").ok_or_else(bad)?;
        let (idx, chan) = rest.split_once('/').ok_or_else(bad)?;
        let robot = idx.parse().map_err(|_| bad())?;
        let channel = Channel::ALL.into_iter().find(|c| c.as_str() == chan).ok_or_else(bad)?;
        Ok(Self { robot, channel })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub topic: TopicName,
    pub sys_id: u8,
    pub seq: u8,
    pub message: Message,
}

/// Per-topic FIFO fan-out with a last-value cache. Subscribers hold the
/// receiving end of a channel, so they may live on other threads.
#[derive(Debug, Default)]
pub struct TopicBus {
    subs: BTreeMap<TopicName, Vec<Sender<Publication>>>,
    latest: BTreeMap<TopicName, Publication>,
    published: u64,
}

impl TopicBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, topic: TopicName) -> Receiver<Publication> {
        let (tx, rx) = channel();
        self.subs.entry(topic).or_default().push(tx);
        rx
    }

    pub fn publish(&mut self, p: Publication) {
        if let Some(list) = self.subs.get_mut(&p.topic) {
            list.retain(|tx| tx.send(p.clone()).is_ok());
        }
        self.published += 1;
        self.latest.insert(p.topic, p);
    }

    pub fn latest(&self, topic: &TopicName) -> Option<&Publication> {
        self.latest.get(topic)
    }

    pub fn published(&self) -> u64 {
        self.published
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboundFrame {
    pub to_port: u16,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyCounters {
    pub frames: u64,
    pub dropped: u64,
    pub unroutable: u64,
}

#[derive(Debug)]
pub struct GcsProxy {
    port: u16,
    links: BTreeMap<usize, u16>,
    seq: BTreeMap<usize, SeqCounter>,
    bus: TopicBus,
    counters: ProxyCounters,
}

pub const DEFAULT_GCS_PORT: u16 = 14550;

impl GcsProxy {
    pub fn new(port: u16) -> Self {
        Self { port, links: BTreeMap::new(), seq: BTreeMap::new(), bus: TopicBus::new(), counters: Default::default() }
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn add_robot(&mut self, robot_index: usize, ports: &PortBlock) {
        self.links.insert(robot_index, ports.gcs_link);
        self.seq.entry(robot_index).or_default();
    }

    pub fn bus(&self) -> &TopicBus {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut TopicBus {
        &mut self.bus
    }

    pub fn counters(&self) -> ProxyCounters {
        self.counters
    }

    /// Decodes every frame in one datagram and publishes the telemetry. A
    /// decode error drops the rest of the datagram and counts one drop.
    pub fn route_inbound(&mut self, bytes: &[u8]) -> Vec<Publication> {
        let mut out = Vec::new();
        let mut rest = bytes;
        while !rest.is_empty() {
            let (frame, used) = match decode(rest) {
                Ok(v) => v,
                Err(_) => {
                    self.counters.dropped += 1;
                    break;
                }
            };
            rest = &rest[used..];
            self.counters.frames += 1;
            let h = frame.header;
            let channel = Channel::for_telemetry(&frame.message);
            match (h.sys_id, channel) {
                (sys, Some(channel)) if sys != GCS_SYS_ID && self.links.contains_key(&(sys as usize - 1)) => {
                    let p = Publication {
                        topic: TopicName::new(sys as usize - 1, channel),
                        sys_id: sys,
                        seq: h.seq,
                        message: frame.message,
                    };
                    self.bus.publish(p.clone());
                    out.push(p);
                }
                _ => self.counters.unroutable += 1,
            }
        }
        out
    }

    /// Encodes `command` for robot `robot_index` and mirrors it on that
    /// robot's `cmd` topic.
    pub fn publish_command(&mut self, robot_index: usize, command: &Message) -> Result<OutboundFrame, GcsError> {
        let to_port = *self.links.get(&robot_index).ok_or(GcsError::UnknownRobot(robot_index))?;
        let seq = self.seq.entry(robot_index).or_default().next();
        let bytes = encode(command, seq, GCS_SYS_ID, 190).expect("commands fit a frame");
        self.bus.publish(Publication {
            topic: TopicName::new(robot_index, Channel::Cmd),
            sys_id: GCS_SYS_ID,
            seq,
            message: command.clone(),
        });
        Ok(OutboundFrame { to_port, bytes })
    }

    pub fn send_command(
        &mut self,
        transport: &mut dyn Transport,
        robot_index: usize,
        command: &Message,
    ) -> Result<(), GcsError> {
        let f = self.publish_command(robot_index, command)?;
        transport.send(self.port, f.to_port, &f.bytes)?;
        Ok(())
    }

    /// Drains the proxy port.
    pub fn poll(&mut self, transport: &mut dyn Transport) -> Result<Vec<Publication>, GcsError> {
        let mut out = Vec::new();
        while let Some(d) = transport.recv(self.port, None)? {
            out.extend(self.route_inbound(&d.bytes));
        }
        Ok(out)
    }

    /// Most recent ACK result for `msg_id` from a robot, if any.
    pub fn last_ack(&self, robot_index: usize) -> Option<(u16, AckResult)> {
        match &self.bus.latest(&TopicName::new(robot_index, Channel::Ack))?.message {
            Message::Ack { msg_id, result } => Some((*msg_id, AckResult::from_u8(*result)?)),
            _ => None,
        }
    }
}

/// Free-function form of [`GcsProxy::route_inbound`].
pub fn route_inbound(proxy: &mut GcsProxy, bytes: &[u8]) -> Vec<Publication> {
    proxy.route_inbound(bytes)
}

/// Free-function form of [`GcsProxy::publish_command`].
pub fn publish_command(proxy: &mut GcsProxy, robot_index: usize, command: &Message) -> Result<OutboundFrame, GcsError> {
    proxy.publish_command(robot_index, command)
}
