//! Typed messages carried in frames.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{MsgType, WireFrame};
use super::DistError;
use crate::agent::{AgentId, AgentRecord, AgentSnapshot};
use crate::behavior_graph::ScenarioSpec;
use crate::kernel::{AgentOutcome, BackendKind, Delivery, Topology};
use crate::value::ValueMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assign {
    pub worker: usize,
    pub spec: ScenarioSpec,
    pub backend: BackendKind,
    pub master_seed: u64,
    pub record_transcripts: bool,
    pub topology: Topology,
    pub agents: Vec<AgentRecord>,
    pub snapshot: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBatch {
    pub round: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deliveries: Vec<Delivery>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<AgentOutcome>,
    /// Set on the final batch of the round.
    pub last: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSync {
    pub round: u32,
    pub environment: ValueMap,
    pub views: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub round: u32,
    /// Records of the agents that ran this round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<AgentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub round: u32,
    pub agents: Vec<AgentId>,
    pub events: u64,
    pub handled: u64,
    pub compute_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    RegisterWorker(Register),
    AssignAgents(Box<Assign>),
    EventBatch(EventBatch),
    StateSync(StateSync),
    Ack(Ack),
    Heartbeat,
    Shutdown,
    MetricsReport(MetricsReport),
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("protocol messages serialize")
}

fn parse<T: DeserializeOwned>(frame: &WireFrame) -> Result<T, DistError> {
    serde_json::from_str(&frame.payload)
        .map_err(|e| DistError::Protocol(format!("malformed {} payload: {e}", frame.msg_type)))
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::RegisterWorker(_) => MsgType::RegisterWorker,
            Message::AssignAgents(_) => MsgType::AssignAgents,
            Message::EventBatch(_) => MsgType::EventBatch,
            Message::StateSync(_) => MsgType::StateSync,
            Message::Ack(_) => MsgType::Ack,
            Message::Heartbeat => MsgType::Heartbeat,
            Message::Shutdown => MsgType::Shutdown,
            Message::MetricsReport(_) => MsgType::MetricsReport,
        }
    }

    pub fn to_frame(&self) -> WireFrame {
        let payload = match self {
            Message::RegisterWorker(m) => json(m),
            Message::AssignAgents(m) => json(m),
            Message::EventBatch(m) => json(m),
            Message::StateSync(m) => json(m),
            Message::Ack(m) => json(m),
            Message::MetricsReport(m) => json(m),
            Message::Heartbeat | Message::Shutdown => String::new(),
        };
        WireFrame::new(self.msg_type(), payload)
    }

    pub fn from_frame(frame: &WireFrame) -> Result<Self, DistError> {
        Ok(match frame.msg_type {
            MsgType::RegisterWorker => Message::RegisterWorker(parse(frame)?),
            MsgType::AssignAgents => Message::AssignAgents(Box::new(parse(frame)?)),
            MsgType::EventBatch => Message::EventBatch(parse(frame)?),
            MsgType::StateSync => Message::StateSync(parse(frame)?),
            MsgType::Ack => Message::Ack(parse(frame)?),
            MsgType::MetricsReport => Message::MetricsReport(parse(frame)?),
            MsgType::Heartbeat => Message::Heartbeat,
            MsgType::Shutdown => Message::Shutdown,
        })
    }
}

/// Framed message stream over any duplex byte transport.
pub struct Channel<S> {
    stream: S,
}

impl<S: std::io::Read + std::io::Write> Channel<S> {
    pub fn new(stream: S) -> Self {
        Channel { stream }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), DistError> {
        super::wire::write_frame(&mut self.stream, &msg.to_frame()).map_err(DistError::from)
    }

    pub fn recv(&mut self) -> Result<Message, DistError> {
        let frame = super::wire::read_frame(&mut self.stream)?;
        Message::from_frame(&frame)
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }
}
