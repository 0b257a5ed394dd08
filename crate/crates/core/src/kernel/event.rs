use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::behavior_graph::NodeId;
use crate::value::ValueMap;

/// Event type the environment publishes at the start of every round to wake
/// agents at their start actions.
pub const ROUND_START: &str = "round_start";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Env,
    Agent(AgentId),
}

impl Source {
    pub fn agent(&self) -> Option<AgentId> {
        match self {
            Source::Env => None,
            Source::Agent(a) => Some(*a),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Env => f.write_str("ENV"),
            Source::Agent(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Agent(AgentId),
    /// Every agent of the receiving action's agent type.
    Broadcast,
    /// Every subscriber of the event type.
    Subscription,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventMeta {
    pub parent_seq: Option<u64>,
    /// Publish time in ms since the Unix epoch. Diagnostic only: never
    /// serialized, so results stay byte-comparable.
    #[serde(skip)]
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    pub round: u32,
    pub event_type: String,
    pub source: Source,
    pub target: Target,
    /// Receiving action; `None` for round-start ticks.
    pub to_node: Option<NodeId>,
    pub payload: ValueMap,
    pub meta: EventMeta,
}

/// One line of the exported event log, in its fixed field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogRecord {
    pub seq: u64,
    pub round: u32,
    #[serde(rename = "type")]
    pub event_type: String,
    pub source: Source,
    pub target: Target,
    pub payload: ValueMap,
}

impl From<&SimEvent> for EventLogRecord {
    fn from(e: &SimEvent) -> Self {
        EventLogRecord {
            seq: e.seq,
            round: e.round,
            event_type: e.event_type.clone(),
            source: e.source,
            target: e.target,
            payload: e.payload.clone(),
        }
    }
}

/// Render events as line-delimited JSON records.
pub fn write_event_log(events: &[SimEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(&EventLogRecord::from(e)).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn read_event_log(text: &str) -> Result<Vec<EventLogRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// `event_type -> subscribers`, iterated in ascending agent id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionTable {
    table: BTreeMap<String, BTreeSet<AgentId>>,
}

impl SubscriptionTable {
    pub fn subscribe(&mut self, event_type: &str, agent: AgentId) {
        self.table.entry(event_type.to_string()).or_default().insert(agent);
    }

    pub fn unsubscribe(&mut self, event_type: &str, agent: AgentId) {
        if let Some(set) = self.table.get_mut(event_type) {
            set.remove(&agent);
        }
    }

    pub fn subscribers(&self, event_type: &str) -> impl Iterator<Item = AgentId> + '_ {
        self.table.get(event_type).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn has_subscribers(&self, event_type: &str) -> bool {
        self.table.get(event_type).is_some_and(|s| !s.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    #[test]
    fn subscribers_iterate_ascending() {
        let mut t = SubscriptionTable::default();
        for id in [5, 1, 3] {
            t.subscribe("ping", AgentId(id));
        }
        t.subscribe("other", AgentId(0));
        assert_eq!(t.subscribers("ping").collect::<Vec<_>>(), [AgentId(1), AgentId(3), AgentId(5)]);
        t.unsubscribe("ping", AgentId(3));
        assert_eq!(t.subscribers("ping").count(), 2);
        assert!(!t.has_subscribers("none"));
    }

    #[test]
    fn event_log_has_stable_field_order() {
        let e = SimEvent {
            seq: 3,
            round: 2,
            event_type: "interaction".into(),
            source: Source::Agent(AgentId(4)),
            target: Target::Agent(AgentId(5)),
            to_node: Some(NodeId(1)),
            payload: [("feature".to_string(), Value::Int(2))].into_iter().collect(),
            meta: EventMeta { parent_seq: Some(1), wall_time_ms: 123 },
        };
        let log = write_event_log(std::slice::from_ref(&e));
        assert_eq!(
            log,
            "{\"seq\":3,\"round\":2,\"type\":\"interaction\",\"source\":{\"agent\":4},\"target\":{\"agent\":5},\"payload\":{\"feature\":2}}\n"
        );
        assert_eq!(read_event_log(&log).unwrap(), vec![EventLogRecord::from(&e)]);
    }
}
