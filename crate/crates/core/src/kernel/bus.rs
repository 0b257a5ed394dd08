use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::event::SimEvent;
use crate::behavior_graph::FieldKind;
use crate::value::ValueMap;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaViolation {
    #[error("`{event_type}` payload is missing field `{field}`")]
    MissingField { event_type: String, field: String },
    #[error("`{event_type}` payload field `{field}` expects {expected}")]
    WrongKind { event_type: String, field: String, expected: String },
    #[error("`{event_type}` payload carries undeclared field `{field}`")]
    UndeclaredField { event_type: String, field: String },
}

/// Check `payload` against an edge schema: every field present with the
/// declared kind, nothing extra.
pub fn check_payload(
    event_type: &str,
    payload: &ValueMap,
    schema: &BTreeMap<String, FieldKind>,
) -> Result<(), SchemaViolation> {
    for (field, kind) in schema {
        match payload.get(field) {
            None => {
                return Err(SchemaViolation::MissingField {
                    event_type: event_type.to_string(),
                    field: field.clone(),
                })
            }
            Some(v) if !kind.accepts(v) => {
                return Err(SchemaViolation::WrongKind {
                    event_type: event_type.to_string(),
                    field: field.clone(),
                    expected: kind.to_string(),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = payload.keys().find(|k| !schema.contains_key(*k)) {
        return Err(SchemaViolation::UndeclaredField {
            event_type: event_type.to_string(),
            field: extra.clone(),
        });
    }
    Ok(())
}

/// Pending-event queue with an atomic publish counter.
#[derive(Debug, Default)]
pub struct EventBus {
    next_seq: AtomicU64,
    pending: Mutex<Vec<SimEvent>>,
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validate, stamp and enqueue. The event's `seq` field is overwritten.
    pub fn publish(&self, mut event: SimEvent, schema: &BTreeMap<String, FieldKind>) -> Result<u64, SchemaViolation> {
        check_payload(&event.event_type, &event.payload, schema)?;
        event.meta.wall_time_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        // seq assignment and enqueue happen under one lock so queue order is seq order
        let mut pending = self.pending.lock().unwrap();
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        event.seq = seq;
        pending.push(event);
        Ok(seq)
    }

    pub fn published(&self) -> u64 {
        self.next_seq.load(Ordering::SeqCst)
    }

    /// Remove and return all events stamped `round`, ascending by seq.
    pub fn drain_round(&self, round: u32) -> Vec<SimEvent> {
        let mut pending = self.pending.lock().unwrap();
        let (due, rest): (Vec<_>, Vec<_>) = pending.drain(..).partition(|e| e.round == round);
        *pending = rest;
        due
    }

    pub fn pending_len(&self) -> usize {
        self.pending.lock().unwrap().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::event::{EventMeta, Source, Target};
    use crate::value::Value;
    use std::sync::Arc;

    fn event(round: u32, payload: ValueMap) -> SimEvent {
        SimEvent {
            seq: 999,
            round,
            event_type: "e".into(),
            source: Source::Env,
            target: Target::Broadcast,
            to_node: None,
            payload,
            meta: EventMeta::default(),
        }
    }

    fn schema() -> BTreeMap<String, FieldKind> {
        [("x".to_string(), FieldKind::Int)].into_iter().collect()
    }

    fn px(v: i64) -> ValueMap {
        [("x".to_string(), Value::Int(v))].into_iter().collect()
    }

    #[test]
    fn first_publish_is_seq_zero() {
        let bus = EventBus::new();
        assert_eq!(bus.publish(event(1, ValueMap::new()), &BTreeMap::new()).unwrap(), 0);
        assert_eq!(bus.publish(event(1, ValueMap::new()), &BTreeMap::new()).unwrap(), 1);
    }

    #[test]
    fn missing_field_rejected() {
        let bus = EventBus::new();
        let err = bus.publish(event(1, ValueMap::new()), &schema()).unwrap_err();
        assert!(matches!(err, SchemaViolation::MissingField { .. }));
        assert_eq!(bus.published(), 0);
        let wrong = [("x".to_string(), Value::from("no"))].into_iter().collect();
        assert!(matches!(bus.publish(event(1, wrong), &schema()), Err(SchemaViolation::WrongKind { .. })));
        let mut extra = px(1);
        extra.insert("y".into(), Value::Int(0));
        assert!(matches!(bus.publish(event(1, extra), &schema()), Err(SchemaViolation::UndeclaredField { .. })));
    }

    #[test]
    fn concurrent_publishes_get_distinct_consecutive_seqs() {
        let bus = Arc::new(EventBus::new());
        let handles: Vec<_> = (0..2)
            .map(|i| {
                let bus = bus.clone();
                std::thread::spawn(move || bus.publish(event(1, px(i)), &schema()).unwrap())
            })
            .collect();
        let mut seqs: Vec<u64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        seqs.sort();
        assert_eq!(seqs, [0, 1]);
        let drained = bus.drain_round(1);
        assert_eq!(drained.iter().map(|e| e.seq).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn drain_keeps_future_rounds() {
        let bus = EventBus::new();
        bus.publish(event(2, px(0)), &schema()).unwrap();
        bus.publish(event(1, px(1)), &schema()).unwrap();
        assert_eq!(bus.drain_round(1).len(), 1);
        assert_eq!(bus.pending_len(), 1);
        assert_eq!(bus.drain_round(2)[0].seq, 0);
    }
}
