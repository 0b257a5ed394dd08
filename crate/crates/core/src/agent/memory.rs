use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round: u32,
    pub event_type: String,
    pub digest: String,
}

impl MemoryEntry {
    pub fn new(round: u32, event_type: impl Into<String>, digest: impl Into<String>) -> Self {
        MemoryEntry { round, event_type: event_type.into(), digest: digest.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("memory entry for round {got} arrives after round {last}")]
pub struct OutOfOrder {
    pub last: u32,
    pub got: u32,
}

/// Sliding window over the most recent `capacity` entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryWindow {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl MemoryWindow {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        MemoryWindow { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    pub fn last_round(&self) -> Option<u32> {
        self.entries.back().map(|e| e.round)
    }

    /// Append `entry`, evicting the oldest once the window is full.
    pub fn remember(&mut self, entry: MemoryEntry) -> Result<(), OutOfOrder> {
        if let Some(last) = self.last_round() {
            if entry.round < last {
                return Err(OutOfOrder { last, got: entry.round });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }
}
