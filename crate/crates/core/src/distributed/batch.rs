//! Size- and age-bounded batching of outgoing items.

use std::time::{Duration, Instant};

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_BATCH_AGE: Duration = Duration::from_millis(20);

/// Collects items and releases them in arrival order once `max_size` are
/// pending or the oldest has waited `max_age`.
#[derive(Debug)]
pub struct Batcher<T> {
    max_size: usize,
    max_age: Duration,
    pending: Vec<T>,
    opened: Option<Instant>,
}

impl<T> Batcher<T> {
    /// `max_size` below 1 is treated as 1.
    pub fn new(max_size: usize, max_age: Duration) -> Self {
        Batcher { max_size: max_size.max(1), max_age, pending: Vec::new(), opened: None }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Add an item; returns the batches that became due, oldest first.
    pub fn push(&mut self, item: T, now: Instant) -> Vec<Vec<T>> {
        let mut out: Vec<Vec<T>> = self.poll(now).into_iter().collect();
        if self.pending.is_empty() {
            self.opened = Some(now);
        }
        self.pending.push(item);
        if self.pending.len() >= self.max_size {
            out.extend(self.flush());
        }
        out
    }

    /// Release the pending batch if it has reached its age limit.
    pub fn poll(&mut self, now: Instant) -> Option<Vec<T>> {
        match self.opened {
            Some(t) if now.duration_since(t) >= self.max_age => self.flush(),
            _ => None,
        }
    }

    pub fn flush(&mut self) -> Option<Vec<T>> {
        self.opened = None;
        (!self.pending.is_empty()).then(|| std::mem::take(&mut self.pending))
    }
}

/// Batch a queue of `(arrival_ms, item)` pairs as a [`Batcher`] would, with a
/// final flush at the end of the queue.
pub fn batch_events<T>(queue: impl IntoIterator<Item = (u64, T)>, max_size: usize, max_age_ms: u64) -> Vec<Vec<T>> {
    let start = Instant::now();
    let mut b = Batcher::new(max_size, Duration::from_millis(max_age_ms));
    let mut out = Vec::new();
    for (t, item) in queue {
        out.extend(b.push(item, start + Duration::from_millis(t)));
    }
    out.extend(b.flush());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_one_isolates_every_event() {
        let batches = batch_events((0..5).map(|i| (0, i)), 1, 20);
        assert_eq!(batches, (0..5).map(|i| vec![i]).collect::<Vec<_>>());
    }

    #[test]
    fn thousand_events_split_by_size() {
        let sizes: Vec<usize> = batch_events((0..1000).map(|i| (0, i)), 256, 20).iter().map(Vec::len).collect();
        assert_eq!(sizes, [256, 256, 256, 232]);
    }

    #[test]
    fn age_flushes_small_batch() {
        let start = Instant::now();
        let mut b = Batcher::new(DEFAULT_BATCH_SIZE, DEFAULT_BATCH_AGE);
        for i in 0..5 {
            assert!(b.push(i, start).is_empty());
        }
        assert_eq!(b.poll(start + Duration::from_millis(5)), None);
        assert_eq!(b.poll(start + Duration::from_millis(20)), Some(vec![0, 1, 2, 3, 4]));
        let batches = batch_events([(0, 'a'), (1, 'b'), (25, 'c')], 256, 20);
        assert_eq!(batches, vec![vec!['a', 'b'], vec!['c']]);
    }
}
