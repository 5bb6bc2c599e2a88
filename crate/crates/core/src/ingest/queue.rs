//! Bounded producer/consumer buffer that sheds the oldest frames.

use std::collections::VecDeque;

use crate::signal::SAMPLE_RATE_HZ;

/// Two seconds of frames.
pub const DEFAULT_CAPACITY: usize = 2 * SAMPLE_RATE_HZ as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueEvent {
    /// The consumer fell behind; this many of the oldest items were discarded.
    Dropped { count: u64 },
}

#[derive(Debug, Clone)]
pub struct DropOldestQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
    dropped: u64,
}

impl<T> Default for DropOldestQueue<T> {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CAPACITY)
    }
}

impl<T> DropOldestQueue<T> {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
            dropped: 0,
        }
    }

    pub fn push(&mut self, item: T) -> Option<QueueEvent> {
        let mut event = None;
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.dropped += 1;
            event = Some(QueueEvent::Dropped { count: 1 });
        }
        self.items.push_back(item);
        event
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    pub fn drain(&mut self) -> impl Iterator<Item = T> + '_ {
        self.items.drain(..)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped
    }
}
