use rand::Rng;

use crate::space::NetworkState;

/// One `(s, a, r, s')` experience. The action is its encoded index.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: NetworkState,
    pub action: usize,
    pub reward: f64,
    pub next_state: NetworkState,
}

/// Fixed-capacity FIFO of transitions; once full, each push overwrites the
/// oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl Default for ReplayMemory {
    /// An unallocated single-slot memory.
    fn default() -> Self {
        ReplayMemory {
            buffer: Vec::new(),
            capacity: 1,
            cursor: 0,
        }
    }
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            buffer: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Slot the next push writes to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub(crate) fn set_cursor(&mut self, cursor: usize) {
        self.cursor = cursor % self.capacity;
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(t);
        } else {
            self.buffer[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.buffer.len() < self.capacity { 0 } else { self.cursor };
        self.buffer[split..].iter().chain(&self.buffer[..split])
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        if self.buffer.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.buffer[rng.gen_range(0..self.buffer.len())])
            .collect()
    }
}
