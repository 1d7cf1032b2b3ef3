use serde::{Deserialize, Serialize};

use crate::sde::KillKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub particle: usize,
    pub kind: KillKind,
    pub donor: Option<usize>,
}

/// Ordered record of jumps plus per-unit-time-window counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpLog {
    events: Vec<JumpEvent>,
    window_counts: Vec<u64>,
    #[serde(skip)]
    record_events: bool,
}

impl JumpLog {
    pub fn new(record_events: bool) -> Self {
        Self {
            events: Vec::new(),
            window_counts: Vec::new(),
            record_events,
        }
    }

    /// Appends a jump and returns the updated count of `window`.
    pub(crate) fn push(&mut self, event: JumpEvent, window: u64) -> u64 {
        let w = window as usize;
        if self.window_counts.len() <= w {
            self.window_counts.resize(w + 1, 0);
        }
        self.window_counts[w] += 1;
        if self.record_events {
            debug_assert!(self.events.last().is_none_or(|e| e.time <= event.time));
            self.events.push(event);
        }
        self.window_counts[w]
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn window_counts(&self) -> &[u64] {
        &self.window_counts
    }

    pub fn total(&self) -> u64 {
        self.window_counts.iter().sum()
    }

    pub fn max_window_count(&self) -> u64 {
        self.window_counts.iter().copied().max().unwrap_or(0)
    }
}
