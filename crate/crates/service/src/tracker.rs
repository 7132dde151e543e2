//! Live queued-token tracking for the service's endpoints.
//!
//! Clients report dispatches and completions; selections take a consistent
//! point-in-time snapshot. The lock covers only the counter adjustments and
//! the snapshot copy, never candidate scoring.

use std::sync::Mutex;

use laar_core::types::EndpointState;

/// Tracks queued tokens per model. Completions can race ahead of their
/// dispatch reports; the counter clamps at zero and flags the anomaly
/// instead of going negative.
#[derive(Debug)]
pub struct EndpointTracker {
    shards: Mutex<Vec<(String, u64)>>,
}

/// Result of one tracker adjustment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjustment {
    pub model_id: String,
    pub queued_tokens: u64,
    /// Set when a completion would have driven the counter below zero.
    pub clamped: bool,
}

impl EndpointTracker {
    /// Builds a tracker over the given (model, initial tokens) roster.
    pub fn new(initial: impl IntoIterator<Item = (String, u64)>) -> Self {
        EndpointTracker {
            shards: Mutex::new(initial.into_iter().collect()),
        }
    }

    /// Records `tokens` of new work routed to `model_id`.
    /// Returns `None` for unknown models.
    pub fn report_dispatch(&self, model_id: &str, tokens: u64) -> Option<Adjustment> {
        let mut shards = self.shards.lock().unwrap();
        let entry = shards.iter_mut().find(|(id, _)| id == model_id)?;
        entry.1 += tokens;
        Some(Adjustment {
            model_id: model_id.to_string(),
            queued_tokens: entry.1,
            clamped: false,
        })
    }

    /// Records `tokens` of work finished at `model_id`, clamping at zero.
    /// Returns `None` for unknown models.
    pub fn report_complete(&self, model_id: &str, tokens: u64) -> Option<Adjustment> {
        let mut shards = self.shards.lock().unwrap();
        let entry = shards.iter_mut().find(|(id, _)| id == model_id)?;
        let clamped = tokens > entry.1;
        entry.1 = entry.1.saturating_sub(tokens);
        Some(Adjustment {
            model_id: model_id.to_string(),
            queued_tokens: entry.1,
            clamped,
        })
    }

    /// Consistent copy of every endpoint's state, in roster order.
    pub fn snapshot(&self) -> Vec<EndpointState> {
        self.shards
            .lock()
            .unwrap()
            .iter()
            .map(|(id, tokens)| EndpointState {
                model_id: id.clone(),
                queued_tokens: *tokens,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracker() -> EndpointTracker {
        EndpointTracker::new([("a".to_string(), 0), ("b".to_string(), 0)])
    }

    #[test]
    fn dispatch_and_complete_round_trip() {
        let t = tracker();
        let adj = t.report_dispatch("a", 4096).unwrap();
        assert_eq!(adj.queued_tokens, 4096);
        assert!(!adj.clamped);
        assert_eq!(t.snapshot()[0].queued_tokens, 4096);
        let adj = t.report_complete("a", 4096).unwrap();
        assert_eq!(adj.queued_tokens, 0);
        assert!(!adj.clamped);
    }

    #[test]
    fn complete_without_dispatch_clamps_to_zero() {
        let t = tracker();
        let adj = t.report_complete("b", 100).unwrap();
        assert_eq!(adj.queued_tokens, 0);
        assert!(adj.clamped);
    }

    #[test]
    fn unknown_model_is_rejected() {
        let t = tracker();
        assert!(t.report_dispatch("zz", 1).is_none());
        assert!(t.report_complete("zz", 1).is_none());
    }

    #[test]
    fn snapshot_is_order_stable() {
        let t = tracker();
        t.report_dispatch("b", 7).unwrap();
        let snap = t.snapshot();
        assert_eq!(snap[0].model_id, "a");
        assert_eq!(snap[1].model_id, "b");
        assert_eq!(snap[1].queued_tokens, 7);
    }

    #[test]
    fn concurrent_adjustments_are_conserved() {
        use std::sync::Arc;
        let t = Arc::new(tracker());
        let mut handles = Vec::new();
        for _ in 0..8 {
            let t = Arc::clone(&t);
            handles.push(std::thread::spawn(move || {
                for _ in 0..1000 {
                    t.report_dispatch("a", 3).unwrap();
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(t.snapshot()[0].queued_tokens, 8 * 1000 * 3);
    }
}
