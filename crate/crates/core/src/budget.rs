use std::time::{Duration, Instant};

/// Cooperative limits for a solve: an optional wall-clock deadline and an
/// optional cap on high-level expansions.
///
/// Searches check the deadline at every high-level expansion and every
/// 10 000 low-level expansions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Budget {
    pub deadline: Option<Instant>,
    pub max_expansions: Option<usize>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn with_timeout(limit: Duration) -> Self {
        Budget {
            deadline: Some(Instant::now() + limit),
            max_expansions: None,
        }
    }

    pub fn with_expansions(max: usize) -> Self {
        Budget {
            deadline: None,
            max_expansions: Some(max),
        }
    }

    pub fn and_expansions(mut self, max: usize) -> Self {
        self.max_expansions = Some(max);
        self
    }

    pub fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub fn expansions_exhausted(&self, done: usize) -> bool {
        self.max_expansions.is_some_and(|m| done >= m)
    }
}
