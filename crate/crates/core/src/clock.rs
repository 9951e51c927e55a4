use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulated time source. Advances only through [`SimClock::charge`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seconds elapsed since the clock was created.
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn charge(&mut self, cost: f64) -> Result<()> {
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::NegativeCost(cost));
        }
        self.now += cost;
        Ok(())
    }
}
