//! Simulated time.
//!
//! The clock counts whole microseconds. Every 5G slot duration, policy epoch
//! and sample interval the simulator deals in is a whole number of
//! microseconds, so event ordering never depends on float rounding.

use core::fmt;
use core::ops::{Add, Sub};

/// A point (or span) on the simulated clock, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime(0);
        }
        SimTime(libm::round(s * 1e6) as u64)
    }

    /// Rounds up to the next whole microsecond.
    pub fn from_secs_f64_ceil(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime(0);
        }
        let us = libm::ceil(s * 1e6);
        if us >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(us as u64)
        }
    }

    /// True when `s` is a whole number of microseconds (within 1e-6 us).
    pub fn is_whole_micros(s: f64) -> bool {
        let us = s * 1e6;
        libm::fabs(us - libm::round(us)) <= 1e-6
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// True when `self` is an integer multiple of `period` (a zero period never aligns).
    pub fn is_multiple_of(self, period: SimTime) -> bool {
        period.0 != 0 && self.0.is_multiple_of(period.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}
