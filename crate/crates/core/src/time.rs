//! Simulated time.
//!
//! Time is an integer count of picoseconds. At 10 Gbps a byte takes 800 ps,
//! so every frame size has an exact serialization time and event ordering
//! never depends on floating-point rounding.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_S: u64 = 1_000_000_000_000;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    /// Rounds to the nearest picosecond; negative inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * PS_PER_S as f64).round().max(0.0) as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    /// Whole nanoseconds, truncated.
    pub const fn as_ns(self) -> u64 {
        self.0 / PS_PER_NS
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 / PS_PER_NS as f64
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / PS_PER_US as f64
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
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
        write!(f, "{:.3}us", self.as_us_f64())
    }
}

/// Time to clock `bytes` onto a wire of `bits_per_sec`, rounded up to the
/// next picosecond.
pub fn serialization_time(bytes: u64, bits_per_sec: u64) -> SimTime {
    assert!(bits_per_sec > 0, "link capacity must be positive");
    let bits = bytes as u128 * 8 * PS_PER_S as u128;
    let rate = bits_per_sec as u128;
    SimTime(bits.div_ceil(rate) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_gig_frame_times_are_exact() {
        assert_eq!(
            serialization_time(1500, 10_000_000_000),
            SimTime::from_ns(1200)
        );
        assert_eq!(
            serialization_time(64, 10_000_000_000),
            SimTime::from_ps(51_200)
        );
        // 2KB mice flow
        assert_eq!(
            serialization_time(2048, 10_000_000_000),
            SimTime::from_ps(1_638_400)
        );
    }

    #[test]
    fn rounds_up_on_odd_rates() {
        assert_eq!(
            serialization_time(1, 3),
            SimTime::from_ps(2_666_666_666_667)
        );
    }
}
