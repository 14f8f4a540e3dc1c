//! Priority-based flow control (Xon/Xoff per ingress partition).
//!
//! A partition that rises above `k1` sends PAUSE for its priority to the
//! upstream hop; once it drains to `k2` or below it sends RESUME. Pauses are
//! not timed: a halted class stays halted until RESUME arrives. A frame
//! already on the serializer always completes.

use serde::{Deserialize, Serialize};

use crate::fabric::queues::IngressQueue;
use crate::time::SimTime;

pub const KB: u64 = 1024;
/// 24.47 KB.
pub const DEFAULT_K1: u64 = 25_057;
/// Mice partition; K1 plus headroom fills it exactly.
pub const DEFAULT_PARTITION: u64 = 48 * KB;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfcConfig {
    pub k1: u64,
    pub k2: u64,
    pub headroom: u64,
}

impl Default for PfcConfig {
    fn default() -> Self {
        PfcConfig {
            k1: DEFAULT_K1,
            k2: DEFAULT_K1 / 2,
            headroom: DEFAULT_PARTITION - DEFAULT_K1,
        }
    }
}

/// Bytes that can still land after the PAUSE decision: one round trip of
/// propagation at line rate, plus the frame the upstream is already sending
/// and the frame that delays the PAUSE on our own egress.
pub fn required_headroom(prop_delay: SimTime, rate_bps: u64, mtu: u32) -> u64 {
    let bytes_per_rtt = (2 * prop_delay.as_ps() as u128 * rate_bps as u128)
        .div_ceil(8 * crate::time::PS_PER_S as u128);
    bytes_per_rtt as u64 + 2 * mtu as u64
}

impl PfcConfig {
    pub fn validate(
        &self,
        capacity: u64,
        prop_delay: SimTime,
        rate_bps: u64,
        mtu: u32,
    ) -> Result<(), String> {
        if self.k2 >= self.k1 {
            return Err(format!(
                "PFC K2 ({}) must be below K1 ({})",
                self.k2, self.k1
            ));
        }
        if self.k1 + self.headroom > capacity {
            return Err(format!(
                "PFC K1 ({}) + headroom ({}) exceeds the queue capacity ({capacity})",
                self.k1, self.headroom
            ));
        }
        let need = required_headroom(prop_delay, rate_bps, mtu);
        if self.headroom < need {
            return Err(format!(
                "PFC headroom {} is below the in-flight bound {need} (2*prop*rate + 2*MTU)",
                self.headroom
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PfcSignal {
    Pause,
    Resume,
}

impl PfcSignal {
    pub fn name(self) -> &'static str {
        match self {
            PfcSignal::Pause => "PAUSE",
            PfcSignal::Resume => "RESUME",
        }
    }
}

/// Call after every enqueue. Returns PAUSE when the partition has crossed
/// K1 and the upstream is not already paused.
pub fn on_occupancy_rise(queue: &mut IngressQueue) -> Option<PfcSignal> {
    let cfg = queue.pfc?;
    if queue.occupancy > cfg.k1 && !queue.paused_upstream {
        queue.paused_upstream = true;
        queue.pause_events += 1;
        return Some(PfcSignal::Pause);
    }
    None
}

/// Call after every dequeue. Returns RESUME once a paused partition has
/// drained to K2.
pub fn on_occupancy_fall(queue: &mut IngressQueue) -> Option<PfcSignal> {
    let cfg = queue.pfc?;
    if queue.paused_upstream && queue.occupancy <= cfg.k2 {
        queue.paused_upstream = false;
        queue.resume_events += 1;
        return Some(PfcSignal::Resume);
    }
    None
}

/// Applies a received PAUSE/RESUME to an egress halt mask. Returns true if
/// the mask changed (the caller should then re-run its scheduler).
pub fn on_pause_received(halted: &mut u8, priority: u8, signal: PfcSignal) -> bool {
    let bit = 1u8 << priority;
    let before = *halted;
    match signal {
        PfcSignal::Pause => *halted |= bit,
        PfcSignal::Resume => *halted &= !bit,
    }
    before != *halted
}
