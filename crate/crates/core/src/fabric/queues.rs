//! Switch buffering.
//!
//! Frames are staged per (egress port, priority) but their bytes are charged
//! to the (ingress port, priority) partition they arrived on. PFC and QCN
//! both watch the ingress partitions.

use std::collections::VecDeque;

use crate::fabric::frame::{FlowClass, Frame, NUM_PRIORITIES};
use crate::fabric::scheduler::{EgressScheduler, SchedulerKind};
use crate::pfc::PfcConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Enqueued,
    Dropped,
}

#[derive(Clone, Debug)]
pub struct IngressQueue {
    pub capacity: u64,
    pub occupancy: u64,
    /// Resident bytes per flow class (mice, elephant).
    pub class_bytes: [u64; 2],
    pub pfc: Option<PfcConfig>,
    pub paused_upstream: bool,
    pub pause_events: u64,
    pub resume_events: u64,
    pub dropped_frames: u64,
    pub dropped_bytes: u64,
}

impl IngressQueue {
    pub fn new(capacity: u64, pfc: Option<PfcConfig>) -> Self {
        IngressQueue {
            capacity,
            occupancy: 0,
            class_bytes: [0; 2],
            pfc,
            paused_upstream: false,
            pause_events: 0,
            resume_events: 0,
            dropped_frames: 0,
            dropped_bytes: 0,
        }
    }

    /// Charges a data frame to this partition, or drops it when it would
    /// overflow.
    pub fn enqueue(&mut self, frame: &Frame) -> EnqueueOutcome {
        let size = frame.size as u64;
        if self.occupancy + size > self.capacity {
            self.dropped_frames += 1;
            self.dropped_bytes += size;
            return EnqueueOutcome::Dropped;
        }
        self.occupancy += size;
        self.class_bytes[frame.class.index()] += size;
        EnqueueOutcome::Enqueued
    }

    pub fn release(&mut self, size: u32, class: FlowClass) {
        let size = size as u64;
        debug_assert!(self.occupancy >= size && self.class_bytes[class.index()] >= size);
        self.occupancy -= size;
        self.class_bytes[class.index()] -= size;
    }

    /// Share of resident bytes belonging to `class`; `None` when empty.
    pub fn class_share(&self, class: FlowClass) -> Option<f64> {
        (self.occupancy > 0).then(|| self.class_bytes[class.index()] as f64 / self.occupancy as f64)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Staged {
    pub frame: Frame,
    pub ingress_port: u16,
}

/// Egress side of a switch port: control frames first, then data classes
/// chosen by the scheduler among non-halted priorities.
#[derive(Clone, Debug)]
pub struct EgressPort {
    pub control: VecDeque<Frame>,
    pub queues: [VecDeque<Staged>; NUM_PRIORITIES],
    pub queued_bytes: u64,
    /// Bit `p` set while priority `p` is paused by the downstream neighbour.
    pub halted: u8,
    pub scheduler: EgressScheduler,
}

impl EgressPort {
    pub fn new(kind: &SchedulerKind, mtu: u32) -> Self {
        EgressPort {
            control: VecDeque::new(),
            queues: Default::default(),
            queued_bytes: 0,
            halted: 0,
            scheduler: EgressScheduler::new(kind, mtu),
        }
    }

    pub fn is_halted(&self, priority: usize) -> bool {
        self.halted & (1 << priority) != 0
    }

    pub fn stage(&mut self, frame: Frame, ingress_port: u16) {
        self.queued_bytes += frame.size as u64;
        self.queues[frame.priority as usize].push_back(Staged {
            frame,
            ingress_port,
        });
    }

    pub fn has_eligible(&self) -> bool {
        !self.control.is_empty()
            || (0..NUM_PRIORITIES).any(|p| !self.is_halted(p) && !self.queues[p].is_empty())
    }

    /// Next frame to serialize; `ingress_port` is `None` for control frames.
    pub fn dequeue(&mut self) -> Option<(Frame, Option<u16>)> {
        if let Some(f) = self.control.pop_front() {
            return Some((f, None));
        }
        let halted = self.halted;
        let queues = &self.queues;
        let p = self.scheduler.select(|p| {
            if halted & (1 << p) != 0 {
                None
            } else {
                queues[p].front().map(|s| s.frame.size)
            }
        })?;
        let staged = self.queues[p]
            .pop_front()
            .expect("scheduler chose an empty class");
        self.queued_bytes -= staged.frame.size as u64;
        Some((staged.frame, Some(staged.ingress_port)))
    }
}
