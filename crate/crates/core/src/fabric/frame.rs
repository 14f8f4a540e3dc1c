use serde::{Deserialize, Serialize};

pub type FlowId = u32;
pub type HostId = u32;

pub const DEFAULT_MTU: u32 = 1500;
/// PAUSE, RESUME, CNM and ACK frames all occupy one minimum-size frame.
pub const CONTROL_FRAME_BYTES: u32 = 64;
pub const NUM_PRIORITIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowClass {
    Mice,
    Elephant,
}

impl FlowClass {
    pub fn index(self) -> usize {
        match self {
            FlowClass::Mice => 0,
            FlowClass::Elephant => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowClass::Mice => "mice",
            FlowClass::Elephant => "elephant",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    Data,
    Pause,
    Resume,
    Cnm,
    Ack,
}

impl FrameKind {
    pub fn is_control(self) -> bool {
        !matches!(self, FrameKind::Data)
    }
}

/// A frame on the wire.
///
/// Field reuse by kind: for PAUSE/RESUME `priority` is the class being
/// paused; for ACK `seq` is the cumulative acknowledgement and `ecn` the
/// congestion echo; for CNM `fb` carries the quantized feedback and `dst`
/// is the culprit flow's source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub flow: FlowId,
    pub seq: u64,
    pub size: u32,
    pub priority: u8,
    pub ecn: bool,
    pub class: FlowClass,
    pub src: HostId,
    pub dst: HostId,
    pub fb: u8,
}

impl Frame {
    #[allow(clippy::too_many_arguments)]
    pub fn data(
        flow: FlowId,
        seq: u64,
        size: u32,
        priority: u8,
        class: FlowClass,
        src: HostId,
        dst: HostId,
    ) -> Frame {
        debug_assert!(size > 0);
        debug_assert!((priority as usize) < NUM_PRIORITIES);
        Frame {
            kind: FrameKind::Data,
            flow,
            seq,
            size,
            priority,
            ecn: false,
            class,
            src,
            dst,
            fb: 0,
        }
    }

    fn control(kind: FrameKind, priority: u8) -> Frame {
        Frame {
            kind,
            flow: 0,
            seq: 0,
            size: CONTROL_FRAME_BYTES,
            priority,
            ecn: false,
            class: FlowClass::Mice,
            src: 0,
            dst: 0,
            fb: 0,
        }
    }

    pub fn pause(priority: u8) -> Frame {
        Frame::control(FrameKind::Pause, priority)
    }

    pub fn resume(priority: u8) -> Frame {
        Frame::control(FrameKind::Resume, priority)
    }

    pub fn cnm(flow: FlowId, flow_source: HostId, fb: u8) -> Frame {
        Frame {
            flow,
            dst: flow_source,
            fb,
            ..Frame::control(FrameKind::Cnm, 0)
        }
    }

    pub fn ack(flow: FlowId, from: HostId, to: HostId, cumulative: u64, ece: bool) -> Frame {
        Frame {
            flow,
            src: from,
            dst: to,
            seq: cumulative,
            ecn: ece,
            ..Frame::control(FrameKind::Ack, 0)
        }
    }
}
