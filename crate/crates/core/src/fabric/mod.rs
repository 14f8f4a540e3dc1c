//! Topology and the switch data path.

pub mod frame;
pub mod link;
pub mod queues;
pub mod scheduler;
pub mod topology;

pub use frame::{
    FlowClass, FlowId, Frame, FrameKind, HostId, CONTROL_FRAME_BYTES, DEFAULT_MTU, NUM_PRIORITIES,
};
pub use link::{LinkState, Transmission};
pub use queues::{EgressPort, EnqueueOutcome, IngressQueue, Staged};
pub use scheduler::{EgressScheduler, SchedulerKind};
pub use topology::{ecmp_index, Link, LinkId, NodeRef, SwitchId, SwitchRole, Topology};
