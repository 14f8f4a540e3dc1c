use crate::fabric::topology::Link;
use crate::time::SimTime;

/// Timing of one frame on a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transmission {
    /// Serialization complete; the sender may start the next frame.
    pub tx_done: SimTime,
    /// Last bit reaches the far end.
    pub arrival: SimTime,
}

/// Per-direction serializer state. At most one frame is on the serializer.
#[derive(Clone, Debug, Default)]
pub struct LinkState {
    busy_until: SimTime,
    busy: bool,
    pub frames_sent: u64,
    pub data_bytes_sent: u64,
    /// Data bytes serialized or propagating but not yet delivered.
    pub data_bytes_in_flight: u64,
}

impl LinkState {
    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    /// Starts serializing `size` bytes at `now`. The caller must call
    /// [`LinkState::finish`] at `tx_done` before transmitting again.
    pub fn transmit(&mut self, link: &Link, now: SimTime, size: u32) -> Transmission {
        assert!(!self.busy, "link already serializing a frame");
        let tx_done = now + link.serialization(size);
        self.busy = true;
        self.busy_until = tx_done;
        self.frames_sent += 1;
        Transmission {
            tx_done,
            arrival: tx_done + link.prop_delay,
        }
    }

    pub fn finish(&mut self) {
        self.busy = false;
    }
}
