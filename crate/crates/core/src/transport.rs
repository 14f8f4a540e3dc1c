//! End-to-end reliability and window control.
//!
//! Every flow is reliable: the receiver returns a cumulative ACK per data
//! frame and the sender repairs holes with fast retransmit (three duplicate
//! ACKs, NewReno partial-ACK handling) or go-back-N on timeout. The amount
//! of data in flight is governed by the flow's congestion controller:
//! rate-based flows have no window (their pace comes from QCN or the line),
//! TCP is a minimal Reno, DCTCP scales its cut by the marked fraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fabric::Frame;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    /// No window; injection limited by line rate or a QCN rate limiter.
    Rate,
    Tcp,
    Dctcp,
}

impl Transport {
    pub fn name(self) -> &'static str {
        match self {
            Transport::Rate => "rate",
            Transport::Tcp => "tcp",
            Transport::Dctcp => "dctcp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcpConfig {
    pub mss: u32,
    pub init_cwnd_segments: u32,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
    pub dctcp_g: f64,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            mss: 1500,
            init_cwnd_segments: 10,
            min_rto: SimTime::from_us(200),
            max_rto: SimTime::from_ms(100),
            dctcp_g: 1.0 / 16.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcpMode {
    SlowStart,
    Avoidance,
    Recovery,
}

#[derive(Clone, Debug)]
pub struct TcpState {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub mode: TcpMode,
    pub mss: u64,
    /// Bytes acknowledged toward the next avoidance increment.
    ca_acked: u64,
}

impl TcpState {
    pub fn new(mss: u32, init_cwnd_segments: u32) -> Self {
        TcpState {
            cwnd: mss as u64 * init_cwnd_segments.max(1) as u64,
            ssthresh: u64::MAX,
            mode: TcpMode::SlowStart,
            mss: mss as u64,
            ca_acked: 0,
        }
    }

    /// Window growth for `acked` newly acknowledged bytes outside recovery.
    pub fn on_ack(&mut self, acked: u64) {
        match self.mode {
            TcpMode::Recovery => {}
            TcpMode::SlowStart => {
                self.cwnd += acked;
                if self.cwnd >= self.ssthresh {
                    self.mode = TcpMode::Avoidance;
                }
            }
            TcpMode::Avoidance => {
                self.ca_acked += acked;
                if self.ca_acked >= self.cwnd {
                    self.ca_acked -= self.cwnd;
                    self.cwnd += self.mss;
                }
            }
        }
    }

    pub fn enter_recovery(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(2 * self.mss);
        self.cwnd = self.ssthresh;
        self.mode = TcpMode::Recovery;
    }

    pub fn exit_recovery(&mut self) {
        self.cwnd = self.ssthresh.max(self.mss);
        self.mode = TcpMode::Avoidance;
    }

    pub fn on_timeout(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(2 * self.mss);
        self.cwnd = self.mss;
        self.mode = TcpMode::SlowStart;
    }
}

#[derive(Clone, Debug)]
pub struct DctcpState {
    pub tcp: TcpState,
    pub alpha: f64,
    pub g: f64,
    window_end: u64,
    acked_in_window: u64,
    marked_in_window: u64,
}

impl DctcpState {
    pub fn new(tcp: TcpState, g: f64) -> Self {
        DctcpState {
            tcp,
            alpha: 0.0,
            g,
            window_end: 0,
            acked_in_window: 0,
            marked_in_window: 0,
        }
    }

    /// Per-window update with marked fraction `fraction`.
    pub fn end_window(&mut self, fraction: f64) {
        self.alpha = ((1.0 - self.g) * self.alpha + self.g * fraction).clamp(0.0, 1.0);
        if fraction > 0.0 {
            let cut = (self.tcp.cwnd as f64 * (1.0 - self.alpha / 2.0)) as u64;
            self.tcp.cwnd = cut.max(self.tcp.mss);
            self.tcp.ssthresh = self.tcp.cwnd;
            if self.tcp.mode == TcpMode::SlowStart {
                self.tcp.mode = TcpMode::Avoidance;
            }
        }
    }

    fn on_ack(&mut self, acked: u64, ece: bool, cumulative: u64, snd_nxt: u64) {
        self.acked_in_window += acked;
        if ece {
            self.marked_in_window += acked;
        }
        if cumulative >= self.window_end {
            if self.acked_in_window > 0 {
                let f = self.marked_in_window as f64 / self.acked_in_window as f64;
                self.end_window(f);
            }
            self.acked_in_window = 0;
            self.marked_in_window = 0;
            self.window_end = snd_nxt;
        }
        self.tcp.on_ack(acked);
    }
}

#[derive(Clone, Debug)]
pub enum CongestionControl {
    Rate,
    Tcp(TcpState),
    Dctcp(DctcpState),
}

impl CongestionControl {
    pub fn new(kind: Transport, cfg: &TcpConfig) -> Self {
        match kind {
            Transport::Rate => CongestionControl::Rate,
            Transport::Tcp => {
                CongestionControl::Tcp(TcpState::new(cfg.mss, cfg.init_cwnd_segments))
            }
            Transport::Dctcp => CongestionControl::Dctcp(DctcpState::new(
                TcpState::new(cfg.mss, cfg.init_cwnd_segments),
                cfg.dctcp_g,
            )),
        }
    }

    pub fn tcp(&self) -> Option<&TcpState> {
        match self {
            CongestionControl::Rate => None,
            CongestionControl::Tcp(t) => Some(t),
            CongestionControl::Dctcp(d) => Some(&d.tcp),
        }
    }

    fn tcp_mut(&mut self) -> Option<&mut TcpState> {
        match self {
            CongestionControl::Rate => None,
            CongestionControl::Tcp(t) => Some(t),
            CongestionControl::Dctcp(d) => Some(&mut d.tcp),
        }
    }

    pub fn cwnd(&self) -> Option<u64> {
        self.tcp().map(|t| t.cwnd)
    }
}

/// RFC 6298 smoothed RTT.
#[derive(Clone, Debug)]
struct RttEstimator {
    srtt: Option<f64>,
    rttvar: f64,
}

impl RttEstimator {
    fn sample(&mut self, rtt_ps: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(rtt_ps);
                self.rttvar = rtt_ps / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - rtt_ps).abs();
                self.srtt = Some(0.875 * s + 0.125 * rtt_ps);
            }
        }
    }

    fn rto(&self, min: SimTime) -> SimTime {
        match self.srtt {
            None => min,
            Some(s) => SimTime::from_ps((s + 4.0 * self.rttvar) as u64).max(min),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AckOutcome {
    /// Bytes newly acknowledged.
    pub acked: u64,
    pub fast_retransmit: bool,
}

#[derive(Clone, Debug)]
pub struct Sender {
    /// `None` for a persistent flow that never ends.
    pub size: Option<u64>,
    pub snd_una: u64,
    pub snd_nxt: u64,
    /// One past the highest byte ever sent.
    pub high: u64,
    pub cc: CongestionControl,
    mss: u32,
    dupacks: u32,
    in_recovery: bool,
    recover: u64,
    retransmit_next: Option<u64>,
    rtt: RttEstimator,
    rtt_probe: Option<(u64, SimTime)>,
    backoff: u32,
    min_rto: SimTime,
    max_rto: SimTime,
    pub rto_deadline: Option<SimTime>,
    pub retransmits: u64,
    pub timeouts: u64,
}

impl Sender {
    pub fn new(size: Option<u64>, kind: Transport, cfg: &TcpConfig) -> Self {
        Sender {
            size,
            snd_una: 0,
            snd_nxt: 0,
            high: 0,
            cc: CongestionControl::new(kind, cfg),
            mss: cfg.mss,
            dupacks: 0,
            in_recovery: false,
            recover: 0,
            retransmit_next: None,
            rtt: RttEstimator {
                srtt: None,
                rttvar: 0.0,
            },
            rtt_probe: None,
            backoff: 0,
            min_rto: cfg.min_rto,
            max_rto: cfg.max_rto,
            rto_deadline: None,
            retransmits: 0,
            timeouts: 0,
        }
    }

    fn end(&self) -> u64 {
        self.size.unwrap_or(u64::MAX)
    }

    pub fn is_complete(&self) -> bool {
        self.size.is_some_and(|s| self.snd_una >= s)
    }

    pub fn outstanding(&self) -> u64 {
        self.high.saturating_sub(self.snd_una)
    }

    fn seg_len(&self, seq: u64) -> u32 {
        (self.end() - seq).min(self.mss as u64) as u32
    }

    /// The segment the sender would transmit now, if the window allows.
    pub fn next_segment(&self) -> Option<(u64, u32)> {
        if let Some(seq) = self.retransmit_next {
            return Some((seq, self.seg_len(seq)));
        }
        if self.snd_nxt >= self.end() {
            return None;
        }
        let len = self.seg_len(self.snd_nxt);
        if let Some(cwnd) = self.cc.cwnd() {
            let in_flight = self.snd_nxt - self.snd_una;
            if in_flight > 0 && in_flight + len as u64 > cwnd {
                return None;
            }
        }
        Some((self.snd_nxt, len))
    }

    pub fn on_sent(&mut self, seq: u64, len: u32, now: SimTime) {
        let end = seq + len as u64;
        if self.retransmit_next == Some(seq) {
            self.retransmit_next = None;
        } else {
            debug_assert_eq!(seq, self.snd_nxt);
            self.snd_nxt = end;
        }
        if seq < self.high {
            self.retransmits += 1;
            // Karn: no RTT samples across retransmissions
            if self.rtt_probe.is_some_and(|(e, _)| e > seq) {
                self.rtt_probe = None;
            }
        } else if self.rtt_probe.is_none() {
            self.rtt_probe = Some((end, now));
        }
        self.high = self.high.max(end);
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto());
        }
    }

    pub fn rto(&self) -> SimTime {
        let base = self.rtt.rto(self.min_rto);
        SimTime::from_ps(base.as_ps().saturating_mul(1 << self.backoff.min(16))).min(self.max_rto)
    }

    pub fn on_ack(&mut self, cumulative: u64, ece: bool, now: SimTime) -> AckOutcome {
        let mut out = AckOutcome::default();
        if cumulative > self.snd_una {
            let acked = cumulative - self.snd_una;
            out.acked = acked;
            self.snd_una = cumulative;
            self.snd_nxt = self.snd_nxt.max(self.snd_una);
            if self.retransmit_next.is_some_and(|s| s < self.snd_una) {
                self.retransmit_next = None;
            }
            self.dupacks = 0;
            self.backoff = 0;
            if let Some((end, sent)) = self.rtt_probe {
                if cumulative >= end {
                    self.rtt.sample((now - sent).as_ps() as f64);
                    self.rtt_probe = None;
                }
            }
            if self.in_recovery {
                if cumulative >= self.recover {
                    self.in_recovery = false;
                    if let Some(t) = self.cc.tcp_mut() {
                        t.exit_recovery();
                    }
                } else {
                    self.retransmit_next = Some(self.snd_una);
                }
            } else {
                let snd_nxt = self.snd_nxt;
                match &mut self.cc {
                    CongestionControl::Rate => {}
                    CongestionControl::Tcp(t) => t.on_ack(acked),
                    CongestionControl::Dctcp(d) => d.on_ack(acked, ece, cumulative, snd_nxt),
                }
            }
            self.rto_deadline = (self.high > self.snd_una).then(|| now + self.rto());
        } else if cumulative == self.snd_una && self.high > self.snd_una {
            self.dupacks += 1;
            if self.dupacks == 3 && !self.in_recovery {
                self.in_recovery = true;
                self.recover = self.high;
                if let Some(t) = self.cc.tcp_mut() {
                    t.enter_recovery();
                }
                self.retransmit_next = Some(self.snd_una);
                out.fast_retransmit = true;
            }
        }
        out
    }

    /// Go-back-N from the first unacknowledged byte.
    pub fn on_timeout(&mut self, now: SimTime) {
        if self.high <= self.snd_una {
            self.rto_deadline = None;
            return;
        }
        self.timeouts += 1;
        if let Some(t) = self.cc.tcp_mut() {
            t.on_timeout();
        }
        self.snd_nxt = self.snd_una;
        self.retransmit_next = None;
        self.in_recovery = false;
        self.dupacks = 0;
        self.rtt_probe = None;
        self.backoff += 1;
        self.rto_deadline = Some(now + self.rto());
    }
}

/// Cumulative-ACK receiver that buffers out-of-order segments.
#[derive(Clone, Debug, Default)]
pub struct Receiver {
    pub rcv_nxt: u64,
    ooo: BTreeMap<u64, u64>,
    pub unique_bytes: u64,
    pub duplicate_bytes: u64,
}

impl Receiver {
    /// Accepts `[seq, seq+len)` and returns the cumulative ACK.
    pub fn on_data(&mut self, seq: u64, len: u32) -> u64 {
        let (mut lo, hi) = (seq, seq + len as u64);
        if hi <= self.rcv_nxt {
            self.duplicate_bytes += len as u64;
            return self.rcv_nxt;
        }
        if lo < self.rcv_nxt {
            self.duplicate_bytes += self.rcv_nxt - lo;
            lo = self.rcv_nxt;
        }
        // Merge into the out-of-order set, counting only new bytes.
        let mut new_lo = lo;
        let mut new_hi = hi;
        let overlapping: Vec<(u64, u64)> = self
            .ooo
            .range(..=hi)
            .filter(|(_, &e)| e >= lo)
            .map(|(&s, &e)| (s, e))
            .collect();
        let mut covered = 0;
        for (s, e) in overlapping {
            covered += e.min(hi).saturating_sub(s.max(lo));
            new_lo = new_lo.min(s);
            new_hi = new_hi.max(e);
            self.ooo.remove(&s);
        }
        self.duplicate_bytes += covered;
        self.unique_bytes += (hi - lo) - covered;
        self.ooo.insert(new_lo, new_hi);
        if let Some((&s, &e)) = self.ooo.first_key_value() {
            if s <= self.rcv_nxt {
                self.rcv_nxt = e;
                self.ooo.remove(&s);
            }
        }
        self.rcv_nxt
    }
}

/// DCTCP switch rule: mark when the partition already holds at least
/// `threshold` bytes as the frame arrives.
pub fn ecn_mark_on_enqueue(occupancy: u64, frame: &mut Frame, threshold: u64) -> bool {
    if occupancy >= threshold {
        frame.ecn = true;
    }
    frame.ecn
}
