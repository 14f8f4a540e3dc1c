//! Run outputs: per-flow completion times, link throughput bins, queue
//! samples, PFC and CNM logs, and the scalar summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::RunError;
use crate::fabric::{FlowClass, FlowId, HostId, IngressQueue, SwitchId};
use crate::pfc::PfcSignal;
use crate::time::SimTime;

/// Mice share of a partition at the instant PFC or QCN fires on it.
pub fn occupancy_share_at_trigger(q: &IngressQueue) -> Option<f64> {
    q.class_share(FlowClass::Mice)
}

/// Per-flow delivery totals at the end of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRecord {
    pub flow: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub class: FlowClass,
    pub size: Option<u64>,
    pub arrival: SimTime,
    pub delivered: u64,
    pub retransmits: u64,
    pub timeouts: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FctRecord {
    pub flow: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub class: FlowClass,
    pub size: u64,
    pub arrival: SimTime,
    pub complete: SimTime,
}

impl FctRecord {
    pub fn fct(&self) -> SimTime {
        self.complete - self.arrival
    }
}

/// Per-class bits carried by one link direction, binned by time. A frame's
/// bits are spread over the bins its serialization overlaps.
#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputSeries {
    pub name: String,
    pub capacity_bps: u64,
    pub bin: SimTime,
    pub bits: Vec<[u64; 2]>,
}

impl ThroughputSeries {
    pub fn new(name: String, capacity_bps: u64, bin: SimTime, horizon: SimTime) -> Self {
        let n = horizon.as_ps().div_ceil(bin.as_ps()) as usize;
        ThroughputSeries {
            name,
            capacity_bps,
            bin,
            bits: vec![[0; 2]; n.max(1)],
        }
    }

    pub fn record(&mut self, class: FlowClass, start: SimTime, end: SimTime, bytes: u32) {
        let total = bytes as u128 * 8;
        let (s, e) = (start.as_ps() as u128, end.as_ps() as u128);
        let d = (e - s).max(1);
        let w = self.bin.as_ps() as u128;
        let upto = |t: u128| total * (t.clamp(s, e) - s) / d;
        let mut k = (s / w) as usize;
        while k < self.bits.len() {
            let (lo, hi) = (k as u128 * w, (k as u128 + 1) * w);
            if lo >= e && e > s {
                break;
            }
            let part = if e == s { total } else { upto(hi) - upto(lo) };
            self.bits[k][class.index()] += part as u64;
            if hi >= e {
                break;
            }
            k += 1;
        }
    }

    /// Bits carried in `[from, to)` by whole bins.
    pub fn bits_between(&self, from: SimTime, to: SimTime) -> u64 {
        let w = self.bin.as_ps();
        let a = from.as_ps().div_ceil(w) as usize;
        let b = ((to.as_ps() / w) as usize).min(self.bits.len());
        self.bits[a.min(b)..b].iter().map(|x| x[0] + x[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueSeries {
    pub switch: String,
    pub series: &'static str,
    pub bytes: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PauseRecord {
    pub t: SimTime,
    pub switch: SwitchId,
    pub port: u16,
    pub priority: u8,
    pub signal: PfcSignal,
    pub mice_share: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FbRecord {
    pub t: SimTime,
    pub switch: SwitchId,
    pub flow: FlowId,
    pub culprit: FlowClass,
    pub raw: f64,
    pub quantized: u8,
    pub mice_share: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassBytes {
    pub mice: u64,
    pub elephant: u64,
}

impl ClassBytes {
    pub fn add(&mut self, class: FlowClass, bytes: u64) {
        match class {
            FlowClass::Mice => self.mice += bytes,
            FlowClass::Elephant => self.elephant += bytes,
        }
    }

    pub fn total(&self) -> u64 {
        self.mice + self.elephant
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SwitchPfc {
    pub switch: String,
    pub pauses: u64,
    pub resumes: u64,
    pub first_pause_us: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub horizon_us: f64,
    pub warmup_us: f64,
    pub events: u64,
    pub flows: usize,
    pub mice_flows: usize,
    pub mice_completed: usize,
    pub mice_fct_mean_us: Option<f64>,
    pub mice_fct_p50_us: Option<f64>,
    pub mice_fct_p99_us: Option<f64>,
    pub elephant_flows: usize,
    pub elephants_completed: usize,
    pub bottleneck_link: String,
    pub bottleneck_utilization: f64,
    pub bottleneck_mice_utilization: f64,
    pub bottleneck_elephant_utilization: f64,
    pub victim_utilization: Option<f64>,
    pub goodput_gbps: f64,
    pub queue_mean_bytes: f64,
    pub queue_std_bytes: f64,
    pub egress_queue_mean_bytes: f64,
    pub egress_queue_std_bytes: f64,
    pub pause_frames: u64,
    pub resume_frames: u64,
    pub pause_frames_mice_class: u64,
    pub pfc_by_switch: Vec<SwitchPfc>,
    pub mice_share_at_pause: Option<f64>,
    pub cnm_count: u64,
    pub fb_mean: Option<f64>,
    pub fb_raw_mean: Option<f64>,
    pub fb_mean_elephant_culprit: Option<f64>,
    pub fb_mean_mice_culprit: Option<f64>,
    pub mice_share_at_cnm: Option<f64>,
    pub data_frames_sent: u64,
    pub data_frames_dropped: u64,
    /// Over the whole run, start-up included.
    pub drop_ratio: f64,
    pub drop_ratio_after_warmup: f64,
    pub mice_frames_dropped: u64,
    pub ecn_enqueues: u64,
    pub ecn_marked: u64,
    pub retransmitted_frames: u64,
    pub rto_timeouts: u64,
    pub injected_bytes: ClassBytes,
    pub delivered_bytes: ClassBytes,
    pub dropped_bytes: ClassBytes,
    pub resident_bytes: ClassBytes,
    pub conservation_ok: bool,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub summary: Summary,
    pub fct: Vec<FctRecord>,
    pub flows: Vec<FlowRecord>,
    pub throughput: Vec<ThroughputSeries>,
    pub queue_sample: SimTime,
    pub queues: Vec<QueueSeries>,
    pub pauses: Vec<PauseRecord>,
    pub fb: Vec<FbRecord>,
    pub switch_names: Vec<String>,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Streaming mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.mean
        }
    }

    pub fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn fct_csv(&self) -> String {
        let mut out =
            String::from("flow_id,src,dst,class,size_bytes,arrival_us,complete_us,fct_us\n");
        for r in &self.fct {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3},{:.3},{:.3}",
                r.flow,
                r.src,
                r.dst,
                r.class.name(),
                r.size,
                r.arrival.as_us_f64(),
                r.complete.as_us_f64(),
                r.fct().as_us_f64()
            );
        }
        out
    }

    pub fn flows_csv(&self) -> String {
        let mut out = String::from(
            "flow_id,src,dst,class,size_bytes,arrival_us,delivered_bytes,retransmits,timeouts\n",
        );
        for r in &self.flows {
            let size = r.size.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{size},{:.3},{},{},{}",
                r.flow,
                r.src,
                r.dst,
                r.class.name(),
                r.arrival.as_us_f64(),
                r.delivered,
                r.retransmits,
                r.timeouts
            );
        }
        out
    }

    pub fn throughput_csv(&self) -> String {
        let mut out = String::from("t_us,link,class,gbps,utilization\n");
        for s in &self.throughput {
            let secs = s.bin.as_secs_f64();
            for (k, b) in s.bits.iter().enumerate() {
                let t = (s.bin.as_ps() * k as u64) as f64 / 1e6;
                for class in [FlowClass::Mice, FlowClass::Elephant] {
                    let bps = b[class.index()] as f64 / secs;
                    let _ = writeln!(
                        out,
                        "{t:.3},{},{},{:.6},{:.6}",
                        s.name,
                        class.name(),
                        bps / 1e9,
                        bps / s.capacity_bps as f64
                    );
                }
            }
        }
        out
    }

    pub fn queues_csv(&self) -> String {
        let mut out = String::from("t_us,switch,series,bytes\n");
        let dt = self.queue_sample.as_us_f64();
        for q in &self.queues {
            for (k, b) in q.bytes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:.3},{},{},{}",
                    dt * (k + 1) as f64,
                    q.switch,
                    q.series,
                    b
                );
            }
        }
        out
    }

    pub fn pauses_csv(&self) -> String {
        let mut out = String::from("t_us,switch,port,priority,kind,mice_share\n");
        for p in &self.pauses {
            let _ = writeln!(
                out,
                "{:.3},{},{},{},{},{}",
                p.t.as_us_f64(),
                self.switch_names[p.switch as usize],
                p.port,
                p.priority,
                p.signal.name(),
                opt(p.mice_share)
            );
        }
        out
    }

    pub fn fb_csv(&self) -> String {
        let mut out =
            String::from("t_us,switch,flow_id,culprit_class,fb_raw,fb_quantized,mice_share\n");
        for r in &self.fb {
            let _ = writeln!(
                out,
                "{:.3},{},{},{},{:.3},{},{}",
                r.t.as_us_f64(),
                self.switch_names[r.switch as usize],
                r.flow,
                r.culprit.name(),
                r.raw,
                r.quantized,
                opt(r.mice_share)
            );
        }
        out
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<(), RunError> {
        let io = |path: &Path, source| RunError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let files = [
            ("fct.csv", self.fct_csv()),
            ("flows.csv", self.flows_csv()),
            ("throughput.csv", self.throughput_csv()),
            ("queues.csv", self.queues_csv()),
            ("pauses.csv", self.pauses_csv()),
            ("fb.csv", self.fb_csv()),
            ("summary.json", self.summary.to_json()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 50.0), Some(2.0));
        assert_eq!(percentile(&xs, 99.0), Some(4.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn moments_match_two_pass() {
        let xs = [3.0, 7.0, 7.0, 19.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        assert!((m.mean() - 9.0).abs() < 1e-12);
        let var = xs.iter().map(|x| (x - 9.0f64).powi(2)).sum::<f64>() / 3.0;
        assert!((m.std() - var.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn binning_preserves_bits(start in 0u64..1_000_000_000, dur in 0u64..500_000_000, bytes in 1u32..9000) {
            let mut s = ThroughputSeries::new("l".into(), 10_000_000_000, SimTime::from_us(100), SimTime::from_ms(2));
            let (a, b) = (SimTime::from_ps(start), SimTime::from_ps(start + dur));
            s.record(FlowClass::Elephant, a, b, bytes);
            let total: u64 = s.bits.iter().map(|x| x[1]).sum();
            prop_assert_eq!(total, bytes as u64 * 8);
        }
    }
}
