//! Flow schedules, mice/elephant classification and priority mapping.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TopologyError};
use crate::fabric::{FlowClass, FlowId, HostId, Topology};
use crate::time::SimTime;

pub const DEFAULT_BOUNDARY: u64 = 100 * 1024;
/// 7.7 KB query response.
pub const RESPONSE_BYTES: u64 = 7885;
/// Priority carrying elephants (and everything when mixed).
pub const LOW_PRIORITY: u8 = 0;
/// Priority carrying mice under isolation.
pub const HIGH_PRIORITY: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    /// `None` when the size is not known in advance (persistent elephants).
    pub size: Option<u64>,
    /// Application declaration; overrides the size classifier.
    pub declared: Option<FlowClass>,
    pub arrival: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    ManyToOne,
    HeadOfLine,
    IntraRank,
    InterRank,
    PoissonBackground,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mix {
    Mice,
    Elephant,
    Mixed,
}

impl Mix {
    fn has_mice(self) -> bool {
        self != Mix::Elephant
    }

    fn has_elephants(self) -> bool {
        self != Mix::Mice
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SizeDist {
    Uniform { lo: u64, hi: u64 },
    Exponential { mean: f64 },
    Fixed { bytes: u64 },
}

impl SizeDist {
    pub fn mean(&self) -> f64 {
        match *self {
            SizeDist::Uniform { lo, hi } => (lo + hi) as f64 / 2.0,
            SizeDist::Exponential { mean } => mean,
            SizeDist::Fixed { bytes } => bytes as f64,
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u64 {
        match *self {
            SizeDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            SizeDist::Exponential { mean } => {
                (Exp::new(1.0 / mean).unwrap().sample(rng).ceil() as u64).max(1)
            }
            SizeDist::Fixed { bytes } => bytes,
        }
    }
}

impl std::fmt::Display for SizeDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            SizeDist::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            SizeDist::Exponential { mean } => write!(f, "exp:{mean}"),
            SizeDist::Fixed { bytes } => write!(f, "fixed:{bytes}"),
        }
    }
}

impl FromStr for SizeDist {
    type Err = String;

    /// `uniform:LO:HI`, `exp:MEAN` or `fixed:BYTES`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let int = |t: &str| t.parse::<u64>().map_err(|_| format!("bad size `{t}`"));
        let d = match parts.as_slice() {
            ["uniform", lo, hi] => SizeDist::Uniform {
                lo: int(lo)?,
                hi: int(hi)?,
            },
            ["exp", m] => SizeDist::Exponential {
                mean: m.parse().map_err(|_| format!("bad mean `{m}`"))?,
            },
            ["fixed", b] => SizeDist::Fixed { bytes: int(b)? },
            _ => {
                return Err(format!(
                    "unknown size distribution `{s}` (uniform:LO:HI, exp:MEAN, fixed:BYTES)"
                ))
            }
        };
        match d {
            SizeDist::Uniform { lo, hi } if lo == 0 || lo > hi => {
                Err(format!("bad uniform range {lo}..{hi}"))
            }
            SizeDist::Exponential { mean } if !(mean > 0.0) => {
                Err("exponential mean must be positive".into())
            }
            SizeDist::Fixed { bytes: 0 } => Err("fixed size must be positive".into()),
            d => Ok(d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub pattern: Pattern,
    pub mix: Mix,
    /// Offered mice load as a fraction of one link's capacity.
    pub mice_load: f64,
    pub mice_size: SizeDist,
    pub elephants_per_sender: u32,
    /// `None`: elephants run for the whole horizon.
    pub elephant_size: Option<u64>,
    /// Head-of-line: flows from each Leaf2 host to its Leaf3 peer.
    pub victim_flows_per_host: u32,
    /// Head-of-line: keep the many-to-one load (off gives the baseline).
    pub incast: bool,
    pub query_period: SimTime,
    pub response_bytes: u64,
    pub responders: u32,
    pub queriers_per_rank: u32,
    pub background_elephants: u32,
    pub seed: u64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        TrafficSpec {
            pattern: Pattern::ManyToOne,
            mix: Mix::Mixed,
            mice_load: 0.2,
            mice_size: SizeDist::Uniform {
                lo: 1024,
                hi: 10 * 1024,
            },
            elephants_per_sender: 1,
            elephant_size: None,
            victim_flows_per_host: 1,
            incast: true,
            query_period: SimTime::from_us(100),
            response_bytes: RESPONSE_BYTES,
            responders: 7,
            queriers_per_rank: 2,
            background_elephants: 2,
            seed: 1,
        }
    }
}

/// Size-based classification with declaration override. For flows of
/// unknown size this is the class of their first byte.
pub fn classify(size: Option<u64>, declared: Option<FlowClass>, boundary: u64) -> FlowClass {
    if let Some(c) = declared {
        return c;
    }
    match size {
        Some(s) if s >= boundary => FlowClass::Elephant,
        _ => FlowClass::Mice,
    }
}

/// Class of the byte at `offset`: undeclared flows of unknown size are
/// promoted to elephant once they have sent `boundary` bytes.
pub fn class_at(flow: &Flow, boundary: u64, offset: u64) -> FlowClass {
    if flow.declared.is_none() && flow.size.is_none() && offset >= boundary {
        FlowClass::Elephant
    } else {
        classify(flow.size, flow.declared, boundary)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolationMode {
    Mixed,
    IsolatedStrict,
    IsolatedEts,
}

impl IsolationMode {
    pub fn is_isolated(self) -> bool {
        self != IsolationMode::Mixed
    }
}

pub fn assign_priority(class: FlowClass, mode: IsolationMode) -> u8 {
    match (mode, class) {
        (IsolationMode::Mixed, _) => LOW_PRIORITY,
        (_, FlowClass::Mice) => HIGH_PRIORITY,
        (_, FlowClass::Elephant) => LOW_PRIORITY,
    }
}

/// ETS shares per priority for a given mice share.
pub fn ets_weights(mice_share: f64) -> [f64; 8] {
    let mut w = [0.0; 8];
    w[HIGH_PRIORITY as usize] = mice_share;
    w[LOW_PRIORITY as usize] = 1.0 - mice_share;
    w
}

/// Host that receives the many-to-one load.
pub fn receiver(topo: &Topology) -> HostId {
    (topo.host_count() - 1) as HostId
}

struct Builder {
    flows: Vec<Flow>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder {
            flows: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(
        &mut self,
        src: HostId,
        dst: HostId,
        size: Option<u64>,
        declared: Option<FlowClass>,
        arrival: SimTime,
    ) {
        let id = self.flows.len() as FlowId;
        self.flows.push(Flow {
            id,
            src,
            dst,
            size,
            declared,
            arrival,
        });
    }

    fn elephant(&mut self, src: HostId, dst: HostId, size: Option<u64>) {
        // Small start offsets keep persistent senders out of lockstep.
        let t = SimTime::from_ns(self.rng.random_range(0..10_000));
        self.push(src, dst, size, Some(FlowClass::Elephant), t);
    }

    /// Poisson mice from random `senders` to `dst` at `load` of `capacity`.
    fn poisson_mice(
        &mut self,
        spec: &TrafficSpec,
        senders: &[HostId],
        dst: HostId,
        capacity_bps: u64,
        horizon: SimTime,
    ) {
        if spec.mice_load <= 0.0 || senders.is_empty() {
            return;
        }
        let lambda = spec.mice_load * capacity_bps as f64 / (8.0 * spec.mice_size.mean());
        let gap = Exp::new(lambda).unwrap();
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut self.rng);
            let at = SimTime::from_ns((t * 1e9) as u64);
            if at >= horizon {
                break;
            }
            let src = senders[self.rng.random_range(0..senders.len())];
            let size = spec.mice_size.draw(&mut self.rng);
            self.push(src, dst, Some(size), None, at);
        }
    }

    fn finish(mut self) -> Vec<Flow> {
        self.flows.sort_by_key(|f| (f.arrival, f.id));
        for (i, f) in self.flows.iter_mut().enumerate() {
            f.id = i as FlowId;
        }
        self.flows
    }
}

fn capacity(topo: &Topology) -> u64 {
    topo.links.first().map(|l| l.capacity_bps).unwrap_or(0)
}

/// All other hosts send to the last host: persistent elephants and/or
/// Poisson mice.
pub fn gen_many_to_one(spec: &TrafficSpec, topo: &Topology, horizon: SimTime) -> Vec<Flow> {
    let rx = receiver(topo);
    let senders: Vec<HostId> = (0..topo.host_count() as HostId)
        .filter(|&h| h != rx)
        .collect();
    let mut b = Builder::new(spec.seed);
    if spec.mix.has_elephants() {
        for &s in &senders {
            for _ in 0..spec.elephants_per_sender {
                b.elephant(s, rx, spec.elephant_size);
            }
        }
    }
    if spec.mix.has_mice() {
        b.poisson_mice(spec, &senders, rx, capacity(topo), horizon);
    }
    b.finish()
}

/// Many-to-one toward a Leaf4 host plus victim flows from Leaf2 to Leaf3
/// that share Leaf2's uplinks but never enter Leaf4.
pub fn gen_head_of_line(
    spec: &TrafficSpec,
    topo: &Topology,
    horizon: SimTime,
) -> Result<Vec<Flow>, TopologyError> {
    if topo.leaf_count < 4 {
        return Err(TopologyError::Unsupported {
            pattern: "head_of_line",
            needed: "at least 4 leaves",
        });
    }
    let rx = receiver(topo);
    let mut b = Builder::new(spec.seed);
    if spec.incast {
        let senders: Vec<HostId> = (0..topo.host_count() as HostId)
            .filter(|&h| h != rx)
            .collect();
        if spec.mix.has_elephants() {
            for &s in &senders {
                for _ in 0..spec.elephants_per_sender {
                    b.elephant(s, rx, spec.elephant_size);
                }
            }
        }
        if spec.mix.has_mice() {
            b.poisson_mice(spec, &senders, rx, capacity(topo), horizon);
        }
    }
    let (l2, l3) = (topo.hosts_under(1), topo.hosts_under(2));
    for _ in 0..spec.victim_flows_per_host {
        for (src, dst) in l2.clone().zip(l3.clone()) {
            b.elephant(src, dst, spec.elephant_size);
        }
    }
    Ok(b.finish())
}

/// Query/response benchmark. Intra-rank: host 0 of leaf 0 queries
/// `responders` hosts of its own rack every period. Inter-rank: every rack
/// has `queriers_per_rank` queriers, each asking `responders` hosts in
/// distinct other racks every period and receiving one elephant from another
/// rack. Intra-rank background elephants come into the querier from random
/// hosts; inter-rank ones run between random pairs.
pub fn gen_query_response(
    spec: &TrafficSpec,
    topo: &Topology,
    horizon: SimTime,
) -> Result<Vec<Flow>, TopologyError> {
    let mut b = Builder::new(spec.seed);
    let period = spec.query_period;
    if period == SimTime::ZERO {
        return Err(TopologyError::Unsupported {
            pattern: "query_response",
            needed: "a positive query period",
        });
    }
    match spec.pattern {
        Pattern::IntraRank => {
            if topo.hosts_per_leaf < spec.responders as usize + 1 {
                return Err(TopologyError::Unsupported {
                    pattern: "intra_rank",
                    needed: "responders + 1 hosts under one leaf",
                });
            }
            let querier = 0;
            let mut t = SimTime::ZERO;
            while t < horizon {
                for r in 1..=spec.responders {
                    b.push(r, querier, Some(spec.response_bytes), None, t);
                }
                t += period;
            }
            // cross-rack sources when there are other racks, else rack-local ones
            let rack = topo.hosts_under(0);
            let sources: Vec<u32> = if topo.leaf_count > 1 {
                (rack.end..topo.host_count() as u32).collect()
            } else {
                (rack.start + 1..rack.end).collect()
            };
            for _ in 0..spec.background_elephants {
                let src = sources[b.rng.random_range(0..sources.len())];
                b.elephant(src, querier, spec.elephant_size);
            }
        }
        Pattern::InterRank => {
            if topo.leaf_count < spec.responders as usize + 1 {
                return Err(TopologyError::Unsupported {
                    pattern: "inter_rank",
                    needed: "responders + 1 leaves",
                });
            }
            if topo.hosts_per_leaf < spec.queriers_per_rank as usize {
                return Err(TopologyError::Unsupported {
                    pattern: "inter_rank",
                    needed: "queriers_per_rank hosts per leaf",
                });
            }
            let mut queriers = Vec::new();
            for leaf in 0..topo.leaf_count {
                let hosts = topo.hosts_under(leaf);
                for q in sample(&mut b.rng, hosts.len(), spec.queriers_per_rank as usize) {
                    let offset = SimTime::from_ns(b.rng.random_range(0..period.as_ns().max(1)));
                    queriers.push((hosts.start + q as u32, leaf, offset));
                }
            }
            for &(querier, leaf, offset) in &queriers {
                let mut t = offset;
                while t < horizon {
                    let mut others: Vec<usize> =
                        (0..topo.leaf_count).filter(|&l| l != leaf).collect();
                    for i in 0..spec.responders as usize {
                        let j = b.rng.random_range(i..others.len());
                        others.swap(i, j);
                        let hosts = topo.hosts_under(others[i]);
                        let r = hosts.start + b.rng.random_range(0..hosts.len() as u32);
                        b.push(r, querier, Some(spec.response_bytes), None, t);
                    }
                    t += period;
                }
            }
            for &(querier, leaf, _) in &queriers {
                let mut other = b.rng.random_range(0..topo.leaf_count - 1);
                if other >= leaf {
                    other += 1;
                }
                let h = topo.hosts_under(other);
                let src = h.start + b.rng.random_range(0..h.len() as u32);
                b.elephant(src, querier, spec.elephant_size);
            }
            for _ in 0..spec.background_elephants {
                let leaves = sample(&mut b.rng, topo.leaf_count, 2);
                let pick = |rng: &mut ChaCha8Rng, leaf: usize| {
                    let h = topo.hosts_under(leaf);
                    h.start + rng.random_range(0..h.len() as u32)
                };
                let src = pick(&mut b.rng, leaves.index(0));
                let dst = pick(&mut b.rng, leaves.index(1));
                b.elephant(src, dst, spec.elephant_size);
            }
        }
        _ => unreachable!("not a query/response pattern"),
    }
    Ok(b.finish())
}

/// Poisson mice and persistent elephants between uniformly random pairs.
pub fn gen_poisson_background(spec: &TrafficSpec, topo: &Topology, horizon: SimTime) -> Vec<Flow> {
    let mut b = Builder::new(spec.seed);
    let n = topo.host_count();
    if n < 2 {
        return Vec::new();
    }
    if spec.mice_load > 0.0 {
        let lambda = spec.mice_load * capacity(topo) as f64 / (8.0 * spec.mice_size.mean());
        let gap = Exp::new(lambda).unwrap();
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut b.rng);
            let at = SimTime::from_ns((t * 1e9) as u64);
            if at >= horizon {
                break;
            }
            let pair = sample(&mut b.rng, n, 2);
            let size = spec.mice_size.draw(&mut b.rng);
            b.push(
                pair.index(0) as u32,
                pair.index(1) as u32,
                Some(size),
                None,
                at,
            );
        }
    }
    for _ in 0..spec.background_elephants {
        let pair = sample(&mut b.rng, n, 2);
        b.elephant(
            pair.index(0) as u32,
            pair.index(1) as u32,
            spec.elephant_size,
        );
    }
    b.finish()
}

pub fn generate(
    spec: &TrafficSpec,
    topo: &Topology,
    horizon: SimTime,
) -> Result<Vec<Flow>, TopologyError> {
    match spec.pattern {
        Pattern::ManyToOne => Ok(gen_many_to_one(spec, topo, horizon)),
        Pattern::HeadOfLine => gen_head_of_line(spec, topo, horizon),
        Pattern::IntraRank | Pattern::InterRank => gen_query_response(spec, topo, horizon),
        Pattern::PoissonBackground => Ok(gen_poisson_background(spec, topo, horizon)),
    }
}

pub const SCHEDULE_HEADER: &str = "flow_id,src,dst,size_bytes,arrival_ns,class";

/// Text table of a schedule. Persistent flows have size `-`. The class
/// column is the flow's first-byte class under `boundary`.
pub fn export_schedule(flows: &[Flow], boundary: u64) -> String {
    let mut out = String::from(SCHEDULE_HEADER);
    out.push('\n');
    for f in flows {
        let size = f.size.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let class = classify(f.size, f.declared, boundary).name();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            f.id,
            f.src,
            f.dst,
            size,
            f.arrival.as_ns(),
            class
        );
    }
    out
}

/// Parses [`export_schedule`] output. A class that differs from what the
/// size classifier would say is kept as a declaration; an elephant of
/// unknown size is declared (otherwise it would start as mice).
pub fn import_schedule(text: &str, boundary: u64) -> Result<Vec<Flow>, ConfigError> {
    let mut flows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == SCHEDULE_HEADER) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(ConfigError::at(
                i + 1,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let num = |c: &str| {
            c.parse::<u64>()
                .map_err(|_| ConfigError::at(i + 1, format!("not a number: `{c}`")))
        };
        let size = if cols[3] == "-" {
            None
        } else {
            Some(num(cols[3])?)
        };
        if size == Some(0) {
            return Err(ConfigError::at(i + 1, "flow size must be positive"));
        }
        let class = match cols[5] {
            "mice" => FlowClass::Mice,
            "elephant" => FlowClass::Elephant,
            c => return Err(ConfigError::at(i + 1, format!("unknown class `{c}`"))),
        };
        let declared = (class != classify(size, None, boundary)).then_some(class);
        flows.push(Flow {
            id: num(cols[0])? as FlowId,
            src: num(cols[1])? as HostId,
            dst: num(cols[2])? as HostId,
            size,
            declared,
            arrival: SimTime::from_ns(num(cols[4])?),
        });
    }
    Ok(flows)
}
