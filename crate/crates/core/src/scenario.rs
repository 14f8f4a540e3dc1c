//! Scenario files.
//!
//! INI-style: `[section]` headers followed by `key = value` lines, or fully
//! dotted keys (`flow_control.pfc.k1 = 25057`) anywhere. `#` and `;` start
//! comment lines. Keys are case-insensitive; unknown keys are errors. Every
//! key has a default, so an empty file is a valid scenario.
//!
//! Values accept units: sizes `25057`, `24.47KB`, `1MB`; times `2us`,
//! `50ms`, `1s`; rates `10Gbps`, `5Mbps`; booleans `on/off/true/false`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::ConfigError;
use crate::fabric::SchedulerKind;
use crate::pfc::{PfcConfig, DEFAULT_K1, DEFAULT_PARTITION, KB};
use crate::qcn::{default_quant_unit, CpConfig, RpConfig};
use crate::time::{SimTime, PS_PER_MS, PS_PER_NS, PS_PER_S, PS_PER_US};
use crate::traffic::{
    ets_weights, IsolationMode, Mix, Pattern, SizeDist, TrafficSpec, DEFAULT_BOUNDARY,
};
use crate::transport::{TcpConfig, Transport};

#[derive(Clone, Debug, PartialEq)]
pub struct TopologyConfig {
    pub leaves: usize,
    pub spines: usize,
    pub hosts_per_leaf: usize,
    pub capacity_bps: u64,
    pub prop_delay: SimTime,
    pub mtu: u32,
    /// Ingress buffer per switch port, split among the active priorities.
    pub port_buffer: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowControlConfig {
    pub pfc: bool,
    pub pfc_k1: u64,
    pub pfc_k2: u64,
    pub pfc_headroom: u64,
    pub qcn: bool,
    /// `None`: 20% of the partition the congestion point watches.
    pub qcn_q_eq: Option<u64>,
    pub qcn_w: f64,
    pub qcn_gd: f64,
    pub qcn_sample_bytes: u64,
    pub qcn_jitter: f64,
    pub qcn_fb_max: u8,
    /// `None`: `(1 + 2w) q_eq / fb_max`.
    pub qcn_quant_unit: Option<f64>,
    pub qcn_min_rate_bps: u64,
    pub qcn_byte_counter: u64,
    pub qcn_timer: SimTime,
    pub qcn_r_ai_bps: u64,
    /// Window control for elephants; `Rate` means none.
    pub transport: Transport,
    pub tcp_min_rto: SimTime,
    /// RTO floor for flows without window control.
    pub rate_min_rto: SimTime,
    pub tcp_init_cwnd: u32,
    pub dctcp_g: f64,
    pub dctcp_ecn_threshold: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsolationConfig {
    pub mode: IsolationMode,
    pub boundary: u64,
    pub mice_buffer: u64,
    pub ets_mice: Option<f64>,
    pub ets_elephant: Option<f64>,
    /// PFC on the elephant class under isolation.
    pub elephant_pfc: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueueScope {
    Bottleneck,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub name: String,
    pub horizon: SimTime,
    pub warmup: SimTime,
    pub seed: u64,
    pub out: String,
    pub throughput_bin: SimTime,
    pub queue_sample: SimTime,
    pub queue_switches: QueueScope,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficConfig {
    pub spec: TrafficSpec,
    /// Traffic seed override; otherwise derived from `sim.seed`.
    pub seed: Option<u64>,
    /// Replay a flow table instead of generating one.
    pub schedule: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    pub traffic: TrafficConfig,
    pub flow_control: FlowControlConfig,
    pub isolation: IsolationConfig,
    pub sim: SimConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            topology: TopologyConfig {
                leaves: 4,
                spines: 2,
                hosts_per_leaf: 4,
                capacity_bps: 10_000_000_000,
                prop_delay: SimTime::from_us(2),
                mtu: 1500,
                port_buffer: 128 * KB,
            },
            traffic: TrafficConfig {
                spec: TrafficSpec::default(),
                seed: None,
                schedule: None,
            },
            flow_control: FlowControlConfig {
                pfc: true,
                pfc_k1: DEFAULT_K1,
                pfc_k2: DEFAULT_K1 / 2,
                pfc_headroom: DEFAULT_PARTITION - DEFAULT_K1,
                qcn: true,
                qcn_q_eq: None,
                qcn_w: 2.0,
                qcn_gd: 1.0 / 128.0,
                qcn_sample_bytes: 150 * KB,
                qcn_jitter: 0.3,
                qcn_fb_max: 63,
                qcn_quant_unit: None,
                qcn_min_rate_bps: 1_000_000,
                qcn_byte_counter: 150 * KB,
                qcn_timer: SimTime::from_ms(15),
                qcn_r_ai_bps: 5_000_000,
                transport: Transport::Rate,
                tcp_min_rto: SimTime::from_us(200),
                rate_min_rto: SimTime::from_ms(1),
                tcp_init_cwnd: 10,
                dctcp_g: 1.0 / 16.0,
                dctcp_ecn_threshold: 30 * KB,
            },
            isolation: IsolationConfig {
                mode: IsolationMode::Mixed,
                boundary: DEFAULT_BOUNDARY,
                mice_buffer: DEFAULT_PARTITION,
                ets_mice: None,
                ets_elephant: None,
                elephant_pfc: false,
            },
            sim: SimConfig {
                name: "scenario".into(),
                horizon: SimTime::from_ms(1000),
                warmup: SimTime::from_ms(50),
                seed: 1,
                out: "out".into(),
                throughput_bin: SimTime::from_us(100),
                queue_sample: SimTime::from_us(10),
                queue_switches: QueueScope::Bottleneck,
            },
        }
    }
}

/// Per-priority switch configuration derived from a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPlan {
    pub priority: u8,
    pub partition: u64,
    pub pfc: Option<PfcConfig>,
    pub qcn: Option<CpConfig>,
    pub ecn_threshold: Option<u64>,
}

impl ScenarioConfig {
    pub fn traffic_seed(&self) -> u64 {
        self.traffic
            .seed
            .unwrap_or(self.sim.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED)
    }

    pub fn traffic_spec(&self) -> TrafficSpec {
        TrafficSpec {
            seed: self.traffic_seed(),
            ..self.traffic.spec.clone()
        }
    }

    /// Mice share of ETS bandwidth after filling in whichever side is unset.
    pub fn ets_mice_share(&self) -> f64 {
        match (self.isolation.ets_mice, self.isolation.ets_elephant) {
            (Some(m), _) => m,
            (None, Some(e)) => 1.0 - e,
            (None, None) => 0.9,
        }
    }

    pub fn scheduler(&self) -> SchedulerKind {
        match self.isolation.mode {
            IsolationMode::IsolatedEts => SchedulerKind::Ets(ets_weights(self.ets_mice_share())),
            _ => SchedulerKind::Strict,
        }
    }

    pub fn pfc_config(&self) -> PfcConfig {
        let f = &self.flow_control;
        PfcConfig {
            k1: f.pfc_k1,
            k2: f.pfc_k2,
            headroom: f.pfc_headroom,
        }
    }

    pub fn tcp_config(&self) -> TcpConfig {
        TcpConfig {
            mss: self.topology.mtu,
            init_cwnd_segments: self.flow_control.tcp_init_cwnd,
            min_rto: self.flow_control.tcp_min_rto,
            dctcp_g: self.flow_control.dctcp_g,
            ..TcpConfig::default()
        }
    }

    /// Transport settings for flows that run without a window.
    pub fn rate_config(&self) -> TcpConfig {
        TcpConfig {
            min_rto: self.flow_control.rate_min_rto,
            ..self.tcp_config()
        }
    }

    pub fn rp_config(&self) -> RpConfig {
        let f = &self.flow_control;
        RpConfig {
            gd: f.qcn_gd,
            min_rate_bps: f.qcn_min_rate_bps as f64,
            byte_counter: f.qcn_byte_counter,
            timer: f.qcn_timer,
            r_ai_bps: f.qcn_r_ai_bps as f64,
            ..RpConfig::for_capacity(self.topology.capacity_bps as f64)
        }
    }

    fn cp_config(&self, partition: u64) -> CpConfig {
        let f = &self.flow_control;
        let q_eq = f.qcn_q_eq.unwrap_or(partition / 5);
        CpConfig {
            q_eq,
            w: f.qcn_w,
            sample_bytes: f.qcn_sample_bytes,
            jitter: f.qcn_jitter,
            fb_max: f.qcn_fb_max,
            quant_unit: f
                .qcn_quant_unit
                .unwrap_or_else(|| default_quant_unit(q_eq, f.qcn_w, f.qcn_fb_max)),
        }
    }

    /// Classes carried by the switches and the mechanisms on each.
    pub fn class_plans(&self) -> Vec<ClassPlan> {
        let f = &self.flow_control;
        let ecn = (f.transport == Transport::Dctcp).then_some(f.dctcp_ecn_threshold);
        let buffer = self.topology.port_buffer;
        if self.isolation.mode.is_isolated() {
            let mice = self.isolation.mice_buffer;
            let elephant = buffer.saturating_sub(mice);
            vec![
                ClassPlan {
                    priority: crate::traffic::LOW_PRIORITY,
                    partition: elephant,
                    pfc: self.isolation.elephant_pfc.then(|| self.pfc_config()),
                    qcn: f.qcn.then(|| self.cp_config(elephant)),
                    ecn_threshold: ecn,
                },
                ClassPlan {
                    priority: crate::traffic::HIGH_PRIORITY,
                    partition: mice,
                    pfc: f.pfc.then(|| self.pfc_config()),
                    qcn: None,
                    ecn_threshold: None,
                },
            ]
        } else {
            vec![ClassPlan {
                priority: crate::traffic::LOW_PRIORITY,
                partition: buffer,
                pfc: f.pfc.then(|| self.pfc_config()),
                qcn: f.qcn.then(|| self.cp_config(buffer)),
                ecn_threshold: ecn,
            }]
        }
    }

    /// Whether frames of mice flows travel in a PFC-protected class.
    pub fn mice_pfc(&self) -> bool {
        let plans = self.class_plans();
        let mice = if self.isolation.mode.is_isolated() {
            crate::traffic::HIGH_PRIORITY
        } else {
            crate::traffic::LOW_PRIORITY
        };
        plans.iter().any(|c| c.priority == mice && c.pfc.is_some())
    }

    /// QCN reaction points are attached to flows of `class` when the class
    /// they travel in has a congestion point.
    pub fn qcn_on(&self, priority: u8) -> bool {
        self.class_plans()
            .iter()
            .any(|c| c.priority == priority && c.qcn.is_some())
    }

    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let t = &self.topology;
        if t.leaves == 0 || t.spines == 0 || t.hosts_per_leaf == 0 {
            return Err((
                "topology.leaves",
                "leaf, spine and host counts must be at least 1".into(),
            ));
        }
        if t.capacity_bps == 0 {
            return Err(("topology.capacity", "capacity must be positive".into()));
        }
        if !(64..=9216).contains(&t.mtu) {
            return Err(("topology.mtu", format!("MTU {} outside 64..=9216", t.mtu)));
        }
        let s = &self.traffic.spec;
        if !(0.0..=1.0).contains(&s.mice_load) {
            return Err((
                "traffic.mice_load",
                format!("mice load {} outside [0, 1]", s.mice_load),
            ));
        }
        if s.elephant_size == Some(0) {
            return Err((
                "traffic.elephant_size",
                "elephant size must be positive".into(),
            ));
        }
        let iso = &self.isolation;
        if !(10 * KB..=100 * KB).contains(&iso.boundary) {
            return Err((
                "isolation.boundary",
                format!("boundary {} outside [10KB, 100KB]", iso.boundary),
            ));
        }
        for (key, w) in [
            ("isolation.ets.mice", iso.ets_mice),
            ("isolation.ets.elephant", iso.ets_elephant),
        ] {
            if let Some(w) = w {
                if !(0.0..=1.0).contains(&w) {
                    return Err((key, format!("ETS weight {w} outside [0, 1]")));
                }
            }
        }
        if let (Some(m), Some(e)) = (iso.ets_mice, iso.ets_elephant) {
            if (m + e - 1.0).abs() > 1e-9 {
                return Err((
                    "isolation.ets.elephant",
                    format!("ETS weights must sum to 1 (got {m} + {e})"),
                ));
            }
        }
        if iso.mode.is_isolated() && iso.mice_buffer + t.mtu as u64 > t.port_buffer {
            return Err((
                "isolation.mice_buffer",
                "mice buffer leaves no room for the elephant class".into(),
            ));
        }
        let f = &self.flow_control;
        if !(f.qcn_w > 0.0) {
            return Err(("flow_control.qcn.w", "w must be positive".into()));
        }
        if !(f.qcn_gd > 0.0) || f.qcn_gd * f.qcn_fb_max as f64 >= 1.0 {
            return Err((
                "flow_control.qcn.gd",
                "need gd > 0 and gd * fb_max < 1".into(),
            ));
        }
        if f.qcn_fb_max == 0 || f.qcn_fb_max > 63 {
            return Err(("flow_control.qcn.fb_max", "fb_max must be in 1..=63".into()));
        }
        if !(0.0..1.0).contains(&f.qcn_jitter) {
            return Err(("flow_control.qcn.jitter", "jitter must be in [0, 1)".into()));
        }
        if f.qcn_sample_bytes == 0 || f.qcn_byte_counter == 0 {
            return Err((
                "flow_control.qcn.sample_bytes",
                "byte intervals must be positive".into(),
            ));
        }
        if f.qcn_min_rate_bps == 0 || f.qcn_min_rate_bps > t.capacity_bps {
            return Err((
                "flow_control.qcn.min_rate",
                "min rate must be in (0, capacity]".into(),
            ));
        }
        if !(f.dctcp_g > 0.0 && f.dctcp_g <= 1.0) {
            return Err(("flow_control.dctcp.g", "g must be in (0, 1]".into()));
        }
        if f.tcp_init_cwnd == 0 {
            return Err((
                "flow_control.tcp.init_cwnd",
                "initial window must be at least 1 segment".into(),
            ));
        }
        for plan in self.class_plans() {
            if plan.partition < t.mtu as u64 {
                return Err((
                    "topology.port_buffer",
                    format!("priority {} partition smaller than one MTU", plan.priority),
                ));
            }
            if let Some(pfc) = plan.pfc {
                pfc.validate(plan.partition, t.prop_delay, t.capacity_bps, t.mtu)
                    .map_err(|m| ("flow_control.pfc.headroom", m))?;
            }
            if let Some(cp) = plan.qcn {
                if cp.q_eq == 0 || cp.q_eq >= plan.partition {
                    return Err((
                        "flow_control.qcn.q_eq",
                        format!(
                            "q_eq {} must be in (0, partition {})",
                            cp.q_eq, plan.partition
                        ),
                    ));
                }
                if !(cp.quant_unit > 0.0) {
                    return Err((
                        "flow_control.qcn.quant_unit",
                        "quantization unit must be positive".into(),
                    ));
                }
            }
        }
        let sim = &self.sim;
        if sim.horizon == SimTime::ZERO || sim.warmup >= sim.horizon {
            return Err(("sim.warmup", "need 0 <= warmup < horizon".into()));
        }
        if sim.throughput_bin == SimTime::ZERO || sim.queue_sample == SimTime::ZERO {
            return Err((
                "sim.queue_sample",
                "sampling intervals must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let key = key.trim().to_ascii_lowercase();
        let t = &mut self.topology;
        let s = &mut self.traffic.spec;
        let f = &mut self.flow_control;
        let iso = &mut self.isolation;
        let sim = &mut self.sim;
        match key.as_str() {
            "topology.leaves" => t.leaves = count(v)?,
            "topology.spines" => t.spines = count(v)?,
            "topology.hosts_per_leaf" => t.hosts_per_leaf = count(v)?,
            "topology.capacity" => t.capacity_bps = rate(v)?,
            "topology.prop_delay" => t.prop_delay = time(v)?,
            "topology.mtu" => t.mtu = bytes(v)? as u32,
            "topology.port_buffer" => t.port_buffer = bytes(v)?,

            "traffic.pattern" => {
                s.pattern = match v {
                    "many_to_one" => Pattern::ManyToOne,
                    "head_of_line" => Pattern::HeadOfLine,
                    "intra_rank" => Pattern::IntraRank,
                    "inter_rank" => Pattern::InterRank,
                    "poisson_background" => Pattern::PoissonBackground,
                    _ => return Err(format!("unknown pattern `{v}`")),
                }
            }
            "traffic.mix" => {
                s.mix = match v {
                    "mice" => Mix::Mice,
                    "elephant" => Mix::Elephant,
                    "mixed" => Mix::Mixed,
                    _ => return Err(format!("unknown mix `{v}` (mice, elephant, mixed)")),
                }
            }
            "traffic.mice_load" => s.mice_load = float(v)?,
            "traffic.mice_size" => s.mice_size = v.parse::<SizeDist>()?,
            "traffic.elephants_per_sender" => s.elephants_per_sender = count(v)? as u32,
            "traffic.elephant_size" => {
                s.elephant_size = if v == "persistent" {
                    None
                } else {
                    Some(bytes(v)?)
                }
            }
            "traffic.victim_flows_per_host" => s.victim_flows_per_host = count(v)? as u32,
            "traffic.incast" => s.incast = boolean(v)?,
            "traffic.query_period" => s.query_period = time(v)?,
            "traffic.response_bytes" => s.response_bytes = bytes(v)?,
            "traffic.responders" => s.responders = count(v)? as u32,
            "traffic.queriers_per_rank" => s.queriers_per_rank = count(v)? as u32,
            "traffic.background_elephants" => s.background_elephants = count(v)? as u32,
            "traffic.seed" => self.traffic.seed = if v == "auto" { None } else { Some(int(v)?) },
            "traffic.schedule" => {
                self.traffic.schedule = (!v.is_empty() && v != "none").then(|| v.to_string())
            }

            "flow_control.pfc" => f.pfc = boolean(v)?,
            "flow_control.pfc.k1" => f.pfc_k1 = bytes(v)?,
            "flow_control.pfc.k2" => f.pfc_k2 = bytes(v)?,
            "flow_control.pfc.headroom" => f.pfc_headroom = bytes(v)?,
            "flow_control.qcn" => f.qcn = boolean(v)?,
            "flow_control.qcn.q_eq" => {
                f.qcn_q_eq = if v == "auto" { None } else { Some(bytes(v)?) }
            }
            "flow_control.qcn.w" => f.qcn_w = float(v)?,
            "flow_control.qcn.gd" => f.qcn_gd = fraction(v)?,
            "flow_control.qcn.sample_bytes" => f.qcn_sample_bytes = bytes(v)?,
            "flow_control.qcn.jitter" => f.qcn_jitter = float(v)?,
            "flow_control.qcn.fb_max" => f.qcn_fb_max = int(v)?.min(255) as u8,
            "flow_control.qcn.quant_unit" => {
                f.qcn_quant_unit = if v == "auto" { None } else { Some(float(v)?) }
            }
            "flow_control.qcn.min_rate" => f.qcn_min_rate_bps = rate(v)?,
            "flow_control.qcn.byte_counter" => f.qcn_byte_counter = bytes(v)?,
            "flow_control.qcn.timer" => f.qcn_timer = time(v)?,
            "flow_control.qcn.r_ai" => f.qcn_r_ai_bps = rate(v)?,
            "flow_control.transport" => {
                f.transport = match v {
                    "none" => Transport::Rate,
                    "tcp" => Transport::Tcp,
                    "dctcp" => Transport::Dctcp,
                    _ => return Err(format!("unknown transport `{v}` (none, tcp, dctcp)")),
                }
            }
            "flow_control.tcp.min_rto" => f.tcp_min_rto = time(v)?,
            "flow_control.rate.min_rto" => f.rate_min_rto = time(v)?,
            "flow_control.tcp.init_cwnd" => f.tcp_init_cwnd = count(v)? as u32,
            "flow_control.dctcp.g" => f.dctcp_g = fraction(v)?,
            "flow_control.dctcp.ecn_threshold" => f.dctcp_ecn_threshold = bytes(v)?,

            "isolation.mode" => {
                iso.mode = match v {
                    "mixed" => IsolationMode::Mixed,
                    "isolated_strict" => IsolationMode::IsolatedStrict,
                    "isolated_ets" => IsolationMode::IsolatedEts,
                    _ => {
                        return Err(format!(
                            "unknown isolation mode `{v}` (mixed, isolated_strict, isolated_ets)"
                        ))
                    }
                }
            }
            "isolation.boundary" => iso.boundary = bytes(v)?,
            "isolation.mice_buffer" => iso.mice_buffer = bytes(v)?,
            "isolation.ets.mice" => {
                iso.ets_mice = if v == "auto" {
                    None
                } else {
                    Some(fraction(v)?)
                }
            }
            "isolation.ets.elephant" => {
                iso.ets_elephant = if v == "auto" {
                    None
                } else {
                    Some(fraction(v)?)
                }
            }
            "isolation.elephant_pfc" => iso.elephant_pfc = boolean(v)?,

            "sim.name" => sim.name = v.to_string(),
            "sim.horizon" => sim.horizon = time(v)?,
            "sim.warmup" => sim.warmup = time(v)?,
            "sim.seed" => sim.seed = int(v)?,
            "sim.out" => sim.out = v.to_string(),
            "sim.throughput_bin" => sim.throughput_bin = time(v)?,
            "sim.queue_sample" => sim.queue_sample = time(v)?,
            "sim.queue_switches" => {
                sim.queue_switches = match v {
                    "bottleneck" => QueueScope::Bottleneck,
                    "all" => QueueScope::All,
                    _ => return Err(format!("unknown queue scope `{v}` (bottleneck, all)")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Every key with its current value, grouped by section, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.topology;
        let s = &self.traffic.spec;
        let f = &self.flow_control;
        let iso = &self.isolation;
        let sim = &self.sim;
        let auto = |o: Option<String>| o.unwrap_or_else(|| "auto".into());
        vec![
            ("topology.leaves", t.leaves.to_string()),
            ("topology.spines", t.spines.to_string()),
            ("topology.hosts_per_leaf", t.hosts_per_leaf.to_string()),
            ("topology.capacity", fmt_rate(t.capacity_bps)),
            ("topology.prop_delay", fmt_time(t.prop_delay)),
            ("topology.mtu", t.mtu.to_string()),
            ("topology.port_buffer", t.port_buffer.to_string()),
            ("traffic.pattern", pattern_name(s.pattern).into()),
            ("traffic.mix", mix_name(s.mix).into()),
            ("traffic.mice_load", s.mice_load.to_string()),
            ("traffic.mice_size", s.mice_size.to_string()),
            (
                "traffic.elephants_per_sender",
                s.elephants_per_sender.to_string(),
            ),
            (
                "traffic.elephant_size",
                s.elephant_size
                    .map(|b| b.to_string())
                    .unwrap_or_else(|| "persistent".into()),
            ),
            (
                "traffic.victim_flows_per_host",
                s.victim_flows_per_host.to_string(),
            ),
            ("traffic.incast", on_off(s.incast)),
            ("traffic.query_period", fmt_time(s.query_period)),
            ("traffic.response_bytes", s.response_bytes.to_string()),
            ("traffic.responders", s.responders.to_string()),
            ("traffic.queriers_per_rank", s.queriers_per_rank.to_string()),
            (
                "traffic.background_elephants",
                s.background_elephants.to_string(),
            ),
            (
                "traffic.seed",
                auto(self.traffic.seed.map(|x| x.to_string())),
            ),
            (
                "traffic.schedule",
                self.traffic
                    .schedule
                    .clone()
                    .unwrap_or_else(|| "none".into()),
            ),
            ("flow_control.pfc", on_off(f.pfc)),
            ("flow_control.pfc.k1", f.pfc_k1.to_string()),
            ("flow_control.pfc.k2", f.pfc_k2.to_string()),
            ("flow_control.pfc.headroom", f.pfc_headroom.to_string()),
            ("flow_control.qcn", on_off(f.qcn)),
            (
                "flow_control.qcn.q_eq",
                auto(f.qcn_q_eq.map(|x| x.to_string())),
            ),
            ("flow_control.qcn.w", f.qcn_w.to_string()),
            ("flow_control.qcn.gd", f.qcn_gd.to_string()),
            (
                "flow_control.qcn.sample_bytes",
                f.qcn_sample_bytes.to_string(),
            ),
            ("flow_control.qcn.jitter", f.qcn_jitter.to_string()),
            ("flow_control.qcn.fb_max", f.qcn_fb_max.to_string()),
            (
                "flow_control.qcn.quant_unit",
                auto(f.qcn_quant_unit.map(|x| x.to_string())),
            ),
            ("flow_control.qcn.min_rate", fmt_rate(f.qcn_min_rate_bps)),
            (
                "flow_control.qcn.byte_counter",
                f.qcn_byte_counter.to_string(),
            ),
            ("flow_control.qcn.timer", fmt_time(f.qcn_timer)),
            ("flow_control.qcn.r_ai", fmt_rate(f.qcn_r_ai_bps)),
            ("flow_control.transport", transport_name(f.transport).into()),
            ("flow_control.tcp.min_rto", fmt_time(f.tcp_min_rto)),
            ("flow_control.rate.min_rto", fmt_time(f.rate_min_rto)),
            ("flow_control.tcp.init_cwnd", f.tcp_init_cwnd.to_string()),
            ("flow_control.dctcp.g", f.dctcp_g.to_string()),
            (
                "flow_control.dctcp.ecn_threshold",
                f.dctcp_ecn_threshold.to_string(),
            ),
            ("isolation.mode", mode_name(iso.mode).into()),
            ("isolation.boundary", iso.boundary.to_string()),
            ("isolation.mice_buffer", iso.mice_buffer.to_string()),
            (
                "isolation.ets.mice",
                auto(iso.ets_mice.map(|x| x.to_string())),
            ),
            (
                "isolation.ets.elephant",
                auto(iso.ets_elephant.map(|x| x.to_string())),
            ),
            ("isolation.elephant_pfc", on_off(iso.elephant_pfc)),
            ("sim.name", sim.name.clone()),
            ("sim.horizon", fmt_time(sim.horizon)),
            ("sim.warmup", fmt_time(sim.warmup)),
            ("sim.seed", sim.seed.to_string()),
            ("sim.out", sim.out.clone()),
            ("sim.throughput_bin", fmt_time(sim.throughput_bin)),
            ("sim.queue_sample", fmt_time(sim.queue_sample)),
            (
                "sim.queue_switches",
                match sim.queue_switches {
                    QueueScope::Bottleneck => "bottleneck".into(),
                    QueueScope::All => "all".into(),
                },
            ),
        ]
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in self.entries() {
            let (sec, rest) = key.split_once('.').unwrap();
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let _ = writeln!(out, "{rest} = {value}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut lines: BTreeMap<String, usize> = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(n, "unterminated section header"))?
                    .trim()
                    .to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(ConfigError::at(n, format!("unknown section [{name}]")));
                }
                section = Some(name);
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ConfigError::at(n, format!("expected `key = value`, found `{line}`"))
            })?;
            let k = k.trim().to_ascii_lowercase();
            let v = v.split(" #").next().unwrap_or("").trim();
            let key = match &section {
                Some(s) => format!("{s}.{k}"),
                None => k,
            };
            if lines.insert(key.clone(), n).is_some() {
                return Err(ConfigError::at(n, format!("duplicate key `{key}`")));
            }
            cfg.set(&key, v)
                .map_err(|m| ConfigError::at(n, format!("{key}: {m}")))?;
        }
        cfg.validate().map_err(|(key, m)| match lines.get(key) {
            Some(&n) => ConfigError::at(n, format!("{key}: {m}")),
            None => ConfigError::new(format!("{key}: {m}")),
        })?;
        Ok(cfg)
    }

    /// Keys a sweep may vary: numeric, boolean and enum scalars.
    pub fn is_sweepable(key: &str) -> bool {
        let key = key.to_ascii_lowercase();
        ScenarioConfig::default()
            .entries()
            .iter()
            .any(|(k, _)| *k == key)
            && !matches!(
                key.as_str(),
                "sim.name" | "sim.out" | "traffic.schedule" | "sim.seed"
            )
    }
}

const SECTIONS: [&str; 5] = ["topology", "traffic", "flow_control", "isolation", "sim"];

fn on_off(b: bool) -> String {
    if b { "on" } else { "off" }.into()
}

pub fn pattern_name(p: Pattern) -> &'static str {
    match p {
        Pattern::ManyToOne => "many_to_one",
        Pattern::HeadOfLine => "head_of_line",
        Pattern::IntraRank => "intra_rank",
        Pattern::InterRank => "inter_rank",
        Pattern::PoissonBackground => "poisson_background",
    }
}

pub fn mix_name(m: Mix) -> &'static str {
    match m {
        Mix::Mice => "mice",
        Mix::Elephant => "elephant",
        Mix::Mixed => "mixed",
    }
}

pub fn mode_name(m: IsolationMode) -> &'static str {
    match m {
        IsolationMode::Mixed => "mixed",
        IsolationMode::IsolatedStrict => "isolated_strict",
        IsolationMode::IsolatedEts => "isolated_ets",
    }
}

pub fn transport_name(t: Transport) -> &'static str {
    match t {
        Transport::Rate => "none",
        t => t.name(),
    }
}

fn int(v: &str) -> Result<u64, String> {
    v.replace('_', "")
        .parse()
        .map_err(|_| format!("expected an integer, found `{v}`"))
}

fn count(v: &str) -> Result<usize, String> {
    int(v).map(|x| x as usize)
}

fn float(v: &str) -> Result<f64, String> {
    let x: f64 = v
        .parse()
        .map_err(|_| format!("expected a number, found `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, found `{v}`"))
    }
}

fn fraction(v: &str) -> Result<f64, String> {
    if let Some((a, b)) = v.split_once('/') {
        let d = float(b.trim())?;
        if d == 0.0 {
            return Err("division by zero".into());
        }
        return Ok(float(a.trim())? / d);
    }
    float(v)
}

fn boolean(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, found `{v}`")),
    }
}

fn split_unit(v: &str) -> (&str, &str) {
    let i = v.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(v.len());
    (v[..i].trim(), v[i..].trim())
}

/// Bytes, with optional `B`, `KB` or `MB` suffix (powers of 1024).
pub fn bytes(v: &str) -> Result<u64, String> {
    let (num, unit) = split_unit(v);
    let mult = match unit.to_ascii_uppercase().as_str() {
        "" | "B" => 1.0,
        "KB" => KB as f64,
        "MB" => (KB * KB) as f64,
        _ => return Err(format!("unknown size unit `{unit}`")),
    };
    let x = float(num)? * mult;
    if x < 0.0 {
        return Err("size must not be negative".into());
    }
    Ok(x.round() as u64)
}

pub fn time(v: &str) -> Result<SimTime, String> {
    let (num, unit) = split_unit(v);
    let mult = match unit {
        "ps" => 1,
        "ns" => PS_PER_NS,
        "us" => PS_PER_US,
        "ms" => PS_PER_MS,
        "s" => PS_PER_S,
        "" => return Err(format!("time `{v}` needs a unit (ps, ns, us, ms, s)")),
        _ => return Err(format!("unknown time unit `{unit}`")),
    };
    let x = float(num)?;
    if x < 0.0 {
        return Err("time must not be negative".into());
    }
    Ok(SimTime::from_ps((x * mult as f64).round() as u64))
}

pub fn rate(v: &str) -> Result<u64, String> {
    let (num, unit) = split_unit(v);
    let mult = match unit.to_ascii_lowercase().as_str() {
        "" | "bps" => 1.0,
        "kbps" => 1e3,
        "mbps" => 1e6,
        "gbps" => 1e9,
        _ => return Err(format!("unknown rate unit `{unit}`")),
    };
    let x = float(num)? * mult;
    if x < 0.0 {
        return Err("rate must not be negative".into());
    }
    Ok(x.round() as u64)
}

pub fn fmt_time(t: SimTime) -> String {
    let ps = t.as_ps();
    for (unit, m) in [
        ("s", PS_PER_S),
        ("ms", PS_PER_MS),
        ("us", PS_PER_US),
        ("ns", PS_PER_NS),
    ] {
        if ps != 0 && ps.is_multiple_of(m) {
            return format!("{}{unit}", ps / m);
        }
    }
    format!("{ps}ps")
}

pub fn fmt_rate(bps: u64) -> String {
    for (unit, m) in [
        ("Gbps", 1_000_000_000),
        ("Mbps", 1_000_000),
        ("Kbps", 1_000),
    ] {
        if bps != 0 && bps.is_multiple_of(m) {
            return format!("{}{unit}", bps / m);
        }
    }
    format!("{bps}bps")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = ScenarioConfig::parse("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(
            (
                c.topology.leaves,
                c.topology.spines,
                c.topology.hosts_per_leaf
            ),
            (4, 2, 4)
        );
        assert_eq!(c.traffic.spec.pattern, Pattern::ManyToOne);
        assert_eq!(c.traffic.spec.mix, Mix::Mixed);
        assert!(c.flow_control.pfc && c.flow_control.qcn);
    }

    #[test]
    fn isolated_strict_maps_mechanisms() {
        let c = ScenarioConfig::parse("isolation.mode=isolated_strict").unwrap();
        let plans = c.class_plans();
        let mice = plans.iter().find(|p| p.priority == 1).unwrap();
        let elephant = plans.iter().find(|p| p.priority == 0).unwrap();
        assert!(mice.pfc.is_some() && mice.qcn.is_none());
        assert!(elephant.pfc.is_none() && elephant.qcn.is_some());
        assert_eq!(mice.partition, 48 * KB);
        assert_eq!(c.scheduler(), SchedulerKind::Strict);
    }

    #[test]
    fn sections_and_dotted_keys() {
        let text = "\
# comment
[flow_control]
pfc.K1 = 25057
qcn = off
; another
[isolation]
mode = isolated_ets
ets.elephant = 0.1
";
        let c = ScenarioConfig::parse(text).unwrap();
        assert_eq!(c.flow_control.pfc_k1, 25057);
        assert!(!c.flow_control.qcn);
        assert!((c.ets_mice_share() - 0.9).abs() < 1e-12);
        match c.scheduler() {
            SchedulerKind::Ets(w) => {
                assert!((w[1] - 0.9).abs() < 1e-12 && (w[0] - 0.1).abs() < 1e-12)
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ScenarioConfig::parse("\n[topology]\nleafs = 3\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("unknown key"));
        let e = ScenarioConfig::parse("isolation.ets.mice = 0.5\nisolation.ets.elephant = 0.4\n")
            .unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("sum to 1"));
        let e = ScenarioConfig::parse("[nope]\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = ScenarioConfig::parse("flow_control.pfc.headroom = 2KB\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(e.message.contains("headroom"));
        let e = ScenarioConfig::parse("traffic.mice_load = 1.5").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(ScenarioConfig::parse("isolation.boundary = 5KB").is_err());
        assert!(ScenarioConfig::parse("sim.horizon = 10").is_err());
    }

    #[test]
    fn k1_round_trips() {
        let c = ScenarioConfig::parse("flow_control.pfc.K1=25057").unwrap();
        let again = ScenarioConfig::parse(&c.to_ini()).unwrap();
        assert_eq!(again.flow_control.pfc_k1, 25057);
        assert_eq!(again, c);
    }

    #[test]
    fn unit_parsing() {
        assert_eq!(bytes("24.47KB").unwrap(), 25057);
        assert_eq!(bytes("48KB").unwrap(), 49152);
        assert_eq!(time("2us").unwrap(), SimTime::from_us(2));
        assert_eq!(time("0.5ms").unwrap(), SimTime::from_us(500));
        assert_eq!(rate("10Gbps").unwrap(), 10_000_000_000);
        assert_eq!(fmt_time(SimTime::from_us(1500)), "1500us");
        assert_eq!(fmt_rate(5_000_000), "5Mbps");
        assert!(time("5").is_err());
    }

    #[test]
    fn sweepable_keys() {
        assert!(ScenarioConfig::is_sweepable("isolation.ets.elephant"));
        assert!(ScenarioConfig::is_sweepable("traffic.mice_load"));
        assert!(!ScenarioConfig::is_sweepable("sim.out"));
        assert!(!ScenarioConfig::is_sweepable("no.such.key"));
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            1usize..6,
            1usize..4,
            1usize..9,
            prop_oneof![Just("mixed"), Just("isolated_strict"), Just("isolated_ets")],
            0.0f64..0.5,
            any::<bool>(),
            any::<bool>(),
            prop_oneof![Just("none"), Just("tcp"), Just("dctcp")],
            0.0f64..=1.0,
            1u64..1000,
        )
            .prop_map(|(l, s, h, mode, load, pfc, qcn, tr, ets, seed)| {
                let mut c = ScenarioConfig::default();
                c.set("topology.leaves", &l.to_string()).unwrap();
                c.set("topology.spines", &s.to_string()).unwrap();
                c.set("topology.hosts_per_leaf", &h.to_string()).unwrap();
                c.set("isolation.mode", mode).unwrap();
                c.set("traffic.mice_load", &load.to_string()).unwrap();
                c.set("flow_control.pfc", if pfc { "on" } else { "off" })
                    .unwrap();
                c.set("flow_control.qcn", if qcn { "on" } else { "off" })
                    .unwrap();
                c.set("flow_control.transport", tr).unwrap();
                c.set("isolation.ets.elephant", &ets.to_string()).unwrap();
                c.set("sim.seed", &seed.to_string()).unwrap();
                c
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(c in arb_config()) {
            let text = c.to_ini();
            let back = ScenarioConfig::parse(&text).unwrap();
            prop_assert_eq!(back.to_ini(), text);
            prop_assert_eq!(back, c);
        }
    }
}
