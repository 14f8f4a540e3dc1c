//! The packet-level world: hosts, switches and links driven by the event
//! scheduler.
//!
//! Hosts have no transmit queue of their own. When the NIC is free a host
//! picks the next segment from its active flows: ACKs first, then the
//! highest non-paused priority with a conforming segment, round robin among
//! flows. Switches charge data bytes to the ingress partition they arrived
//! on and stage them at the egress port chosen by routing. Control frames
//! (PAUSE, RESUME, CNM, ACK) bypass buffering and are never halted.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::Scheduler;
use crate::error::RunError;
use crate::fabric::{
    EgressPort, EnqueueOutcome, FlowClass, Frame, FrameKind, HostId, IngressQueue, LinkId,
    LinkState, NodeRef, SwitchId, Topology, NUM_PRIORITIES,
};
use crate::metrics::{
    mean, occupancy_share_at_trigger, percentile, ClassBytes, FbRecord, FctRecord, FlowRecord,
    MetricsReport, Moments, PauseRecord, QueueSeries, Summary, SwitchPfc, ThroughputSeries,
};
use crate::pfc::{on_occupancy_fall, on_occupancy_rise, on_pause_received, PfcSignal};
use crate::qcn::{CpState, RpState, TokenBucket};
use crate::scenario::{QueueScope, ScenarioConfig};
use crate::time::SimTime;
use crate::traffic::{assign_priority, class_at, classify, receiver, Flow, Pattern};
use crate::transport::{ecn_mark_on_enqueue, Receiver, Sender, TcpConfig, Transport};

#[derive(Clone, Copy, Debug)]
enum Ev {
    FlowStart(u32),
    TxDone(LinkId),
    Arrive(LinkId, Frame),
    HostWake(HostId),
    Rto(u32),
    Sample,
}

struct SwitchRt {
    /// `[port][priority]`
    ingress: Vec<Vec<IngressQueue>>,
    cp: Vec<Vec<Option<CpState>>>,
    egress: Vec<EgressPort>,
}

#[derive(Default)]
struct HostRt {
    control: VecDeque<Frame>,
    halted: u8,
    active: Vec<u32>,
    cursor: usize,
    wake_at: Option<SimTime>,
}

struct FlowRt {
    flow: Flow,
    class: FlowClass,
    sender: Sender,
    receiver: Receiver,
    rp: Option<RpState>,
    bucket: Option<TokenBucket>,
    rto_pending: bool,
    done_at: Option<SimTime>,
}

#[derive(Default)]
struct Counters {
    injected: ClassBytes,
    delivered: ClassBytes,
    dropped: ClassBytes,
    in_flight: [u64; 2],
    frames_sent: u64,
    frames_dropped: u64,
    frames_sent_window: u64,
    frames_dropped_window: u64,
    mice_frames_dropped: u64,
    ecn_enqueues: u64,
    ecn_marked: u64,
    goodput_bytes_window: u64,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    topo: Topology,
    switches: Vec<SwitchRt>,
    hosts: Vec<HostRt>,
    flows: Vec<FlowRt>,
    links: Vec<LinkState>,
    /// Egress port at the sending switch for each link (0 for host links).
    link_port: Vec<u16>,
    ecn: [Option<u64>; NUM_PRIORITIES],
    rng: ChaCha8Rng,
    warmup: SimTime,
    counters: Counters,
    /// Throughput watch slot for each link.
    watch: Vec<Option<usize>>,
    throughput: Vec<ThroughputSeries>,
    queue_switches: Vec<SwitchId>,
    queues: Vec<QueueSeries>,
    focus_switch: SwitchId,
    focus_port: u16,
    queue_stats: Moments,
    egress_stats: Moments,
    pauses: Vec<PauseRecord>,
    fb: Vec<FbRecord>,
}

/// Host the experiment is centred on: the incast receiver or a querier.
fn focus_host(cfg: &ScenarioConfig, topo: &Topology, flows: &[Flow]) -> HostId {
    match cfg.traffic.spec.pattern {
        Pattern::IntraRank => 0,
        Pattern::InterRank => flows
            .iter()
            .find(|f| f.size.is_some())
            .map(|f| f.dst)
            .unwrap_or(0),
        _ => receiver(topo),
    }
}

impl<'a> World<'a> {
    fn new(cfg: &'a ScenarioConfig, topo: Topology, flows: Vec<Flow>) -> World<'a> {
        let plans = cfg.class_plans();
        let sched = cfg.scheduler();
        let mtu = cfg.topology.mtu;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed ^ 0xC0FF_EE00);

        let mut ecn = [None; NUM_PRIORITIES];
        for p in &plans {
            ecn[p.priority as usize] = p.ecn_threshold;
        }
        let switches = topo
            .switches
            .iter()
            .map(|sw| {
                let n = sw.ports.len();
                let ingress = (0..n)
                    .map(|_| {
                        (0..NUM_PRIORITIES)
                            .map(
                                |prio| match plans.iter().find(|p| p.priority as usize == prio) {
                                    Some(p) => IngressQueue::new(p.partition, p.pfc),
                                    None => IngressQueue::new(0, None),
                                },
                            )
                            .collect()
                    })
                    .collect();
                let cp = (0..n)
                    .map(|_| {
                        (0..NUM_PRIORITIES)
                            .map(|prio| {
                                plans
                                    .iter()
                                    .find(|p| p.priority as usize == prio)
                                    .and_then(|p| p.qcn)
                                    .map(|c| CpState::new(c, &mut rng))
                            })
                            .collect()
                    })
                    .collect();
                let egress = (0..n).map(|_| EgressPort::new(&sched, mtu)).collect();
                SwitchRt {
                    ingress,
                    cp,
                    egress,
                }
            })
            .collect();

        let mut link_port = vec![0u16; topo.links.len()];
        for sw in &topo.switches {
            for (i, p) in sw.ports.iter().enumerate() {
                link_port[p.out_link as usize] = i as u16;
            }
        }

        let boundary = cfg.isolation.boundary;
        let tcp: TcpConfig = cfg.tcp_config();
        let rate: TcpConfig = cfg.rate_config();
        let qcn_any = plans.iter().any(|p| p.qcn.is_some());
        let rp_cfg = cfg.rp_config();
        let cap = cfg.topology.capacity_bps;
        let flows = flows
            .into_iter()
            .map(|flow| {
                let class = classify(flow.size, flow.declared, boundary);
                let kind = match class {
                    FlowClass::Mice => Transport::Rate,
                    FlowClass::Elephant => cfg.flow_control.transport,
                };
                FlowRt {
                    class,
                    sender: Sender::new(
                        flow.size,
                        kind,
                        if kind == Transport::Rate { &rate } else { &tcp },
                    ),
                    receiver: Receiver::default(),
                    rp: qcn_any.then(|| RpState::new(rp_cfg)),
                    bucket: qcn_any.then(|| TokenBucket::new(cap, mtu, flow.arrival)),
                    rto_pending: false,
                    done_at: None,
                    flow,
                }
            })
            .collect::<Vec<_>>();

        let horizon = cfg.sim.horizon;
        let bin = cfg.sim.throughput_bin;
        let focus = focus_host(
            cfg,
            &topo,
            &flows.iter().map(|f| f.flow.clone()).collect::<Vec<_>>(),
        );
        let focus_leaf = topo.hosts[focus as usize].leaf;
        let focus_port = topo.hosts[focus as usize].leaf_port;
        let mut watch = vec![None; topo.links.len()];
        let mut throughput = Vec::new();
        let mut add_watch = |l: LinkId, topo: &Topology| {
            let name = link_name(topo, l);
            watch[l as usize] = Some(throughput.len());
            throughput.push(ThroughputSeries::new(
                name,
                topo.links[l as usize].capacity_bps,
                bin,
                horizon,
            ));
        };
        add_watch(topo.hosts[focus as usize].in_link, &topo);
        if cfg.traffic.spec.pattern == Pattern::HeadOfLine && topo.leaf_count > 1 {
            for l in topo.leaf_uplinks(1) {
                add_watch(l, &topo);
            }
        }

        let queue_switches: Vec<SwitchId> = match cfg.sim.queue_switches {
            QueueScope::Bottleneck => vec![focus_leaf],
            QueueScope::All => (0..topo.switches.len() as SwitchId).collect(),
        };
        let mut queues = Vec::new();
        for &sw in &queue_switches {
            for series in ["mice", "elephant"] {
                queues.push(QueueSeries {
                    switch: topo.switch_name(sw).to_string(),
                    series,
                    bytes: Vec::new(),
                });
            }
        }
        queues.push(QueueSeries {
            switch: topo.switch_name(focus_leaf).to_string(),
            series: "egress",
            bytes: Vec::new(),
        });

        let hosts = (0..topo.hosts.len()).map(|_| HostRt::default()).collect();
        let links = vec![LinkState::default(); topo.links.len()];
        World {
            cfg,
            switches,
            hosts,
            flows,
            links,
            link_port,
            ecn,
            rng,
            warmup: cfg.sim.warmup,
            counters: Counters::default(),
            watch,
            throughput,
            queue_switches,
            queues,
            focus_switch: focus_leaf,
            focus_port,
            queue_stats: Moments::default(),
            egress_stats: Moments::default(),
            pauses: Vec::new(),
            fb: Vec::new(),
            topo,
        }
    }

    fn handle(&mut self, s: &mut Scheduler<Ev>, ev: Ev) {
        match ev {
            Ev::FlowStart(f) => {
                let src = self.flows[f as usize].flow.src;
                self.hosts[src as usize].active.push(f);
                self.pump_host(s, src);
            }
            Ev::TxDone(l) => {
                self.links[l as usize].finish();
                match self.topo.links[l as usize].from {
                    NodeRef::Host(h) => self.pump_host(s, h),
                    NodeRef::Switch(sw) => self.pump_switch(s, sw, self.link_port[l as usize]),
                }
            }
            Ev::Arrive(l, frame) => {
                if frame.kind == FrameKind::Data {
                    self.counters.in_flight[frame.class.index()] -= frame.size as u64;
                }
                let link = &self.topo.links[l as usize];
                match link.to {
                    NodeRef::Host(h) => self.host_receive(s, h, frame),
                    NodeRef::Switch(sw) => self.switch_receive(s, sw, link.to_port, frame),
                }
            }
            Ev::HostWake(h) => {
                if self.hosts[h as usize].wake_at == Some(s.now()) {
                    self.hosts[h as usize].wake_at = None;
                    self.pump_host(s, h);
                }
            }
            Ev::Rto(f) => self.on_rto(s, f),
            Ev::Sample => {
                self.sample(s.now());
                s.schedule_in(self.cfg.sim.queue_sample, Ev::Sample);
            }
        }
    }

    fn transmit(&mut self, s: &mut Scheduler<Ev>, l: LinkId, frame: Frame) {
        let now = s.now();
        let tx = self.links[l as usize].transmit(&self.topo.links[l as usize], now, frame.size);
        if frame.kind == FrameKind::Data {
            self.counters.in_flight[frame.class.index()] += frame.size as u64;
            self.links[l as usize].data_bytes_sent += frame.size as u64;
            if let Some(w) = self.watch[l as usize] {
                self.throughput[w].record(frame.class, now, tx.tx_done, frame.size);
            }
        }
        s.schedule(tx.tx_done, Ev::TxDone(l)).expect("future");
        s.schedule(tx.arrival, Ev::Arrive(l, frame))
            .expect("future");
    }

    // ---- switches ----

    fn switch_receive(&mut self, s: &mut Scheduler<Ev>, sw: SwitchId, port: u16, mut frame: Frame) {
        let now = s.now();
        let swi = sw as usize;
        match frame.kind {
            FrameKind::Pause | FrameKind::Resume => {
                let sig = if frame.kind == FrameKind::Pause {
                    PfcSignal::Pause
                } else {
                    PfcSignal::Resume
                };
                let e = &mut self.switches[swi].egress[port as usize];
                if on_pause_received(&mut e.halted, frame.priority, sig) && sig == PfcSignal::Resume
                {
                    self.pump_switch(s, sw, port);
                }
            }
            FrameKind::Ack | FrameKind::Cnm => {
                let out = self.topo.route(sw, frame.dst, frame.flow);
                self.switches[swi].egress[out as usize]
                    .control
                    .push_back(frame);
                self.pump_switch(s, sw, out);
            }
            FrameKind::Data => {
                let prio = frame.priority as usize;
                let after_warmup = now >= self.warmup;
                if let Some(th) = self.ecn[prio] {
                    let occ = self.switches[swi].ingress[port as usize][prio].occupancy;
                    self.counters.ecn_enqueues += 1;
                    if ecn_mark_on_enqueue(occ, &mut frame, th) {
                        self.counters.ecn_marked += 1;
                    }
                }
                let q = &mut self.switches[swi].ingress[port as usize][prio];
                if q.enqueue(&frame) == EnqueueOutcome::Dropped {
                    self.counters.dropped.add(frame.class, frame.size as u64);
                    if frame.class == FlowClass::Mice {
                        self.counters.mice_frames_dropped += 1;
                    }
                    self.counters.frames_dropped += 1;
                    if after_warmup {
                        self.counters.frames_dropped_window += 1;
                    }
                    return;
                }
                if let Some(sig) = on_occupancy_rise(q) {
                    let share = occupancy_share_at_trigger(q);
                    self.send_pfc(s, sw, port, frame.priority, sig, share);
                }
                let sw_rt = &mut self.switches[swi];
                if let Some(cp) = sw_rt.cp[port as usize][prio].as_mut() {
                    if cp.on_arrival(frame.size, &mut self.rng) {
                        let q = &sw_rt.ingress[port as usize][prio];
                        if let Some(fb) = cp.sample(q.occupancy) {
                            let share = occupancy_share_at_trigger(q);
                            if after_warmup {
                                self.fb.push(FbRecord {
                                    t: now,
                                    switch: sw,
                                    flow: frame.flow,
                                    culprit: frame.class,
                                    raw: fb.raw,
                                    quantized: fb.quantized,
                                    mice_share: share,
                                });
                            }
                            if fb.quantized > 0 {
                                let cnm = Frame::cnm(frame.flow, frame.src, fb.quantized);
                                let back = self.topo.route(sw, frame.src, frame.flow);
                                self.switches[swi].egress[back as usize]
                                    .control
                                    .push_back(cnm);
                                self.pump_switch(s, sw, back);
                            }
                        }
                    }
                }
                let out = self.topo.route(sw, frame.dst, frame.flow);
                self.switches[swi].egress[out as usize].stage(frame, port);
                self.pump_switch(s, sw, out);
            }
        }
    }

    fn send_pfc(
        &mut self,
        s: &mut Scheduler<Ev>,
        sw: SwitchId,
        port: u16,
        prio: u8,
        sig: PfcSignal,
        share: Option<f64>,
    ) {
        let frame = match sig {
            PfcSignal::Pause => Frame::pause(prio),
            PfcSignal::Resume => Frame::resume(prio),
        };
        self.pauses.push(PauseRecord {
            t: s.now(),
            switch: sw,
            port,
            priority: prio,
            signal: sig,
            mice_share: share,
        });
        self.switches[sw as usize].egress[port as usize]
            .control
            .push_back(frame);
        self.pump_switch(s, sw, port);
    }

    fn pump_switch(&mut self, s: &mut Scheduler<Ev>, sw: SwitchId, port: u16) {
        let l = self.topo.switches[sw as usize].ports[port as usize].out_link;
        if self.links[l as usize].is_busy() {
            return;
        }
        let Some((frame, ingress)) = self.switches[sw as usize].egress[port as usize].dequeue()
        else {
            return;
        };
        self.transmit(s, l, frame);
        if let Some(ip) = ingress {
            let q = &mut self.switches[sw as usize].ingress[ip as usize][frame.priority as usize];
            q.release(frame.size, frame.class);
            if let Some(sig) = on_occupancy_fall(q) {
                let share = occupancy_share_at_trigger(q);
                self.send_pfc(s, sw, ip, frame.priority, sig, share);
            }
        }
    }

    // ---- hosts ----

    fn host_receive(&mut self, s: &mut Scheduler<Ev>, h: HostId, frame: Frame) {
        let now = s.now();
        match frame.kind {
            FrameKind::Pause | FrameKind::Resume => {
                let sig = if frame.kind == FrameKind::Pause {
                    PfcSignal::Pause
                } else {
                    PfcSignal::Resume
                };
                if on_pause_received(&mut self.hosts[h as usize].halted, frame.priority, sig)
                    && sig == PfcSignal::Resume
                {
                    self.pump_host(s, h);
                }
            }
            FrameKind::Cnm => {
                let f = &mut self.flows[frame.flow as usize];
                if let (Some(rp), Some(b)) = (f.rp.as_mut(), f.bucket.as_mut()) {
                    rp.on_cnm(frame.fb, now);
                    b.set_rate(rp.rate().round().max(1.0) as u64, now);
                }
            }
            FrameKind::Ack => {
                let f = &mut self.flows[frame.flow as usize];
                f.sender.on_ack(frame.seq, frame.ecn, now);
                self.arm_rto(s, frame.flow);
                self.pump_host(s, h);
            }
            FrameKind::Data => {
                let fi = frame.flow as usize;
                self.counters.delivered.add(frame.class, frame.size as u64);
                let f = &mut self.flows[fi];
                let before = f.receiver.unique_bytes;
                let cum = f.receiver.on_data(frame.seq, frame.size);
                if now >= self.warmup {
                    self.counters.goodput_bytes_window += f.receiver.unique_bytes - before;
                }
                if f.done_at.is_none() && f.flow.size.is_some_and(|sz| cum >= sz) {
                    f.done_at = Some(now);
                }
                let ack = Frame::ack(frame.flow, h, frame.src, cum, frame.ecn);
                self.hosts[h as usize].control.push_back(ack);
                self.pump_host(s, h);
            }
        }
    }

    fn arm_rto(&mut self, s: &mut Scheduler<Ev>, f: u32) {
        let fr = &mut self.flows[f as usize];
        if let Some(d) = fr.sender.rto_deadline {
            if !fr.rto_pending {
                fr.rto_pending = true;
                s.schedule(d.max(s.now()), Ev::Rto(f)).expect("future");
            }
        }
    }

    fn on_rto(&mut self, s: &mut Scheduler<Ev>, f: u32) {
        let now = s.now();
        let fr = &mut self.flows[f as usize];
        fr.rto_pending = false;
        match fr.sender.rto_deadline {
            None => {}
            Some(d) if d > now => self.arm_rto(s, f),
            Some(_) => {
                fr.sender.on_timeout(now);
                let src = fr.flow.src;
                self.arm_rto(s, f);
                self.pump_host(s, src);
            }
        }
    }

    fn pump_host(&mut self, s: &mut Scheduler<Ev>, h: HostId) {
        let now = s.now();
        let hi = h as usize;
        let l = self.topo.hosts[hi].out_link;
        if self.links[l as usize].is_busy() {
            return;
        }
        if let Some(frame) = self.hosts[hi].control.pop_front() {
            self.transmit(s, l, frame);
            return;
        }
        let boundary = self.cfg.isolation.boundary;
        let mode = self.cfg.isolation.mode;
        let flows = &mut self.flows;
        let host = &mut self.hosts[hi];
        host.active
            .retain(|&f| !flows[f as usize].sender.is_complete());
        let n = host.active.len();
        if n == 0 {
            return;
        }
        // (position, priority, seq, len) of the first ready flow per priority
        let mut best: Option<(usize, u8, u64, u32)> = None;
        let mut earliest: Option<SimTime> = None;
        for k in 0..n {
            let pos = (host.cursor + k) % n;
            let fr = &mut flows[host.active[pos] as usize];
            let Some((seq, len)) = fr.sender.next_segment() else {
                continue;
            };
            let prio = assign_priority(class_at(&fr.flow, boundary, seq), mode);
            if host.halted & (1 << prio) != 0 || best.is_some_and(|b| b.1 >= prio) {
                continue;
            }
            let ready = fr.bucket.as_mut().map_or(now, |b| b.ready_at(now, len));
            if ready > now {
                earliest = Some(earliest.map_or(ready, |e| e.min(ready)));
                continue;
            }
            best = Some((pos, prio, seq, len));
        }
        let Some((pos, prio, seq, len)) = best else {
            if let Some(t) = earliest {
                if host.wake_at.is_none_or(|w| w > t) {
                    host.wake_at = Some(t);
                    s.schedule(t, Ev::HostWake(h)).expect("future");
                }
            }
            return;
        };
        host.cursor = pos + 1;
        let fid = host.active[pos];
        let fr = &mut flows[fid as usize];
        let class = class_at(&fr.flow, boundary, seq);
        fr.sender.on_sent(seq, len, now);
        if let (Some(rp), Some(b)) = (fr.rp.as_mut(), fr.bucket.as_mut()) {
            b.consume(now, len);
            rp.on_sent(len, now);
            b.set_rate(rp.rate().round().max(1.0) as u64, now);
        }
        let frame = Frame::data(fid, seq, len, prio, class, h, fr.flow.dst);
        self.counters.injected.add(class, len as u64);
        self.counters.frames_sent += 1;
        if now >= self.warmup {
            self.counters.frames_sent_window += 1;
        }
        self.arm_rto(s, fid);
        self.transmit(s, l, frame);
    }

    // ---- observation ----

    fn sample(&mut self, now: SimTime) {
        let mut k = 0;
        for &sw in &self.queue_switches {
            let mut by_class = [0u64; 2];
            for port in &self.switches[sw as usize].ingress {
                for q in port {
                    by_class[0] += q.class_bytes[0];
                    by_class[1] += q.class_bytes[1];
                }
            }
            self.queues[k].bytes.push(by_class[0]);
            self.queues[k + 1].bytes.push(by_class[1]);
            k += 2;
        }
        let egress =
            self.switches[self.focus_switch as usize].egress[self.focus_port as usize].queued_bytes;
        self.queues[k].bytes.push(egress);
        if now >= self.warmup {
            let total: u64 = self.switches[self.focus_switch as usize]
                .ingress
                .iter()
                .flat_map(|p| p.iter())
                .map(|q| q.occupancy)
                .sum();
            self.queue_stats.push(total as f64);
            self.egress_stats.push(egress as f64);
        }
    }

    fn resident(&self) -> ClassBytes {
        let mut r = ClassBytes::default();
        for sw in &self.switches {
            for port in &sw.ingress {
                for q in port {
                    r.mice += q.class_bytes[0];
                    r.elephant += q.class_bytes[1];
                }
            }
        }
        r.mice += self.counters.in_flight[0];
        r.elephant += self.counters.in_flight[1];
        r
    }

    fn report(self, events: u64) -> MetricsReport {
        let cfg = self.cfg;
        let horizon = cfg.sim.horizon;
        let warmup = self.warmup;
        let window = (horizon - warmup).as_secs_f64();

        let mut fct = Vec::new();
        let flow_records = self
            .flows
            .iter()
            .map(|f| FlowRecord {
                flow: f.flow.id,
                src: f.flow.src,
                dst: f.flow.dst,
                class: f.class,
                size: f.flow.size,
                arrival: f.flow.arrival,
                delivered: f.receiver.rcv_nxt,
                retransmits: f.sender.retransmits,
                timeouts: f.sender.timeouts,
            })
            .collect();
        let mut mice_fct = Vec::new();
        let (mut elephant_flows, mut elephants_completed) = (0, 0);
        let (mut retransmits, mut timeouts) = (0, 0);
        for f in &self.flows {
            retransmits += f.sender.retransmits;
            timeouts += f.sender.timeouts;
            if f.class == FlowClass::Elephant {
                elephant_flows += 1;
            }
            let Some(done) = f.done_at else { continue };
            if f.class == FlowClass::Elephant {
                elephants_completed += 1;
            }
            let rec = FctRecord {
                flow: f.flow.id,
                src: f.flow.src,
                dst: f.flow.dst,
                class: f.class,
                size: f.flow.size.unwrap_or(0),
                arrival: f.flow.arrival,
                complete: done,
            };
            if f.class == FlowClass::Mice && f.flow.arrival >= warmup {
                mice_fct.push(rec.fct().as_us_f64());
            }
            fct.push(rec);
        }
        let mice_in_window = self
            .flows
            .iter()
            .filter(|f| f.class == FlowClass::Mice && f.flow.arrival >= warmup)
            .count();
        let mut sorted = mice_fct.clone();
        sorted.sort_by(f64::total_cmp);

        let util = |series: &ThroughputSeries, class: Option<FlowClass>| -> f64 {
            let w = series.bin.as_ps();
            let a = warmup.as_ps().div_ceil(w) as usize;
            let b = ((horizon.as_ps() / w) as usize).min(series.bits.len());
            let bits: u64 = series.bits[a.min(b)..b]
                .iter()
                .map(|x| match class {
                    Some(c) => x[c.index()],
                    None => x[0] + x[1],
                })
                .sum();
            let secs = ((b - a.min(b)) as u64 * w) as f64 / 1e12;
            if secs > 0.0 {
                bits as f64 / (series.capacity_bps as f64 * secs)
            } else {
                0.0
            }
        };
        let bottleneck = &self.throughput[0];
        let victim_utilization = (self.throughput.len() > 1).then(|| {
            self.throughput[1..]
                .iter()
                .map(|s| util(s, None))
                .sum::<f64>()
                / (self.throughput.len() - 1) as f64
        });

        let mut pfc_by_switch: Vec<SwitchPfc> = self
            .topo
            .switches
            .iter()
            .map(|s| SwitchPfc {
                switch: s.name.clone(),
                pauses: 0,
                resumes: 0,
                first_pause_us: None,
            })
            .collect();
        let mut pause_shares = Vec::new();
        let mut pause_frames_mice_class = 0;
        let mice_prio = assign_priority(FlowClass::Mice, cfg.isolation.mode);
        for p in &self.pauses {
            let e = &mut pfc_by_switch[p.switch as usize];
            match p.signal {
                PfcSignal::Pause => {
                    e.pauses += 1;
                    e.first_pause_us.get_or_insert(p.t.as_us_f64());
                    if p.priority == mice_prio {
                        pause_frames_mice_class += 1;
                    }
                    if p.t >= warmup {
                        pause_shares.extend(p.mice_share);
                    }
                }
                PfcSignal::Resume => e.resumes += 1,
            }
        }
        let pause_frames = pfc_by_switch.iter().map(|s| s.pauses).sum();
        let resume_frames = pfc_by_switch.iter().map(|s| s.resumes).sum();

        let sent: Vec<&FbRecord> = self.fb.iter().filter(|r| r.quantized > 0).collect();
        let fb_of = |c: Option<FlowClass>| {
            mean(
                &sent
                    .iter()
                    .filter(|r| c.is_none_or(|c| r.culprit == c))
                    .map(|r| r.quantized as f64)
                    .collect::<Vec<_>>(),
            )
        };
        let fb_raw_mean = mean(&sent.iter().map(|r| r.raw).collect::<Vec<_>>());
        let mice_share_at_cnm = mean(&sent.iter().filter_map(|r| r.mice_share).collect::<Vec<_>>());

        let resident = self.resident();
        let c = &self.counters;
        let conservation_ok = c.injected.mice == c.delivered.mice + c.dropped.mice + resident.mice
            && c.injected.elephant == c.delivered.elephant + c.dropped.elephant + resident.elephant;

        let summary = Summary {
            scenario: cfg.sim.name.clone(),
            seed: cfg.sim.seed,
            horizon_us: horizon.as_us_f64(),
            warmup_us: warmup.as_us_f64(),
            events,
            flows: self.flows.len(),
            mice_flows: mice_in_window,
            mice_completed: mice_fct.len(),
            mice_fct_mean_us: mean(&mice_fct),
            mice_fct_p50_us: percentile(&sorted, 50.0),
            mice_fct_p99_us: percentile(&sorted, 99.0),
            elephant_flows,
            elephants_completed,
            bottleneck_link: bottleneck.name.clone(),
            bottleneck_utilization: util(bottleneck, None),
            bottleneck_mice_utilization: util(bottleneck, Some(FlowClass::Mice)),
            bottleneck_elephant_utilization: util(bottleneck, Some(FlowClass::Elephant)),
            victim_utilization,
            goodput_gbps: if window > 0.0 {
                c.goodput_bytes_window as f64 * 8.0 / window / 1e9
            } else {
                0.0
            },
            queue_mean_bytes: self.queue_stats.mean(),
            queue_std_bytes: self.queue_stats.std(),
            egress_queue_mean_bytes: self.egress_stats.mean(),
            egress_queue_std_bytes: self.egress_stats.std(),
            pause_frames,
            resume_frames,
            pause_frames_mice_class,
            pfc_by_switch,
            mice_share_at_pause: mean(&pause_shares),
            cnm_count: sent.len() as u64,
            fb_mean: fb_of(None),
            fb_raw_mean,
            fb_mean_elephant_culprit: fb_of(Some(FlowClass::Elephant)),
            fb_mean_mice_culprit: fb_of(Some(FlowClass::Mice)),
            mice_share_at_cnm,
            data_frames_sent: c.frames_sent,
            data_frames_dropped: c.frames_dropped,
            drop_ratio: ratio(c.frames_dropped, c.frames_sent),
            drop_ratio_after_warmup: ratio(c.frames_dropped_window, c.frames_sent_window),
            mice_frames_dropped: c.mice_frames_dropped,
            ecn_enqueues: c.ecn_enqueues,
            ecn_marked: c.ecn_marked,
            retransmitted_frames: retransmits,
            rto_timeouts: timeouts,
            injected_bytes: c.injected,
            delivered_bytes: c.delivered,
            dropped_bytes: c.dropped,
            resident_bytes: resident,
            conservation_ok,
        };
        MetricsReport {
            summary,
            fct,
            flows: flow_records,
            throughput: self.throughput,
            queue_sample: cfg.sim.queue_sample,
            queues: self.queues,
            pauses: self.pauses,
            fb: self.fb,
            switch_names: self.topo.switches.iter().map(|s| s.name.clone()).collect(),
        }
    }
}

fn node_name(topo: &Topology, n: NodeRef) -> String {
    match n {
        NodeRef::Host(h) => format!("h{h}"),
        NodeRef::Switch(s) => topo.switch_name(s).to_string(),
    }
}

pub fn link_name(topo: &Topology, l: LinkId) -> String {
    let link = &topo.links[l as usize];
    format!(
        "{}->{}",
        node_name(topo, link.from),
        node_name(topo, link.to)
    )
}

/// Runs one scenario over a prepared flow list.
pub fn simulate(
    cfg: &ScenarioConfig,
    topo: Topology,
    flows: Vec<Flow>,
) -> Result<MetricsReport, RunError> {
    for f in &flows {
        let n = topo.host_count() as HostId;
        if f.src >= n || f.dst >= n || f.src == f.dst {
            return Err(crate::error::ConfigError::new(format!(
                "flow {} has invalid endpoints {} -> {}",
                f.id, f.src, f.dst
            ))
            .into());
        }
    }
    let mut world = World::new(cfg, topo, flows);
    let mut sched: Scheduler<Ev> = Scheduler::new();
    for (i, f) in world.flows.iter().enumerate() {
        if f.flow.arrival < cfg.sim.horizon {
            sched
                .schedule(f.flow.arrival, Ev::FlowStart(i as u32))
                .expect("future");
        }
    }
    sched
        .schedule(cfg.sim.queue_sample, Ev::Sample)
        .expect("future");
    let events = sched.run_until(cfg.sim.horizon, |s, ev| world.handle(s, ev));
    Ok(world.report(events))
}

fn ratio(a: u64, b: u64) -> f64 {
    if b > 0 {
        a as f64 / b as f64
    } else {
        0.0
    }
}
