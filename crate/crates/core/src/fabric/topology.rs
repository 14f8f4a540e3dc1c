//! Leaf-spine construction and static routing.
//!
//! Port layout: leaf ports `0..hosts_per_leaf` face hosts, the following
//! `spine_count` ports face spines in order. Spine port `l` faces leaf `l`.
//! Switch indices put leaves first, then spines.

use crate::error::TopologyError;
use crate::fabric::frame::{FlowId, HostId};
use crate::time::{serialization_time, SimTime};

pub type LinkId = u32;
pub type SwitchId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Host(HostId),
    Switch(SwitchId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchRole {
    Leaf(u32),
    Spine(u32),
}

#[derive(Clone, Debug)]
pub struct Port {
    pub peer: NodeRef,
    pub out_link: LinkId,
    pub in_link: LinkId,
}

#[derive(Clone, Debug)]
pub struct Switch {
    pub role: SwitchRole,
    pub name: String,
    pub ports: Vec<Port>,
}

#[derive(Clone, Debug)]
pub struct Host {
    pub leaf: u32,
    pub leaf_port: u16,
    pub out_link: LinkId,
    pub in_link: LinkId,
}

/// One direction of a physical link.
#[derive(Clone, Debug)]
pub struct Link {
    pub from: NodeRef,
    pub to: NodeRef,
    /// Port index at `to` where frames arrive (0 for hosts).
    pub to_port: u16,
    pub capacity_bps: u64,
    pub prop_delay: SimTime,
}

impl Link {
    pub fn serialization(&self, bytes: u32) -> SimTime {
        serialization_time(bytes as u64, self.capacity_bps)
    }
}

#[derive(Clone, Debug)]
pub struct Topology {
    pub leaf_count: usize,
    pub spine_count: usize,
    pub hosts_per_leaf: usize,
    pub switches: Vec<Switch>,
    pub hosts: Vec<Host>,
    pub links: Vec<Link>,
}

/// Static ECMP choice among `n` equal-cost next hops. The flow id is used
/// directly so consecutive persistent flows spread evenly across paths and a
/// flow always takes the same path.
pub fn ecmp_index(flow: FlowId, n: usize) -> usize {
    flow as usize % n
}

impl Topology {
    pub fn build_leaf_spine(
        leaf_count: usize,
        spine_count: usize,
        hosts_per_leaf: usize,
        capacity_bps: u64,
        prop_delay: SimTime,
    ) -> Result<Topology, TopologyError> {
        if leaf_count == 0 || spine_count == 0 || hosts_per_leaf == 0 {
            return Err(TopologyError::ZeroCount {
                leaves: leaf_count,
                spines: spine_count,
                hosts_per_leaf,
            });
        }
        if capacity_bps == 0 {
            return Err(TopologyError::ZeroCapacity);
        }
        let mut links = Vec::new();
        let mut add_link = |from: NodeRef, to: NodeRef, to_port: u16| -> LinkId {
            links.push(Link {
                from,
                to,
                to_port,
                capacity_bps,
                prop_delay,
            });
            (links.len() - 1) as LinkId
        };

        let mut switches: Vec<Switch> = (0..leaf_count)
            .map(|l| Switch {
                role: SwitchRole::Leaf(l as u32),
                name: format!("leaf{}", l + 1),
                ports: Vec::with_capacity(hosts_per_leaf + spine_count),
            })
            .chain((0..spine_count).map(|s| Switch {
                role: SwitchRole::Spine(s as u32),
                name: format!("spine{}", s + 1),
                ports: Vec::with_capacity(leaf_count),
            }))
            .collect();

        let mut hosts = Vec::with_capacity(leaf_count * hosts_per_leaf);
        #[allow(clippy::needless_range_loop)]
        for l in 0..leaf_count {
            for p in 0..hosts_per_leaf {
                let h = (l * hosts_per_leaf + p) as HostId;
                let leaf = NodeRef::Switch(l as SwitchId);
                let up = add_link(NodeRef::Host(h), leaf, p as u16);
                let down = add_link(leaf, NodeRef::Host(h), 0);
                hosts.push(Host {
                    leaf: l as u32,
                    leaf_port: p as u16,
                    out_link: up,
                    in_link: down,
                });
                switches[l].ports.push(Port {
                    peer: NodeRef::Host(h),
                    out_link: down,
                    in_link: up,
                });
            }
        }
        // Spine ports are pushed in leaf order, so spine port index == leaf index.
        for l in 0..leaf_count {
            for s in 0..spine_count {
                let sw = leaf_count + s;
                let leaf = NodeRef::Switch(l as SwitchId);
                let spine = NodeRef::Switch(sw as SwitchId);
                let up = add_link(leaf, spine, l as u16);
                let down = add_link(spine, leaf, (hosts_per_leaf + s) as u16);
                switches[l].ports.push(Port {
                    peer: spine,
                    out_link: up,
                    in_link: down,
                });
                switches[sw].ports.push(Port {
                    peer: leaf,
                    out_link: down,
                    in_link: up,
                });
            }
        }
        Ok(Topology {
            leaf_count,
            spine_count,
            hosts_per_leaf,
            switches,
            hosts,
            links,
        })
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn leaf_of(&self, host: HostId) -> usize {
        host as usize / self.hosts_per_leaf
    }

    pub fn hosts_under(&self, leaf: usize) -> std::ops::Range<HostId> {
        let lo = (leaf * self.hosts_per_leaf) as HostId;
        lo..lo + self.hosts_per_leaf as HostId
    }

    pub fn leaf_switch(&self, leaf: usize) -> SwitchId {
        leaf as SwitchId
    }

    pub fn spine_switch(&self, spine: usize) -> SwitchId {
        (self.leaf_count + spine) as SwitchId
    }

    /// Egress port at `sw` toward `dst`.
    pub fn route(&self, sw: SwitchId, dst: HostId, flow: FlowId) -> u16 {
        let dst_leaf = self.leaf_of(dst);
        match self.switches[sw as usize].role {
            SwitchRole::Leaf(l) if l as usize == dst_leaf => {
                (dst as usize % self.hosts_per_leaf) as u16
            }
            SwitchRole::Leaf(_) => {
                (self.hosts_per_leaf + ecmp_index(flow, self.spine_count)) as u16
            }
            SwitchRole::Spine(_) => dst_leaf as u16,
        }
    }

    /// Sequence of switches visited from `src` to `dst` for `flow`.
    pub fn path(&self, src: HostId, dst: HostId, flow: FlowId) -> Vec<SwitchId> {
        let mut sw = self.hosts[src as usize].leaf;
        let mut path = vec![sw];
        loop {
            let port = self.route(sw, dst, flow);
            match self.switches[sw as usize].ports[port as usize].peer {
                NodeRef::Host(h) => {
                    debug_assert_eq!(h, dst);
                    return path;
                }
                NodeRef::Switch(next) => {
                    sw = next;
                    path.push(sw);
                }
            }
        }
    }

    /// Uplink ids from a leaf toward every spine.
    pub fn leaf_uplinks(&self, leaf: usize) -> Vec<LinkId> {
        let sw = &self.switches[leaf];
        sw.ports[self.hosts_per_leaf..]
            .iter()
            .map(|p| p.out_link)
            .collect()
    }

    pub fn switch_name(&self, sw: SwitchId) -> &str {
        &self.switches[sw as usize].name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> Topology {
        Topology::build_leaf_spine(4, 2, 4, 10_000_000_000, SimTime::from_us(2)).unwrap()
    }

    #[test]
    fn many_to_one_fabric_shape() {
        let t = fig1();
        assert_eq!(t.host_count(), 16);
        assert_eq!(t.switches.len(), 6);
        // 16 host links + 8 leaf-spine links, both directions
        assert_eq!(t.links.len(), 2 * (16 + 8));
        for l in 0..4 {
            assert_eq!(t.switches[l].ports.len(), 6);
        }
        for s in 4..6 {
            assert_eq!(t.switches[s].ports.len(), 4);
        }
    }

    #[test]
    fn every_leaf_reaches_every_spine() {
        let t = Topology::build_leaf_spine(5, 3, 2, 1, SimTime::ZERO).unwrap();
        for l in 0..5 {
            let peers: Vec<_> = t.switches[l].ports[2..].iter().map(|p| p.peer).collect();
            assert_eq!(
                peers,
                (0..3).map(|s| NodeRef::Switch(5 + s)).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn benchmark_fabric_has_144_servers() {
        let t = Topology::build_leaf_spine(18, 4, 8, 10_000_000_000, SimTime::ZERO).unwrap();
        assert_eq!(t.host_count(), 144);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(Topology::build_leaf_spine(0, 1, 1, 1, SimTime::ZERO).is_err());
        assert!(Topology::build_leaf_spine(1, 0, 1, 1, SimTime::ZERO).is_err());
        assert!(Topology::build_leaf_spine(1, 1, 0, 1, SimTime::ZERO).is_err());
    }

    #[test]
    fn minimal_topology_paths() {
        let t = Topology::build_leaf_spine(1, 1, 2, 1, SimTime::ZERO).unwrap();
        assert_eq!(t.path(0, 1, 7), vec![0]);
        let t = Topology::build_leaf_spine(2, 1, 1, 1, SimTime::ZERO).unwrap();
        assert_eq!(t.path(0, 1, 7), vec![0, 2, 1]);
    }

    #[test]
    fn ecmp_is_per_flow_and_spreads() {
        let t = fig1();
        assert_eq!(t.path(0, 15, 0), vec![0, 4, 3]);
        assert_eq!(t.path(0, 15, 1), vec![0, 5, 3]);
        assert_eq!(t.path(0, 15, 1), t.path(0, 15, 1));
    }

    #[test]
    fn link_endpoints_are_consistent() {
        let t = fig1();
        for (i, sw) in t.switches.iter().enumerate() {
            for (p, port) in sw.ports.iter().enumerate() {
                let out = &t.links[port.out_link as usize];
                let inn = &t.links[port.in_link as usize];
                assert_eq!(out.from, NodeRef::Switch(i as u32));
                assert_eq!(inn.to, NodeRef::Switch(i as u32));
                assert_eq!(inn.to_port as usize, p);
                assert_eq!(out.to, port.peer);
            }
        }
    }
}
