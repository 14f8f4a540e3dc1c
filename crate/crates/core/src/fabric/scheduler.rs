//! Egress class selection: strict priority or ETS.
//!
//! ETS is deficit round robin. Each class with a positive share gets a
//! quantum proportional to its share, scaled so the smallest positive share
//! earns exactly one MTU per round. Classes with a zero share are served
//! only when no positively-weighted class has an eligible frame, which keeps
//! the port work-conserving.

use crate::fabric::frame::NUM_PRIORITIES;

#[derive(Clone, Debug, PartialEq)]
pub enum SchedulerKind {
    Strict,
    /// Bandwidth share per priority; shares are non-negative and sum to 1.
    Ets([f64; NUM_PRIORITIES]),
}

#[derive(Clone, Debug)]
pub struct EgressScheduler {
    ets: bool,
    quantum: [u64; NUM_PRIORITIES],
    deficit: [u64; NUM_PRIORITIES],
    /// Positive-share classes in service order (highest priority first).
    rotation: Vec<usize>,
    cursor: usize,
    fresh: bool,
}

impl EgressScheduler {
    pub fn new(kind: &SchedulerKind, mtu: u32) -> Self {
        let mut quantum = [0; NUM_PRIORITIES];
        let mut rotation = Vec::new();
        let ets = match kind {
            SchedulerKind::Strict => false,
            SchedulerKind::Ets(shares) => {
                let min_share = shares
                    .iter()
                    .copied()
                    .filter(|&s| s > 0.0)
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    min_share.is_finite(),
                    "ETS needs at least one positive share"
                );
                for p in (0..NUM_PRIORITIES).rev() {
                    if shares[p] > 0.0 {
                        quantum[p] = ((shares[p] / min_share) * mtu as f64).round() as u64;
                        rotation.push(p);
                    }
                }
                true
            }
        };
        EgressScheduler {
            ets,
            quantum,
            deficit: [0; NUM_PRIORITIES],
            rotation,
            cursor: 0,
            fresh: true,
        }
    }

    pub fn is_strict(&self) -> bool {
        !self.ets
    }

    /// Picks the class to serve next. `head(p)` returns the size of the
    /// frame class `p` would send, or `None` if the class is empty or halted.
    /// The caller must send that frame when a class is returned.
    pub fn select(&mut self, head: impl Fn(usize) -> Option<u32>) -> Option<usize> {
        if !self.ets {
            return (0..NUM_PRIORITIES).rev().find(|&p| head(p).is_some());
        }
        if self.rotation.iter().any(|&p| head(p).is_some()) {
            loop {
                let p = self.rotation[self.cursor];
                match head(p) {
                    None => {
                        self.deficit[p] = 0;
                        self.advance();
                    }
                    Some(size) => {
                        if self.fresh {
                            self.deficit[p] += self.quantum[p];
                            self.fresh = false;
                        }
                        if self.deficit[p] >= size as u64 {
                            self.deficit[p] -= size as u64;
                            return Some(p);
                        }
                        self.advance();
                    }
                }
            }
        }
        // Only zero-share classes remain eligible.
        (0..NUM_PRIORITIES)
            .rev()
            .find(|&p| self.quantum[p] == 0 && head(p).is_some())
    }

    fn advance(&mut self) {
        self.cursor = (self.cursor + 1) % self.rotation.len();
        self.fresh = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_class(mice_share: f64) -> SchedulerKind {
        let mut w = [0.0; NUM_PRIORITIES];
        w[1] = mice_share;
        w[0] = 1.0 - mice_share;
        SchedulerKind::Ets(w)
    }

    #[test]
    fn strict_prefers_higher_priority() {
        let mut s = EgressScheduler::new(&SchedulerKind::Strict, 1500);
        let heads = [Some(1500), Some(200)];
        assert_eq!(s.select(|p| heads.get(p).copied().flatten()), Some(1));
        assert_eq!(s.select(|_| None), None);
    }

    #[test]
    fn strict_skips_halted_class() {
        let mut s = EgressScheduler::new(&SchedulerKind::Strict, 1500);
        // class 1 halted -> reported as not eligible
        assert_eq!(
            s.select(|p| if p == 0 { Some(1500) } else { None }),
            Some(0)
        );
    }

    /// Serves `total` bytes from saturated classes with the given frame
    /// sizes and returns bytes served per class.
    fn serve(kind: SchedulerKind, sizes: [u32; 2], total: u64) -> [u64; 2] {
        let mut s = EgressScheduler::new(&kind, 1500);
        let mut served = [0u64; 2];
        while served[0] + served[1] < total {
            let p = s
                .select(|p| if p < 2 { Some(sizes[p]) } else { None })
                .unwrap();
            served[p] += sizes[p] as u64;
        }
        served
    }

    #[test]
    fn ets_even_split_within_one_mtu() {
        let served = serve(two_class(0.5), [1500, 1500], 1 << 20);
        let total = (served[0] + served[1]) as f64;
        for s in served {
            assert!((s as f64 - total / 2.0).abs() <= 1500.0, "{served:?}");
        }
        assert!(served[0].abs_diff(1 << 19) <= 1500);
    }

    #[test]
    fn ets_ninety_ten_split() {
        let served = serve(two_class(0.9), [1500, 1500], 10 << 20);
        let frac = served[1] as f64 / (served[0] + served[1]) as f64;
        assert!((frac - 0.9).abs() < 0.002, "{frac}");
    }

    #[test]
    fn zero_share_class_only_gets_leftovers() {
        let mut s = EgressScheduler::new(&two_class(1.0), 1500);
        assert_eq!(s.select(|_| Some(1500)), Some(1));
        assert_eq!(
            s.select(|p| if p == 0 { Some(1500) } else { None }),
            Some(0)
        );
    }

    proptest! {
        // DRR fairness bound: each class stays within quantum + one frame of
        // its ideal share of everything served.
        #[test]
        fn drr_tracks_ideal_share(share in 0.1f64..0.9, a in 64u32..=1500, b in 64u32..=1500) {
            let kind = two_class(share);
            let served = serve(kind, [a, b], 2 << 20);
            let total = (served[0] + served[1]) as f64;
            let min_share = share.min(1.0 - share);
            let bound = (share.max(1.0 - share) / min_share) * 1500.0 + 1500.0;
            prop_assert!((served[1] as f64 - share * total).abs() <= bound);
        }
    }
}
