//! Closed-form PFC and QCN trigger probabilities under an M/M/1 model, and
//! Monte-Carlo oracles for them.
//!
//! Flows arrive as a Poisson process of rate `lam` with exponential sizes of
//! mean `S`; a port drains at `C`. A PFC trigger is an arrival that leaves
//! more than `K` bytes queued, i.e. a sojourn time above `K / C`:
//!
//! ```text
//! P{trigger}      = exp(-(K / S) (1 - rho))
//! P{j-hop tree}   = exp(-(n^(j-1) K + sum_{i=1}^{j-1} n^(i-1) (K + K0)) / S * (1 - rho))
//! P{rate decrease} = P{tau < E[S] / r}
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::ModelError;
use crate::exec::Execution;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// PFC threshold, bytes.
    pub k: f64,
    /// Headroom above K, bytes.
    pub k0: f64,
    /// Mean flow size, bytes.
    pub s: f64,
    pub rho: f64,
    /// Ingress ports feeding one egress.
    pub n: f64,
    /// Flow arrival rate, 1/s.
    pub lam: f64,
    /// Link capacity, bits/s.
    pub c: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            k: 25_057.0,
            k0: 49_152.0 - 25_057.0,
            s: 2048.0,
            rho: 0.2,
            n: 32.0,
            lam: 0.0,
            c: 10e9,
        }
    }
}

fn check(p: &ModelParams) -> Result<(), ModelError> {
    if !(p.rho > 0.0 && p.rho < 1.0) {
        return Err(ModelError::Unstable(p.rho));
    }
    if !(p.s > 0.0) || !(p.k >= 0.0) || !(p.k0 >= 0.0) {
        return Err(ModelError::Invalid("need S > 0, K >= 0 and K0 >= 0".into()));
    }
    Ok(())
}

pub fn pfc_trigger_probability(p: &ModelParams) -> Result<f64, ModelError> {
    check(p)?;
    Ok((-(p.k / p.s) * (1.0 - p.rho)).exp())
}

/// Probability that PFC fires simultaneously along a `j`-hop tree of
/// fan-in `n`.
pub fn congestion_tree_probability(p: &ModelParams, j: u32) -> Result<f64, ModelError> {
    check(p)?;
    if j == 0 {
        return Err(ModelError::Invalid("hop count j must be at least 1".into()));
    }
    if !(p.n >= 1.0) {
        return Err(ModelError::Invalid(
            "port count n must be at least 1".into(),
        ));
    }
    let mut bytes = p.n.powi(j as i32 - 1) * p.k;
    let mut sum = 0.0;
    for i in 1..j {
        sum += p.n.powi(i as i32 - 1) * (p.k + p.k0);
    }
    bytes += sum;
    Ok((-(bytes / p.s) * (1.0 - p.rho)).exp())
}

/// Interarrival-time distribution of flows at a congestion point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Interarrival {
    Exponential { rate: f64 },
    Deterministic { period: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Interarrival {
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Interarrival::Exponential { rate } => 1.0 - (-rate * t).exp(),
            Interarrival::Deterministic { period } => {
                if t > period {
                    1.0
                } else {
                    0.0
                }
            }
            Interarrival::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }
}

/// `P{tau < E[S] / r}` for queue growth rate `r` (bytes/s).
pub fn rate_decrease_probability(
    mean_size: f64,
    r: f64,
    tau: &Interarrival,
) -> Result<f64, ModelError> {
    if !(r > 0.0) {
        return Err(ModelError::Invalid("growth rate r must be positive".into()));
    }
    if r.is_infinite() {
        return Ok(0.0);
    }
    Ok(tau.cdf(mean_size / r))
}

/// `P{tau < S / r}` averaged over exponential sizes with exponential
/// interarrivals of rate `lam`: `lam E[S] / (r + lam E[S])`.
pub fn rate_decrease_probability_exp_sizes(
    lam: f64,
    mean_size: f64,
    r: f64,
) -> Result<f64, ModelError> {
    if !(r > 0.0) {
        return Err(ModelError::Invalid("growth rate r must be positive".into()));
    }
    let x = lam * mean_size;
    Ok(x / (r + x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
    /// 95% confidence interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn covers(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    /// Student-t interval over independent replication means.
    fn from_replications(means: &[f64], samples: u64) -> Estimate {
        let k = means.len() as f64;
        let value = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - value).powi(2)).sum::<f64>() / (k - 1.0);
        let std_err = (var / k).sqrt();
        let t = StudentsT::new(0.0, 1.0, k - 1.0)
            .unwrap()
            .inverse_cdf(0.975);
        Estimate {
            value,
            std_err,
            ci_low: (value - t * std_err).max(0.0),
            ci_high: (value + t * std_err).min(1.0),
            samples,
        }
    }
}

/// Independent replications per estimate; fixed so results do not depend on
/// the thread count.
pub const REPLICATIONS: u64 = 32;

/// Fraction of arrivals to an M/M/1 queue that leave more than `k` bytes of
/// work in the system. Each replication starts from an exact stationary
/// draw, so replication means are unbiased and independent.
pub fn mm1_monte_carlo(
    lam: f64,
    mu: f64,
    k: f64,
    mean_size: f64,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<Estimate, ModelError> {
    if !(lam >= 0.0 && mu > 0.0 && mean_size > 0.0) {
        return Err(ModelError::Invalid(
            "need lam >= 0, mu > 0, mean size > 0".into(),
        ));
    }
    if lam >= mu {
        return Err(ModelError::Overloaded { lam, mu });
    }
    if samples < REPLICATIONS {
        return Err(ModelError::Invalid(format!(
            "need at least {REPLICATIONS} samples"
        )));
    }
    if lam == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            std_err: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            samples,
        });
    }
    let rho = lam / mu;
    let per = samples / REPLICATIONS;
    let means = exec.map((0..REPLICATIONS).collect(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let size = Exp::new(1.0 / mean_size).unwrap();
        // bytes drained between arrivals
        let gap = Exp::new(rho / mean_size).unwrap();
        // stationary waiting work: 0 w.p. 1 - rho, else Exp((1 - rho) / S)
        let mut w = if rng.random::<f64>() < rho {
            Exp::new((1.0 - rho) / mean_size).unwrap().sample(&mut rng)
        } else {
            0.0
        };
        let mut hits = 0u64;
        for _ in 0..per {
            let v = w + size.sample(&mut rng);
            if v > k {
                hits += 1;
            }
            w = (v - gap.sample(&mut rng)).max(0.0);
        }
        hits as f64 / per as f64
    });
    Ok(Estimate::from_replications(&means, per * REPLICATIONS))
}

/// Samples `(tau, S)` with exponential interarrivals and sizes and counts
/// `tau < S / r`.
pub fn rate_decrease_monte_carlo(
    lam: f64,
    mean_size: f64,
    r: f64,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<Estimate, ModelError> {
    if !(lam > 0.0 && mean_size > 0.0 && r > 0.0) {
        return Err(ModelError::Invalid(
            "need lam, mean size and r positive".into(),
        ));
    }
    let per = samples / REPLICATIONS;
    let means = exec.map((0..REPLICATIONS).collect(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let tau = Exp::new(lam).unwrap();
        let size = Exp::new(1.0 / mean_size).unwrap();
        let hits = (0..per)
            .filter(|_| tau.sample(&mut rng) < size.sample(&mut rng) / r)
            .count();
        hits as f64 / per as f64
    });
    Ok(Estimate::from_replications(&means, per * REPLICATIONS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eq1_published_value() {
        let p = pfc_trigger_probability(&ModelParams::default()).unwrap();
        assert_eq!(format!("{p:.2e}"), "5.61e-5");
    }

    #[test]
    fn zero_threshold_always_triggers() {
        let p = ModelParams {
            k: 0.0,
            ..ModelParams::default()
        };
        assert_eq!(pfc_trigger_probability(&p).unwrap(), 1.0);
    }

    #[test]
    fn unstable_load_rejected() {
        for rho in [1.0, 1.5, 0.0] {
            let p = ModelParams {
                rho,
                ..ModelParams::default()
            };
            assert!(pfc_trigger_probability(&p).is_err());
            assert!(congestion_tree_probability(&p, 1).is_err());
        }
    }

    #[test]
    fn tree_reduces_and_collapses() {
        let p = ModelParams::default();
        assert_eq!(
            congestion_tree_probability(&p, 1).unwrap(),
            pfc_trigger_probability(&p).unwrap()
        );
        let two = congestion_tree_probability(&p, 2).unwrap();
        assert!(two < 1e-130, "{two:e}");
        let mut prev = 1.0;
        for j in 1..6 {
            let v = congestion_tree_probability(
                &ModelParams {
                    k: 2000.0,
                    n: 2.0,
                    ..p
                },
                j,
            )
            .unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn eq1_monotone() {
        let base = ModelParams::default();
        let f = |p: ModelParams| pfc_trigger_probability(&p).unwrap();
        assert!(
            f(ModelParams {
                k: base.k * 1.1,
                ..base
            }) < f(base)
        );
        assert!(
            f(ModelParams {
                s: base.s * 1.1,
                ..base
            }) > f(base)
        );
        assert!(f(ModelParams { rho: 0.3, ..base }) > f(base));
    }

    #[test]
    fn rate_decrease_forms() {
        let tau = Interarrival::Exponential { rate: 1e5 };
        assert_eq!(
            rate_decrease_probability(2048.0, f64::INFINITY, &tau).unwrap(),
            0.0
        );
        assert_relative_eq!(
            rate_decrease_probability(2048.0, 1e9, &tau).unwrap(),
            1.0 - (-1e5 * 2048.0 / 1e9f64).exp()
        );
        assert_relative_eq!(
            rate_decrease_probability_exp_sizes(1e5, 2048.0, 1e9).unwrap(),
            204.8e6 / (1e9 + 204.8e6)
        );
        assert!(rate_decrease_probability(1.0, 0.0, &tau).is_err());
        let d = Interarrival::Deterministic { period: 1e-6 };
        assert_eq!(rate_decrease_probability(2000.0, 1e9, &d).unwrap(), 1.0);
        assert_eq!(rate_decrease_probability(500.0, 1e9, &d).unwrap(), 0.0);
    }

    #[test]
    fn mm1_idle_queue() {
        let e = mm1_monte_carlo(0.0, 1.0, 10.0, 1.0, 1000, 1, Execution::Sequential).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(mm1_monte_carlo(2.0, 1.0, 10.0, 1.0, 1000, 1, Execution::Sequential).is_err());
    }

    #[test]
    fn mm1_half_probability_point() {
        // K chosen so the closed form is exactly 1/2
        let (rho, s) = (0.5, 2048.0);
        let k = s * std::f64::consts::LN_2 / (1.0 - rho);
        let p = ModelParams {
            k,
            s,
            rho,
            ..ModelParams::default()
        };
        assert_relative_eq!(pfc_trigger_probability(&p).unwrap(), 0.5, epsilon = 1e-12);
        let e = mm1_monte_carlo(rho, 1.0, k, s, 1_000_000, 7, Execution::Parallel).unwrap();
        assert!((e.value - 0.5).abs() < 3.0 * e.std_err, "{e:?}");
    }

    #[test]
    fn execution_mode_does_not_change_estimates() {
        let a =
            mm1_monte_carlo(0.3, 1.0, 5000.0, 1000.0, 64_000, 3, Execution::Sequential).unwrap();
        let b = mm1_monte_carlo(0.3, 1.0, 5000.0, 1000.0, 64_000, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
