//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use isosim::analytics::{
    congestion_tree_probability, mm1_monte_carlo, pfc_trigger_probability,
    rate_decrease_monte_carlo, rate_decrease_probability_exp_sizes, ModelParams,
};
use isosim::exec::Execution;
use isosim::experiment::{load_file, run_to_dir};
use isosim::metrics::Summary;
use isosim::scenario::ScenarioConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn(&BTreeMap<String, Stock>) -> Outcome;

struct Stock {
    config: ScenarioConfig,
    summary: Summary,
    json: [Vec<u8>; 2],
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run_stock() -> BTreeMap<String, Stock> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ini"))
        .collect();
    paths.sort();
    let tmp = tempfile::tempdir().unwrap();
    let jobs: Vec<(PathBuf, usize)> = paths
        .iter()
        .flat_map(|p| [(p.clone(), 0), (p.clone(), 1)])
        .collect();
    let results = Execution::Parallel.map(jobs, |(path, rep)| {
        let cfg = load_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let dir = tmp.path().join(format!("{}-{rep}", cfg.sim.name));
        let t = Instant::now();
        let report = run_to_dir(&cfg, &dir).unwrap_or_else(|e| panic!("{}: {e}", cfg.sim.name));
        eprintln!(
            "  ran {:<28} #{rep} in {:>5.1}s",
            cfg.sim.name,
            t.elapsed().as_secs_f64()
        );
        let json = std::fs::read(dir.join("summary.json")).unwrap();
        (cfg, report.summary, json)
    });
    let mut out: BTreeMap<String, Stock> = BTreeMap::new();
    for (cfg, summary, json) in results {
        match out.get_mut(&cfg.sim.name) {
            Some(s) => s.json[1] = json,
            None => {
                let name = cfg.sim.name.clone();
                out.insert(
                    name,
                    Stock {
                        config: cfg,
                        summary,
                        json: [json, Vec::new()],
                    },
                );
            }
        }
    }
    out
}

fn c1() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(["model", "--eq", "1", "--params", "K=24.47KB,S=2KB,rho=0.2"])
        .output()
        .expect("running sim");
    let text = String::from_utf8_lossy(&out.stdout);
    let p = text
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(4))
        .unwrap_or("")
        .to_string();
    outcome(
        out.status.success() && p == "5.61e-5",
        format!("sim model --eq 1 prints P = {p}"),
    )
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    ModelParams {
        k: rng.random_range(1_000.0..100_000.0),
        k0: rng.random_range(0.0..50_000.0),
        s: rng.random_range(500.0..20_000.0),
        rho: rng.random_range(0.01..0.95),
        n: rng.random_range(1..64) as f64,
        ..ModelParams::default()
    }
}

fn c2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let exact = (0..100)
        .filter(|_| {
            let p = random_params(&mut rng);
            congestion_tree_probability(&p, 1).unwrap().to_bits()
                == pfc_trigger_probability(&p).unwrap().to_bits()
        })
        .count();
    let j2 = congestion_tree_probability(&ModelParams::default(), 2).unwrap();
    outcome(
        exact == 100 && j2 < 1e-100,
        format!("j=1 identical in {exact}/100 sets; j=2 at n=32 gives {j2:.3e}"),
    )
}

fn c3() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut covered = 0;
    for i in 0..20 {
        let rho = rng.random_range(0.1..0.8);
        let s: f64 = rng.random_range(1_000.0..8_000.0);
        let target = 10f64.powf(rng.random_range(-3.0..0.5f64.log10()));
        let k = -target.ln() * s / (1.0 - rho);
        let p = ModelParams {
            k,
            s,
            rho,
            ..ModelParams::default()
        };
        let closed = pfc_trigger_probability(&p).unwrap();
        let est = mm1_monte_carlo(
            rho / s,
            1.0 / s,
            k,
            s,
            4_000_000,
            100 + i,
            Execution::Parallel,
        )
        .unwrap();
        if est.covers(closed) {
            covered += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        covered >= 18 && secs <= 120.0,
        format!("CI covers closed form in {covered}/20 sets, {secs:.1}s"),
    )
}

fn c4() -> Outcome {
    let (lam, s, r) = (1e5, 2048.0, 1.25e8);
    let exact = rate_decrease_probability_exp_sizes(lam, s, r).unwrap();
    let est = rate_decrease_monte_carlo(lam, s, r, 1_000_000, 4, Execution::Parallel).unwrap();
    let z = (est.value - exact).abs() / est.std_err;
    let lams = [1e3, 1e4, 1e5, 1e6, 1e7];
    let sizes = [256.0, 1024.0, 4096.0, 16384.0, 65536.0];
    let rs = [1e7, 1e8, 1e9, 1e10, 1e11];
    let f = |a: usize, b: usize, c: usize| {
        rate_decrease_probability_exp_sizes(lams[a], sizes[b], rs[c]).unwrap()
    };
    let mut monotone = true;
    for a in 0..5 {
        for b in 0..5 {
            for c in 0..5 {
                let v = f(a, b, c);
                monotone &= a == 0 || f(a - 1, b, c) < v;
                monotone &= b == 0 || f(a, b - 1, c) < v;
                monotone &= c == 0 || f(a, b, c - 1) > v;
            }
        }
    }
    outcome(
        z <= 2.0 && monotone,
        format!(
            "estimate {:.5} vs {exact:.5} ({z:.2} sigma); monotone over 5x5x5 grid: {monotone}",
            est.value
        ),
    )
}

fn fct(s: &BTreeMap<String, Stock>, name: &str) -> f64 {
    s[name].summary.mice_fct_mean_us.unwrap_or(f64::NAN)
}

fn c5(s: &BTreeMap<String, Stock>) -> Outcome {
    let x = &s["many-to-one-mice-pfc"];
    let horizon = x.summary.horizon_us / 1e6;
    outcome(
        x.summary.pause_frames == 0 && horizon >= 1.0,
        format!("{} PAUSE frames over {horizon}s", x.summary.pause_frames),
    )
}

fn c6(s: &BTreeMap<String, Stock>) -> Outcome {
    let v = s["head-of-line"]
        .summary
        .victim_utilization
        .unwrap_or(f64::NAN);
    let b = s["head-of-line-baseline"]
        .summary
        .victim_utilization
        .unwrap_or(f64::NAN);
    outcome(
        (0.25..=0.55).contains(&v) && b >= 0.95,
        format!("victim uplinks {v:.3} with incast, {b:.3} without"),
    )
}

fn c7(s: &BTreeMap<String, Stock>) -> Outcome {
    let (iso, mice, mixed) = (
        fct(s, "isolation-strict"),
        fct(s, "many-to-one-mice-both"),
        fct(s, "many-to-one-mixed-both"),
    );
    let ui = s["isolation-strict"].summary.bottleneck_utilization;
    let um = s["many-to-one-mixed-both"].summary.bottleneck_utilization;
    let fct_ok = iso <= mice * 1.2 && mice * 1.2 < mixed * 0.5;
    let util_ok = ui >= 0.95 && ui > um;
    outcome(
        fct_ok && util_ok,
        format!(
            "FCT isolated {iso:.1} / mice-only {mice:.1} / mixed {mixed:.1} us ({}); utilization isolated {ui:.3} vs mixed {um:.3} ({})",
            if fct_ok { "ok" } else { "violated" },
            if util_ok { "ok" } else { "violated" }
        ),
    )
}

fn c8(s: &BTreeMap<String, Stock>) -> Outcome {
    let m = &s["many-to-one-mixed-qcn"].summary;
    let e = &s["many-to-one-elephant-qcn"].summary;
    let ratio = m.fb_mean.unwrap_or(0.0) / e.fb_mean.unwrap_or(f64::NAN);
    let share = m.mice_share_at_cnm.unwrap_or(f64::NAN);
    outcome(
        m.drop_ratio >= 0.01 && ratio >= 4.0 && (0.10..=0.40).contains(&share),
        format!("drop ratio {:.4}; Fb {:.2} vs elephant-only {:.2} (x{ratio:.2}); mice share at CNM {share:.3}",
            m.drop_ratio, m.fb_mean.unwrap_or(f64::NAN), e.fb_mean.unwrap_or(f64::NAN)),
    )
}

fn c9(s: &BTreeMap<String, Stock>) -> Outcome {
    let shares = ["0", "0.1", "0.2", "0.3", "0.4", "0.5"];
    let f: Vec<f64> = shares
        .iter()
        .map(|x| fct(s, &format!("isolation-ets-{x}")))
        .collect();
    let strict = fct(s, "isolation-strict");
    let nondecreasing = f.windows(2).all(|w| w[0] <= w[1]);
    let strict_increase = f.windows(2).any(|w| w[0] < w[1]);
    let dominated = f.iter().all(|&x| strict <= x);
    let list: Vec<String> = f.iter().map(|x| format!("{x:.2}")).collect();
    outcome(
        nondecreasing && strict_increase && dominated,
        format!(
            "ETS FCT [{}] us; strict priority {strict:.2} us",
            list.join(", ")
        ),
    )
}

fn c10(s: &BTreeMap<String, Stock>) -> Outcome {
    let pairs = [
        ("QCN", "isolation-strict", "many-to-one-mixed-both"),
        ("TCP", "transport-tcp", "transport-tcp-mixed"),
        ("DCTCP", "transport-dctcp", "transport-dctcp-mixed"),
    ];
    let iso: Vec<f64> = pairs.iter().map(|p| fct(s, p.1)).collect();
    let lo = iso.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = iso.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    let mut ok = spread <= 0.10;
    let mut parts = Vec::new();
    for (p, &i) in pairs.iter().zip(&iso) {
        let m = fct(s, p.2);
        ok &= m >= 2.0 * i;
        parts.push(format!("{} {i:.1}/{m:.1}", p.0));
    }
    outcome(
        ok,
        format!(
            "isolated/mixed FCT us: {}; isolated spread {:.1}%",
            parts.join(", "),
            spread * 100.0
        ),
    )
}

fn c11(s: &BTreeMap<String, Stock>) -> Outcome {
    let checked: Vec<&Stock> = s.values().filter(|x| x.config.mice_pfc()).collect();
    let bad: Vec<String> = checked
        .iter()
        .filter(|x| x.summary.mice_frames_dropped > 0)
        .map(|x| format!("{} ({})", x.config.sim.name, x.summary.mice_frames_dropped))
        .collect();
    outcome(
        bad.is_empty(),
        format!(
            "{} scenarios with PFC on mice; mice drops in: [{}]",
            checked.len(),
            bad.join(", ")
        ),
    )
}

fn c12(s: &BTreeMap<String, Stock>) -> Outcome {
    let bad: Vec<&str> = s
        .values()
        .filter(|x| x.json[0] != x.json[1] || x.json[0].is_empty())
        .map(|x| x.config.sim.name.as_str())
        .collect();
    outcome(
        bad.is_empty(),
        format!(
            "{} scenarios run twice; differing summary.json: [{}]",
            s.len(),
            bad.join(", ")
        ),
    )
}

fn c13(s: &BTreeMap<String, Stock>) -> Outcome {
    let bad: Vec<&str> = s
        .values()
        .filter(|x| !x.summary.conservation_ok)
        .map(|x| x.config.sim.name.as_str())
        .collect();
    outcome(
        bad.is_empty(),
        format!(
            "{} scenarios; conservation violated in: [{}]",
            s.len(),
            bad.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Outcome)> = vec![(1, c1()), (2, c2()), (3, c3()), (4, c4())];
    eprintln!("running stock scenarios...");
    let stock = run_stock();
    let checks: [(u32, Check); 9] = [
        (5, c5),
        (6, c6),
        (7, c7),
        (8, c8),
        (9, c9),
        (10, c10),
        (11, c11),
        (12, c12),
        (13, c13),
    ];
    for (n, f) in checks {
        results.push((n, f(&stock)));
    }
    let mut failed = 0;
    for (n, o) in &results {
        println!(
            "criterion {n:>2}: {}  {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
