//! Scenario runs and parameter sweeps.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ConfigError, RunError, TopologyError};
use crate::exec::Execution;
use crate::fabric::Topology;
use crate::metrics::{MetricsReport, Summary};
use crate::scenario::ScenarioConfig;
use crate::traffic::{export_schedule, generate, import_schedule, Flow};

pub fn build_topology(cfg: &ScenarioConfig) -> Result<Topology, TopologyError> {
    let t = &cfg.topology;
    Topology::build_leaf_spine(
        t.leaves,
        t.spines,
        t.hosts_per_leaf,
        t.capacity_bps,
        t.prop_delay,
    )
}

/// The flow table for a run: replayed from `traffic.schedule` when set,
/// otherwise generated from the traffic section.
pub fn build_flows(cfg: &ScenarioConfig, topo: &Topology) -> Result<Vec<Flow>, RunError> {
    match &cfg.traffic.schedule {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(import_schedule(&text, cfg.isolation.boundary)?)
        }
        None => Ok(generate(&cfg.traffic_spec(), topo, cfg.sim.horizon)?),
    }
}

/// Reads a scenario file. A file that does not set `sim.name` is named
/// after its stem.
pub fn load_file(path: &Path) -> Result<ScenarioConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg = ScenarioConfig::parse(&text)?;
    if cfg.sim.name == ScenarioConfig::default().sim.name {
        if let Some(stem) = path.file_stem() {
            cfg.sim.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(cfg)
}

pub fn run(cfg: &ScenarioConfig) -> Result<MetricsReport, RunError> {
    cfg.validate()
        .map_err(|(k, m)| ConfigError::new(format!("{k}: {m}")))?;
    let topo = build_topology(cfg)?;
    let flows = build_flows(cfg, &topo)?;
    crate::sim::simulate(cfg, topo, flows)
}

/// Runs and writes all outputs plus the resolved config and flow schedule.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<MetricsReport, RunError> {
    cfg.validate()
        .map_err(|(k, m)| ConfigError::new(format!("{k}: {m}")))?;
    let topo = build_topology(cfg)?;
    let flows = build_flows(cfg, &topo)?;
    let schedule = export_schedule(&flows, cfg.isolation.boundary);
    let report = crate::sim::simulate(cfg, topo, flows)?;
    report.write_to(dir)?;
    for (name, body) in [("scenario.ini", cfg.to_ini()), ("schedule.csv", schedule)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub value: String,
    pub config: ScenarioConfig,
}

/// One config per value. Point `i` runs with seed `base_seed ^ i`.
pub fn sweep_points(
    base: &ScenarioConfig,
    param: &str,
    values: &[String],
) -> Result<Vec<SweepPoint>, ConfigError> {
    let key = param.to_ascii_lowercase();
    if !ScenarioConfig::is_sweepable(&key) {
        return Err(ConfigError::new(format!("`{param}` cannot be swept")));
    }
    if values.is_empty() {
        return Err(ConfigError::new("sweep needs at least one value"));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut c = base.clone();
            // the complementary ETS weight follows the swept one
            match key.as_str() {
                "isolation.ets.elephant" => c.isolation.ets_mice = None,
                "isolation.ets.mice" => c.isolation.ets_elephant = None,
                _ => {}
            }
            c.set(&key, v)
                .map_err(|m| ConfigError::new(format!("{key}={v}: {m}")))?;
            c.sim.seed = base.sim.seed ^ i as u64;
            c.sim.name = format!("{}-{}", base.sim.name, i);
            c.validate()
                .map_err(|(k, m)| ConfigError::new(format!("{key}={v}: {k}: {m}")))?;
            Ok(SweepPoint {
                index: i,
                value: v.clone(),
                config: c,
            })
        })
        .collect()
}

/// Runs every point; results come back in point order regardless of `exec`.
pub fn sweep(
    base: &ScenarioConfig,
    param: &str,
    values: &[String],
    exec: Execution,
    out_dir: Option<&Path>,
) -> Result<Vec<(SweepPoint, Summary)>, RunError> {
    let points = sweep_points(base, param, values)?;
    let results = exec.map(points, |p| {
        let report = match out_dir {
            Some(dir) => run_to_dir(&p.config, &dir.join(format!("point-{:03}", p.index))),
            None => run(&p.config),
        }?;
        Ok::<_, RunError>((p, report.summary))
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out_dir {
        let path = dir.join("sweep.csv");
        std::fs::write(&path, sweep_csv(param, &results)).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(results)
}

pub fn sweep_csv(param: &str, results: &[(SweepPoint, Summary)]) -> String {
    let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut out = format!(
        "index,{param},seed,mice_fct_mean_us,mice_fct_p99_us,bottleneck_utilization,pause_frames,drop_ratio,cnm_count,fb_mean\n"
    );
    for (p, s) in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{},{:.6},{},{}",
            p.index,
            p.value,
            p.config.sim.seed,
            f(s.mice_fct_mean_us),
            f(s.mice_fct_p99_us),
            s.bottleneck_utilization,
            s.pause_frames,
            s.drop_ratio,
            s.cnm_count,
            f(s.fb_mean)
        );
    }
    out
}

/// Runs independent scenarios, keeping input order.
pub fn run_batch(
    configs: Vec<ScenarioConfig>,
    exec: Execution,
) -> Vec<Result<MetricsReport, RunError>> {
    exec.map(configs, |c| run(&c))
}
