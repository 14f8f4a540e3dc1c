use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use isosim::analytics::{
    congestion_tree_probability, mm1_monte_carlo, pfc_trigger_probability,
    rate_decrease_monte_carlo, rate_decrease_probability, rate_decrease_probability_exp_sizes,
    Interarrival, ModelParams,
};
use isosim::error::{ConfigError, RunError};
use isosim::exec::Execution;
use isosim::experiment::{load_file, run_to_dir, sweep, sweep_csv};
use isosim::scenario::{bytes, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Packet-level leaf-spine simulator for PFC/QCN flow isolation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its outputs.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: `sim.out` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulated time in milliseconds.
        #[arg(long)]
        horizon: Option<f64>,
        /// Override a config key, e.g. `--set flow_control.qcn=off`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Run points one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Evaluate the closed-form trigger probabilities.
    Model(ModelArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Tau {
    Exp,
    Det,
    Uniform,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// 1: PFC trigger, 2: j-hop congestion tree, 3: QCN rate decrease.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    eq: u8,
    /// PFC threshold (bytes, or with KB/B suffix).
    #[arg(long = "K", alias = "k", default_value = "24.47KB")]
    k: String,
    /// Headroom; defaults to 48KB minus K.
    #[arg(long = "K0", alias = "k0")]
    k0: Option<String>,
    /// Mean flow size.
    #[arg(long = "S", alias = "s", default_value = "2KB")]
    s: String,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    /// Ingress ports per egress.
    #[arg(long, default_value_t = 32.0)]
    n: f64,
    /// Hop counts for the tree form, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    j: Vec<u32>,
    /// Arrival rate (1/s) for the rate-decrease form.
    #[arg(long, default_value_t = 1e5)]
    lambda: f64,
    /// Rate growth between notifications (bytes/s).
    #[arg(long, default_value_t = 1.25e8)]
    r: f64,
    #[arg(long, value_enum, default_value_t = Tau::Exp)]
    tau: Tau,
    /// Comma-separated `name=value` list (K, K0, S, rho, n, j, lambda, r);
    /// overrides the individual flags. `j` takes `;`-separated hops.
    #[arg(long)]
    params: Option<String>,
    /// Also estimate by Monte Carlo with this many samples.
    #[arg(long, alias = "oracle-samples")]
    monte_carlo: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn config_error(msg: String) -> anyhow::Error {
    RunError::Config(ConfigError::new(msg)).into()
}

fn apply_overrides(cfg: &mut ScenarioConfig, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(config_error(format!("--set expects KEY=VALUE, got `{o}`")));
        };
        cfg.set(k, v)
            .map_err(|m| config_error(format!("--set {k}: {m}")))?;
    }
    Ok(())
}

fn load(
    path: &Path,
    seed: Option<u64>,
    horizon: Option<f64>,
    overrides: &[String],
) -> Result<ScenarioConfig> {
    let mut cfg = load_file(path).map_err(|e| match e {
        RunError::Config(c) => {
            anyhow::Error::new(RunError::Config(c)).context(path.display().to_string())
        }
        other => anyhow::Error::new(other),
    })?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    if let Some(ms) = horizon {
        cfg.set("sim.horizon", &format!("{ms}ms"))
            .map_err(|m| config_error(format!("--horizon: {m}")))?;
    }
    apply_overrides(&mut cfg, overrides)?;
    cfg.validate()
        .map_err(|(k, m)| config_error(format!("{k}: {m}")))?;
    Ok(cfg)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    horizon: Option<f64>,
    out: Option<PathBuf>,
    overrides: &[String],
) -> Result<()> {
    let cfg = load(config, seed, horizon, overrides)?;
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.sim.out));
    let report = run_to_dir(&cfg, &dir)?;
    let s = &report.summary;
    println!("scenario            {}", s.scenario);
    println!("events              {}", s.events);
    println!(
        "mice fct mean/p99   {} / {} us",
        fmt_opt(s.mice_fct_mean_us),
        fmt_opt(s.mice_fct_p99_us)
    );
    println!(
        "bottleneck util     {:.4} ({})",
        s.bottleneck_utilization, s.bottleneck_link
    );
    if let Some(v) = s.victim_utilization {
        println!("victim uplink util  {v:.4}");
    }
    println!("pause frames        {}", s.pause_frames);
    println!(
        "cnm / mean fb       {} / {}",
        s.cnm_count,
        fmt_opt(s.fb_mean)
    );
    println!("drop ratio          {:.5}", s.drop_ratio);
    println!(
        "conservation        {}",
        if s.conservation_ok { "ok" } else { "VIOLATED" }
    );
    println!("outputs             {}", dir.display());
    Ok(())
}

fn apply_params(a: &mut ModelArgs) -> Result<()> {
    let Some(list) = a.params.take() else {
        return Ok(());
    };
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((name, v)) = item.split_once('=') else {
            bail!("--params expects name=value, got `{item}`")
        };
        let num = || {
            v.parse::<f64>()
                .with_context(|| format!("--params {name}: `{v}` is not a number"))
        };
        match name.trim() {
            "K" | "k" => a.k = v.to_string(),
            "K0" | "k0" => a.k0 = Some(v.to_string()),
            "S" | "s" => a.s = v.to_string(),
            "rho" => a.rho = num()?,
            "n" => a.n = num()?,
            "lambda" => a.lambda = num()?,
            "r" => a.r = num()?,
            "j" => {
                a.j = v
                    .split(';')
                    .map(|x| {
                        x.trim()
                            .parse::<u32>()
                            .with_context(|| format!("--params j: `{x}`"))
                    })
                    .collect::<Result<_>>()?
            }
            other => bail!("--params: unknown parameter `{other}`"),
        }
    }
    Ok(())
}

fn model(mut a: ModelArgs) -> Result<()> {
    apply_params(&mut a)?;
    let a = &a;
    let k = bytes(&a.k).map_err(anyhow::Error::msg)? as f64;
    let s = bytes(&a.s).map_err(anyhow::Error::msg)? as f64;
    let k0 = match &a.k0 {
        Some(v) => bytes(v).map_err(anyhow::Error::msg)? as f64,
        None => (48.0 * 1024.0 - k).max(0.0),
    };
    let p = ModelParams {
        k,
        k0,
        s,
        rho: a.rho,
        n: a.n,
        ..ModelParams::default()
    };
    match a.eq {
        1 => {
            let v = pfc_trigger_probability(&p)?;
            println!("eq,K_bytes,S_bytes,rho,P,P_exact");
            println!("1,{k},{s},{},{v:.2e},{v:e}", a.rho);
            if let Some(n) = a.monte_carlo {
                // unit drain rate in bytes: mu = 1 / S flows per byte, lam = rho mu
                let est =
                    mm1_monte_carlo(a.rho / s, 1.0 / s, k, s, n, a.seed, Execution::Parallel)?;
                println!(
                    "# monte carlo {} samples: {:.4e} [{:.4e}, {:.4e}]",
                    est.samples, est.value, est.ci_low, est.ci_high
                );
            }
        }
        2 => {
            println!("eq,j,K_bytes,K0_bytes,S_bytes,rho,n,P,P_exact");
            for &j in &a.j {
                let v = congestion_tree_probability(&p, j)?;
                println!("2,{j},{k},{k0},{s},{},{},{v:.2e},{v:e}", a.rho, a.n);
            }
        }
        _ => {
            let tau = match a.tau {
                Tau::Exp => Interarrival::Exponential { rate: a.lambda },
                Tau::Det => Interarrival::Deterministic {
                    period: 1.0 / a.lambda,
                },
                Tau::Uniform => Interarrival::Uniform {
                    lo: 0.0,
                    hi: 2.0 / a.lambda,
                },
            };
            let v = rate_decrease_probability(s, a.r, &tau)?;
            println!("eq,lambda,S_bytes,r,P,P_exp_sizes");
            let exp_sizes = rate_decrease_probability_exp_sizes(a.lambda, s, a.r)?;
            println!("3,{},{s},{},{v:.3e},{exp_sizes:.3e}", a.lambda, a.r);
            if let Some(n) = a.monte_carlo {
                let est =
                    rate_decrease_monte_carlo(a.lambda, s, a.r, n, a.seed, Execution::Parallel)?;
                println!(
                    "# monte carlo {} samples: {:.4e} [{:.4e}, {:.4e}]",
                    est.samples, est.value, est.ci_low, est.ci_high
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            config,
            seed,
            horizon,
            out,
            overrides,
        } => cmd_run(&config, seed, horizon, out, &overrides),
        Cmd::Sweep {
            config,
            param,
            values,
            seed,
            out,
            horizon,
            overrides,
            sequential,
        } => (|| {
            let cfg = load(&config, seed, horizon, &overrides)?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.sim.out));
            let results = sweep(&cfg, &param, &values, exec, Some(&dir))?;
            print!("{}", sweep_csv(&param, &results));
            Ok(())
        })(),
        Cmd::Model(a) => model(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .downcast_ref::<RunError>()
                .is_some_and(|r| matches!(r, RunError::Config(_)));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
