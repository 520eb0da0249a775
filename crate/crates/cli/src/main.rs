use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use matchlearn::analytics::Analysis;
use matchlearn::eval::{self, BatchConfig, BatchResult};
use matchlearn::market::{run_simulation, SimConfig};
use matchlearn::policies::PolicyKind;
use matchlearn::{generate_instance, GenConfig, Instance};

#[derive(Parser)]
#[command(name = "matchlearn", version, about = "Matching while learning: analytics and marketplace simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as JSON.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance index under the seed.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 3)]
        worker_types: usize,
        #[arg(long, default_value_t = 3)]
        job_types: usize,
        #[arg(long = "N", default_value_t = 30)]
        lifetime: u32,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the known-types plan and print the learning structure.
    Analyze {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Run one simulation and print its metrics.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_parser = parse_policy)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sim: SimArgs,
        /// Write the per-period trace as CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every policy on a batch of random instances.
    Batch {
        #[arg(long, default_value_t = 100)]
        n: u64,
        /// Run the full 350-instance batch.
        #[arg(long)]
        full: bool,
        /// `all` or a comma-separated list.
        #[arg(long, default_value = "all")]
        policies: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Summarize a batch CSV as JSON.
    Report {
        results: PathBuf,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regret scaling in the lifetime N on an instance with C > 0.
    Scaling {
        /// Comma-separated lifetimes.
        #[arg(long = "N", default_value = "30,100,300", value_delimiter = ',')]
        lifetimes: Vec<u32>,
        /// Instance file; the built-in difficult instance if omitted.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_parser = parse_policy, default_value = "deem")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 4)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 900.0)]
        tau: f64,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long = "T", default_value_t = 150)]
    periods: u32,
    #[arg(long, default_value_t = 900.0)]
    tau: f64,
    #[arg(long = "B", default_value_t = 10_000)]
    buffer: u32,
    #[arg(long = "W", default_value_t = 200)]
    window: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Burn-in periods before measurement [default: 3N]
    #[arg(long)]
    warmup: Option<u32>,
    /// Exploit for the running MAP estimate instead of the confirmed label.
    #[arg(long)]
    map_tracking: bool,
    /// Send workers facing an empty queue to their best available job.
    #[arg(long)]
    cascade: bool,
}

impl SimArgs {
    fn config(&self, policy: PolicyKind, seed: u64) -> SimConfig {
        SimConfig {
            periods: self.periods,
            tau: self.tau,
            buffer: self.buffer,
            window: self.window,
            eps_tol: self.eps,
            seed,
            stream: 0,
            policy,
            map_tracking: self.map_tracking,
            cascade: self.cascade,
            warmup: self.warmup,
            trace: false,
        }
    }
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: matchlearn::Error| e.to_string())
}

fn parse_policies(s: &str) -> Result<Vec<PolicyKind>> {
    if s == "all" {
        return Ok(PolicyKind::COMPARED.to_vec());
    }
    s.split(',').map(|p| Ok(p.trim().parse::<PolicyKind>()?)).collect()
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Generate { seed, index, worker_types, job_types, lifetime, out } => {
            let cfg = GenConfig {
                n_worker_types: worker_types,
                n_job_types: job_types,
                lifetime,
                ..GenConfig::with_seed(seed)
            };
            let inst = generate_instance(&cfg, index);
            emit(out.as_deref(), &(inst.to_json() + "\n"))?;
        }
        Command::Analyze { instance } => {
            let inst = read_instance(&instance)?;
            let analysis = Analysis::new(&inst)?;
            emit(None, &json(&analysis.report())?)?;
        }
        Command::Simulate { instance, policy, seed, sim, trace } => {
            let inst = read_instance(&instance)?;
            let cfg = SimConfig { trace: trace.is_some(), ..sim.config(policy, seed) };
            let mut metrics = run_simulation(&inst, &cfg)?;
            if let Some(path) = trace {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                metrics.write_trace_csv(io::BufWriter::new(file))?;
                metrics.trace = None;
            }
            emit(None, &json(&metrics)?)?;
        }
        Command::Batch { n, full, policies, seed, out, sim } => {
            let n = if full { 350 } else { n };
            let policies = parse_policies(&policies)?;
            let mut cfg = BatchConfig::new(n, policies, seed);
            cfg.sim = sim.config(PolicyKind::DeemPlus, seed);
            let result = eval::run_batch(&cfg)?;
            if !result.skipped.is_empty() {
                info!("skipped instances {:?}", result.skipped);
            }
            fs::write(&out, result.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            info!("wrote {} rows to {}", result.rows.len(), out.display());
        }
        Command::Report { results, out } => {
            let text = fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let batch = BatchResult::from_csv(&text)?;
            if batch.rows.is_empty() {
                bail!("{} has no rows", results.display());
            }
            emit(out.as_deref(), &json(&eval::report(&batch))?)?;
        }
        Command::Scaling { lifetimes, instance, policy, replicates, seed, tau } => {
            let inst = match instance {
                Some(p) => read_instance(&p)?,
                None => eval::difficult_instance(30),
            };
            let sim = SimConfig { seed, tau, ..SimConfig::default() };
            let points = eval::scaling_probe(&inst, policy, &lifetimes, replicates, &sim)?;
            emit(None, &json(&points)?)?;
        }
    }
    Ok(())
}
