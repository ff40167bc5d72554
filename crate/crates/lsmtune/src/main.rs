use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lsmtune::bench::{compare_policies, run_benchmark, scaled_config, BenchOptions, DEFAULT_SAMPLE_EVERY};
use lsmtune::corpus;
use lsmtune::fs::{Fs, MemFs, RealFs};
use lsmtune::simulate::simulate_workload;
use lsmtune::workload::{build_named_workload, CompoundWorkload, KeyDistribution};
use lsmtune::{EngineConfig, PolicyKind, Result};
use lsmtune_core::SearchConfig;

#[derive(Parser)]
#[command(name = "lsmtune", version, about = "LSM-tree engine with adaptive compaction: benchmarks, simulation and oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a compound workload against one policy.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "arce")]
        policy: String,
    },
    /// Replay one workload against several policies.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "arce,leveling,tiering,lazy_leveling")]
        policies: Vec<String>,
    },
    /// Run a workload on the cost model alone.
    Simulate {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long, value_delimiter = ',', default_value = "arce,leveling,tiering,lazy_leveling")]
        policies: Vec<String>,
    },
    /// Compare the adaptive policy with the exhaustive optimum on tiny instances.
    Oracle {
        /// Corpus file of `[[instance]]` tables; generated when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the generated corpus here instead of evaluating it.
        #[arg(long)]
        write: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Args)]
struct WorkloadArgs {
    /// Named compound workload: I, II or III.
    #[arg(long, default_value = "I")]
    workload: String,
    /// Fraction of the full operation counts and preload size.
    #[arg(long, default_value_t = 0.01)]
    scale: f64,
    /// uniform, zipfian or latest.
    #[arg(long, default_value = "uniform")]
    distribution: String,
    /// Engine configuration TOML; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Replay threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_EVERY)]
    sample_every: u64,
    /// Directory for traces and summaries.
    #[arg(long, env = "LSMTUNE_OUT_DIR", default_value = "lsmtune-out")]
    out_dir: PathBuf,
    /// Store data files under the output directory instead of in memory.
    #[arg(long)]
    disk: bool,
}

impl WorkloadArgs {
    fn load(&self) -> Result<(EngineConfig, CompoundWorkload)> {
        let config = match &self.config {
            Some(path) => EngineConfig::load(path)?,
            None => EngineConfig::default(),
        };
        let mut workload = build_named_workload(&self.workload, self.scale)?;
        workload.distribution = KeyDistribution::parse(&self.distribution)?;
        Ok((scaled_config(&config, self.scale), workload))
    }
}

impl RunArgs {
    fn options(&self) -> BenchOptions {
        BenchOptions { seed: self.seed, sample_every: self.sample_every, workers: self.workers }
    }

    fn make_fs(&self) -> Arc<dyn Fs> {
        if self.disk {
            Arc::new(RealFs)
        } else {
            Arc::new(MemFs::new())
        }
    }
}

/// `config` running `name`, keeping the file's size ratio when it names the
/// same policy.
fn with_policy(config: &EngineConfig, name: &str) -> Result<EngineConfig> {
    let parsed = PolicyKind::parse(name)?;
    let policy = if parsed.name() == config.policy.name() { config.policy } else { parsed };
    let c = EngineConfig { policy, ..config.clone() };
    c.validate()?;
    Ok(c)
}

fn stem(workload: &CompoundWorkload, policy: &str, seed: u64) -> String {
    format!("{}-{}-seed{}", workload.name, policy, seed)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench { run, policy } => {
            let (config, workload) = run.workload.load()?;
            let config = with_policy(&config, &policy)?;
            std::fs::create_dir_all(&run.out_dir)?;
            let report = run_benchmark(run.make_fs(), &run.out_dir.join("db"), &config, &workload, &run.options())?;
            let (trace, summary) = report.write(&run.out_dir, &stem(&workload, config.policy.name(), run.seed))?;
            print!("{}", report.summary.to_key_values());
            eprintln!("wrote {} and {}", trace.display(), summary.display());
            if let Some(reason) = &report.summary.aborted {
                eprintln!("run aborted: {reason}");
            }
        }
        Command::Compare { run, policies } => {
            let (config, workload) = run.workload.load()?;
            let configs = policies.iter().map(|p| with_policy(&config, p)).collect::<Result<Vec<_>>>()?;
            std::fs::create_dir_all(&run.out_dir)?;
            let make_fs = || run.make_fs();
            let comparison = compare_policies(&make_fs, &run.out_dir.join("db"), &configs, &workload, &run.options())?;
            for report in &comparison.reports {
                report.write(&run.out_dir, &stem(&workload, &report.summary.policy, run.seed))?;
            }
            print!("{}", comparison.table());
        }
        Command::Simulate { workload, policies } => {
            let (config, w) = workload.load()?;
            for p in &policies {
                let report = simulate_workload(&with_policy(&config, p)?, &w)?;
                println!("{}", report.table());
            }
        }
        Command::Oracle { corpus: path, count, seed, write, workers } => {
            let instances = match &path {
                Some(p) => corpus::load(p)?,
                None => corpus::generate(count, seed),
            };
            if let Some(out) = write {
                corpus::save(&out, &instances)?;
                eprintln!("wrote {} instances to {}", instances.len(), out.display());
                return Ok(());
            }
            let config = SearchConfig { workers: workers.max(1), ..SearchConfig::default() };
            let summary = corpus::run_oracle_suite(&instances, &config)?;
            println!(
                "instances={} worst_ratio={:.4} mean_ratio={:.4} over_2x={} elapsed_s={:.1}",
                summary.outcomes.len(),
                summary.worst_ratio(),
                summary.mean_ratio(),
                summary.violations(2.0),
                summary.elapsed.as_secs_f64()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
