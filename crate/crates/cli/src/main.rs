use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use refprint::bridge::conformance::{run_conformance, ConformanceOptions};
use refprint::bridge::{echo, BridgeEndpoint, Transport};
use refprint::experiment::runner::output_dir;
use refprint::experiment::{cmd_analyze, cmd_attack, cmd_generate, cmd_verify, Experiment, ExperimentConfig, RunManifest};
use refprint::generator::GeneratorParams;
use refprint::Modality;

/// Program name that stands for this executable in bridge endpoints.
const SELF_PROGRAM: &str = "@self";

#[derive(Parser)]
#[command(name = "refprint", version)]
#[command(about = "Fingerprint generative models by iterative re-generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides the config's output_dir
    #[arg(long)]
    output: Option<PathBuf>,

    /// Overrides the config's master_seed
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate initial content and K re-generation steps per model
    Generate(RunArgs),
    /// Ratio-test precision/recall for every ordered model pair
    Verify(RunArgs),
    /// Convergence curves, one-step densities and Lipschitz estimates
    Analyze(RunArgs),
    /// Perturbation, paraphrase and natural-content sweeps
    Attack(RunArgs),
    /// Run the protocol conformance suite against a bridge back-end
    BridgeCheck(BridgeCheckArgs),
    /// Built-in echo back-end, used for conformance testing
    #[command(hide = true)]
    BridgeEcho {
        /// Listen on this address instead of stdin/stdout
        #[arg(long)]
        tcp: Option<String>,
    },
}

#[derive(Args)]
struct BridgeCheckArgs {
    /// Check every bridge declared in this config
    #[arg(long, conflicts_with_all = ["program", "tcp"])]
    config: Option<PathBuf>,

    /// Spawn this program as the back-end
    #[arg(long, conflicts_with = "tcp")]
    program: Option<String>,

    /// Argument for --program (repeatable)
    #[arg(long = "arg", allow_hyphen_values = true)]
    args: Vec<String>,

    /// Connect to a back-end at host:port
    #[arg(long)]
    tcp: Option<String>,

    /// Modalities the back-end serves (default: all)
    #[arg(long, value_parser = parse_modality)]
    modality: Vec<Modality>,

    /// Skip the regenerate_masked checks
    #[arg(long)]
    no_mask: bool,

    /// Metric name sent with distance requests
    #[arg(long, default_value = "default")]
    metric: String,

    /// Client timeout for the timeout-path check, in milliseconds
    #[arg(long, default_value_t = 300)]
    timeout_ms: u64,

    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_modality(s: &str) -> std::result::Result<Modality, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown modality `{s}` (text, image, vector)"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .find_map(|c| c.downcast_ref::<refprint::Error>())
                .is_some_and(refprint::Error::is_config_error);
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(a) => experiment(a, "generate", cmd_generate),
        Command::Verify(a) => experiment(a, "verify", cmd_verify),
        Command::Analyze(a) => experiment(a, "analyze", cmd_analyze),
        Command::Attack(a) => experiment(a, "attack", cmd_attack),
        Command::BridgeCheck(a) => bridge_check(a),
        Command::BridgeEcho { tcp } => {
            match tcp {
                Some(addr) => echo::serve_tcp(TcpListener::bind(&addr)?)?,
                None => echo::serve(std::io::stdin().lock(), std::io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn init_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(refprint::Error::config("--jobs", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    resolve_self(&mut cfg)?;
    Ok(cfg)
}

fn resolve_self(cfg: &mut ExperimentConfig) -> Result<()> {
    for ep in cfg.bridges.values_mut() {
        if let Transport::Process { program, .. } = &mut ep.transport {
            if program == SELF_PROGRAM {
                *program = std::env::current_exe()?.display().to_string();
            }
        }
    }
    Ok(())
}

fn experiment(
    a: RunArgs,
    name: &str,
    cmd: fn(&Experiment, &Path) -> refprint::Result<RunManifest>,
) -> Result<ExitCode> {
    init_pool(a.jobs)?;
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let out = output_dir(&cfg, a.output.as_deref());
    let exp = Experiment::new(cfg)?;
    let manifest = cmd(&exp, &out).with_context(|| format!("{name} failed"))?;
    println!(
        "{name}: {} artifacts in {}",
        manifest.artifacts.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn bridge_check(a: BridgeCheckArgs) -> Result<ExitCode> {
    init_pool(a.jobs)?;
    let base = ConformanceOptions {
        modalities: if a.modality.is_empty() {
            ConformanceOptions::default().modalities
        } else {
            a.modality.clone()
        },
        masked: !a.no_mask,
        metric: a.metric.clone(),
        short_timeout_ms: a.timeout_ms,
        ..ConformanceOptions::default()
    };
    let targets: Vec<(String, BridgeEndpoint, ConformanceOptions)> = if let Some(path) = &a.config {
        let cfg = load_config(path)?;
        if cfg.bridges.is_empty() {
            bail!(refprint::Error::config("bridges", "config declares no bridges"));
        }
        cfg.bridges
            .iter()
            .map(|(name, ep)| {
                let mut opts = base.clone();
                let users: Vec<_> = cfg
                    .zoo
                    .iter()
                    .filter_map(|g| match &g.params {
                        GeneratorParams::Bridge(b) if &b.endpoint == name => Some(b),
                        _ => None,
                    })
                    .collect();
                if a.modality.is_empty() && !users.is_empty() {
                    opts.modalities = users.iter().map(|b| b.modality).collect();
                    opts.modalities.dedup();
                }
                if !users.is_empty() {
                    opts.masked &= users.iter().any(|b| b.masked);
                }
                (name.clone(), ep.clone(), opts)
            })
            .collect()
    } else if let Some(program) = &a.program {
        let program = if program == SELF_PROGRAM {
            std::env::current_exe()?.display().to_string()
        } else {
            program.clone()
        };
        vec![("bridge".into(), BridgeEndpoint::process(program, a.args.clone()), base)]
    } else if let Some(addr) = &a.tcp {
        vec![("bridge".into(), BridgeEndpoint::tcp(addr.clone()), base)]
    } else {
        bail!(refprint::Error::config(
            "bridge-check",
            "one of --config, --program or --tcp is required"
        ));
    };

    let mut failed = 0;
    for (name, ep, opts) in &targets {
        for r in run_conformance(ep, opts) {
            if r.passed {
                println!("PASS {name} {}", r.name);
            } else {
                failed += 1;
                println!("FAIL {name} {}: {}", r.name, r.detail);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} conformance check(s) failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
