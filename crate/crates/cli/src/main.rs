use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use multiblock_core::bench::{self, power_ladder, BenchError, BenchSpec};
use multiblock_core::gateway::{route_command, Command, Verb};
use multiblock_core::{
    allocate_block, build_cluster, validate_topology, AllocError, AllocationRequest, ClusterConfig,
    ConfigError, Mode, TierName, WorkloadType,
};

/// Stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Success = 0,
    Usage = 1,
    Config = 2,
    Runtime = 3,
}

#[derive(Debug)]
struct Failure {
    status: Status,
    message: String,
}

impl Failure {
    fn new(status: Status, message: impl ToString) -> Self {
        Failure {
            status,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(Status::Config, e)
    }
}

impl From<AllocError> for Failure {
    fn from(e: AllocError) -> Self {
        let status = match e {
            AllocError::InvalidRequest(_) => Status::Usage,
            AllocError::Config(_) => Status::Config,
            _ => Status::Runtime,
        };
        Failure::new(status, e)
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        let status = match &e {
            BenchError::InvalidSpec(_) => Status::Usage,
            BenchError::Config(_)
            | BenchError::Csv(_)
            | BenchError::Header(_)
            | BenchError::Parse { .. }
            | BenchError::MismatchedLadders { .. } => Status::Config,
            BenchError::Alloc(a) => return a.clone().into(),
            BenchError::Sim(_) => Status::Runtime,
        };
        Failure::new(status, e)
    }
}

/// Parses a byte count with an optional binary suffix: `4096`, `64Ki`, `32Mi`, `1Gi`.
fn parse_size(s: &str) -> Result<u64, String> {
    let (digits, mult) = match s {
        _ if s.ends_with("Ki") => (&s[..s.len() - 2], 1u64 << 10),
        _ if s.ends_with("Mi") => (&s[..s.len() - 2], 1 << 20),
        _ if s.ends_with("Gi") => (&s[..s.len() - 2], 1 << 30),
        _ => (s, 1),
    };
    let n: u64 = digits
        .parse()
        .map_err(|_| format!("`{s}` is not a size (e.g. 4096, 64Ki, 32Mi, 1Gi)"))?;
    n.checked_mul(mult)
        .ok_or_else(|| format!("`{s}` overflows"))
}

#[derive(Parser, Debug)]
#[command(
    name = "multiblock",
    version,
    about = "Multi-block public cluster control plane and network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Parse a configuration file, build the cluster and check its invariants.
    Validate {
        /// Path to the INI configuration file.
        config: PathBuf,
    },
    /// Allocate one block on a fresh cluster and print it.
    Alloc {
        /// Configuration file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Owner of the new block.
        #[arg(long)]
        owner: String,
        /// Number of workers.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        /// processor or io.
        #[arg(long, default_value = "processor")]
        workload: WorkloadType,
    },
    /// Allocate a block for --owner, then route one command from --user to it.
    Route {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Owner of the target block.
        #[arg(long)]
        owner: String,
        /// Workers in the target block.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        /// User issuing the command; defaults to the owner.
        #[arg(long)]
        user: Option<String>,
        /// submit, status or cancel.
        #[arg(long, default_value = "status")]
        verb: Verb,
        #[arg(long, default_value = "0", value_parser = parse_size)]
        request_bytes: u64,
        #[arg(long, default_value = "0", value_parser = parse_size)]
        response_bytes: u64,
    },
    /// Run a ping-pong size sweep and write CSV samples.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// conventional or independent; defaults to the config's mode.
        #[arg(long)]
        mode: Option<Mode>,
        /// Data channel tier, fe or ge; defaults to the config's IO tier.
        #[arg(long)]
        tier: Option<TierName>,
        /// Number of simultaneous blocks (1 or 2).
        #[arg(long, default_value_t = 1)]
        blocks: usize,
        /// Smallest message size.
        #[arg(long, default_value = "1Ki", value_parser = parse_size)]
        size_min: u64,
        /// Largest message size.
        #[arg(long, default_value = "1Gi", value_parser = parse_size)]
        size_max: u64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Output CSV path; `-` for standard output.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Compare a single-block CSV against a twin-block CSV.
    Report {
        /// CSV from a one-block sweep.
        single: PathBuf,
        /// CSV from a two-block sweep.
        twin: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ClusterConfig, Failure> {
    match path {
        Some(p) => Ok(ClusterConfig::from_path(p)?),
        None => Ok(ClusterConfig::default()),
    }
}

fn read_samples(path: &Path) -> Result<Vec<bench::BenchSample>, Failure> {
    let file = File::open(path).map_err(|e| {
        Failure::new(
            Status::Config,
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    bench::read_csv(io::BufReader::new(file))
        .map_err(|e| Failure::new(Status::Config, format!("{}: {e}", path.display())))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Validate { config } => {
            let cfg = ClusterConfig::from_path(&config)?;
            let state = build_cluster(&cfg)?;
            let violations = validate_topology(&state);
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("{v}");
                }
                return Err(Failure::new(
                    Status::Config,
                    format!("{} invariant violation(s)", violations.len()),
                ));
            }
            println!(
                "ok: {} cluster, {} nodes ({} in pool)",
                cfg.mode,
                state.total_nodes(),
                state.free_pool.len()
            );
        }
        Cmd::Alloc {
            config,
            owner,
            n,
            workload,
        } => {
            let cfg = load_config(config.as_deref())?;
            let state = build_cluster(&cfg)?;
            let req = AllocationRequest::new(owner, n as usize, workload);
            let (state, block) = allocate_block(&state, &req)?;
            let workers: Vec<String> = block.workers.iter().map(ToString::to_string).collect();
            println!(
                "block {} owner={} workload={} mode={}",
                block.id,
                block.owner,
                block.workload,
                state.mode()
            );
            println!("master {}", block.master);
            println!("workers {}", workers.join(" "));
            println!("free {}", state.free_pool.len());
        }
        Cmd::Route {
            config,
            owner,
            n,
            user,
            verb,
            request_bytes,
            response_bytes,
        } => {
            let cfg = load_config(config.as_deref())?;
            let state = build_cluster(&cfg)?;
            let req =
                AllocationRequest::new(owner.clone(), n as usize, WorkloadType::ProcessorIntensive);
            let (state, block) = allocate_block(&state, &req)?;
            let cmd = Command {
                user: user.unwrap_or(owner).as_str().into(),
                block: block.id,
                verb,
                request_bytes,
                response_bytes,
            };
            let routed =
                route_command(&state, &cmd).map_err(|e| Failure::new(Status::Runtime, e))?;
            let from = state
                .command_endpoint()
                .map(|n| n.to_string())
                .unwrap_or_default();
            println!(
                "{} {} -> {} via {} transit_us={:.3}",
                routed.verb, from, routed.delivered_to, block.id, routed.transit_us
            );
        }
        Cmd::Bench {
            config,
            mode,
            tier,
            blocks,
            size_min,
            size_max,
            reps,
            out,
        } => {
            if size_min > size_max {
                return Err(Failure::new(
                    Status::Usage,
                    format!("--size-min {size_min} exceeds --size-max {size_max}"),
                ));
            }
            let cfg = load_config(config.as_deref())?;
            let spec = BenchSpec::new(
                mode.unwrap_or(cfg.mode),
                tier.unwrap_or(cfg.io_tier),
                blocks,
            )
            .with_sizes(power_ladder(size_min, size_max))
            .with_reps(reps);
            let samples = bench::run_sweep(&cfg, &spec)?;
            let sink: Box<dyn Write> = if out.as_os_str() == "-" {
                Box::new(io::stdout().lock())
            } else {
                let file = File::create(&out).map_err(|e| {
                    Failure::new(
                        Status::Runtime,
                        format!("cannot write {}: {e}", out.display()),
                    )
                })?;
                Box::new(BufWriter::new(file))
            };
            bench::write_csv(&samples, sink).map_err(|e| Failure::new(Status::Runtime, e))?;
        }
        Cmd::Report { single, twin } => {
            let a = read_samples(&single)?;
            let b = read_samples(&twin)?;
            let report = bench::compare(&a, &b)?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    ExitCode::from(Status::Success as u8)
                }
                _ => ExitCode::from(Status::Usage as u8),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::from(Status::Success as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.status as u8)
        }
    }
}
