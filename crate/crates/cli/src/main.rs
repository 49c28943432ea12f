//! `csikit`: batch front end for dataset generation, sounding loopback, CSI
//! extraction, clustering, sum-rate sweeps and maps.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.

mod job;
mod manifest;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use csikit::channel::Scenario;
use csikit::clustering::SubcarrierPolicy;
use csikit::precoding::{MapPolicy, PrecoderKind};

use job::{ClusterJob, ExtractJob, Format, GenerateJob, Job, LoopbackJob, MapJob, MapLayer, StatsJob, SweepJob};
use manifest::{manifest_path, FileDigest, Manifest};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }
}

impl From<csikit::Error> for Failure {
    fn from(e: csikit::Error) -> Self {
        use csikit::Error as E;
        match e {
            E::Config(_) | E::UnknownKey { .. } | E::InvalidArgument(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "csikit", version, about = "Massive-MIMO CSI sounding and user-clustering toolkit")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset output encoding.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Layer {
    Snr,
    Beam,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BeamEval {
    /// Beam power averaged over subcarriers.
    Average,
    /// Beam power of each record's narrowband view.
    View,
}

fn parse_kind(s: &str) -> Result<PrecoderKind, String> {
    s.parse().map_err(|e: csikit::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<SubcarrierPolicy, String> {
    s.parse().map_err(|e: csikit::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a position-tagged dataset from a scene file.
    Generate {
        /// `key = value` scene description; defaults apply when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sound a dataset's channels into a raw IQ capture (plus `.hdr` sidecar).
    Loopback {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the channels the capture actually carries.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 1)]
        pilot_seed: u64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        cfo_hz: f64,
        /// Receiver noise in dB relative to the dataset noise floor; noiseless if absent.
        #[arg(long, allow_negative_numbers = true)]
        noise_db: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        chain_phase: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        chain_gain_db: Vec<f64>,
        #[arg(long, default_value_t = 512)]
        gap: usize,
    },
    /// Detect frames in a capture and extract calibrated CSI records.
    Extract {
        #[arg(long)]
        iq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = csikit::ofdm::DEFAULT_TAPS)]
        taps: usize,
        #[arg(long, default_value_t = csikit::ofdm::DETECTION_THRESHOLD)]
        threshold: f64,
        /// Ignore frame-start hints in the sidecar.
        #[arg(long)]
        no_hints: bool,
    },
    /// Group users with k-means under MRT or phase-only centers.
    Cluster {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = parse_kind, default_value = "mrt")]
        kind: PrecoderKind,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long)]
        early_exit: bool,
        #[arg(long, value_parser = parse_policy, default_value = "principal_direction")]
        policy: SubcarrierPolicy,
        /// Use all antennas or the even-indexed half.
        #[arg(long)]
        antennas: Option<usize>,
        /// Model file (centers).
        #[arg(long)]
        out: PathBuf,
        /// Assignment CSV; defaults to `<out>.assignments.csv`.
        #[arg(long)]
        assignments: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Mean sum-rate over random k-means initializations, MRT and PO.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,40")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        realizations: usize,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long)]
        early_exit: bool,
        #[arg(long, value_parser = parse_policy, default_value = "principal_direction")]
        policy: SubcarrierPolicy,
        #[arg(long)]
        antennas: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Mean-SNR or beam-power map at the record positions.
    Map {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "snr")]
        layer: Layer,
        /// Record whose channel defines the beam.
        #[arg(long)]
        record: Option<usize>,
        #[arg(long, value_parser = parse_kind, default_value = "mrt")]
        kind: PrecoderKind,
        #[arg(long, value_parser = parse_policy, default_value = "principal_direction")]
        policy: SubcarrierPolicy,
        #[arg(long, value_enum, default_value = "average")]
        eval: BeamEval,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Empirical CDF of the GPS accuracy fields.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Re-run a command from its manifest and compare output digests.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(p).map_err(|e| Failure::io(p, e))
}

fn absolute_opt(p: Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
    p.map(|p| absolute(&p)).transpose()
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Turns parsed arguments into a self-contained job.
fn resolve(cli: &Cli, command: Command) -> Result<Job, Failure> {
    let seed = cli.seed.unwrap_or(0);
    let format = cli.format.unwrap_or_default();
    Ok(match command {
        Command::Generate { scene, out } => {
            let text = match &scene {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?,
                None => String::new(),
            };
            let mut sc = Scenario::from_kv(&text).map_err(|e| match &scene {
                Some(p) => Failure {
                    message: format!("{}: {}", p.display(), Failure::from(e).message),
                    code: EXIT_USAGE,
                },
                None => e.into(),
            })?;
            if let Some(s) = cli.seed {
                sc.scene.seed = s;
            }
            Job::Generate(GenerateJob {
                scenario: sc.to_kv(),
                out: absolute(&out)?,
                format,
            })
        }
        Command::Loopback {
            dataset,
            out,
            truth,
            limit,
            pilot_seed,
            cfo_hz,
            noise_db,
            chain_phase,
            chain_gain_db,
            gap,
        } => Job::Loopback(LoopbackJob {
            dataset: absolute(&dataset)?,
            out: absolute(&out)?,
            truth: absolute_opt(truth)?,
            limit,
            pilot_seed,
            cfo_hz,
            noise_db,
            chain_phase,
            chain_gain_db,
            gap,
            seed,
        }),
        Command::Extract {
            iq,
            out,
            taps,
            threshold,
            no_hints,
        } => Job::Extract(ExtractJob {
            iq: absolute(&iq)?,
            out: absolute(&out)?,
            format,
            n_taps: taps,
            threshold,
            use_hints: !no_hints,
        }),
        Command::Cluster {
            dataset,
            k,
            kind,
            iterations,
            early_exit,
            policy,
            antennas,
            out,
            assignments,
            svg,
        } => {
            let out = absolute(&out)?;
            Job::Cluster(ClusterJob {
                dataset: absolute(&dataset)?,
                assignments: match assignments {
                    Some(a) => absolute(&a)?,
                    None => with_suffix(&out, ".assignments.csv"),
                },
                out,
                svg: absolute_opt(svg)?,
                k,
                kind,
                iterations,
                early_exit,
                policy,
                antennas,
                seed,
            })
        }
        Command::Sweep {
            dataset,
            k,
            realizations,
            iterations,
            early_exit,
            policy,
            antennas,
            out,
            svg,
        } => Job::Sweep(SweepJob {
            dataset: absolute(&dataset)?,
            out: absolute(&out)?,
            svg: absolute_opt(svg)?,
            k_values: k,
            realizations,
            iterations,
            early_exit,
            policy,
            antennas,
            base_seed: seed,
        }),
        Command::Map {
            dataset,
            layer,
            record,
            kind,
            policy,
            eval,
            out,
            svg,
        } => Job::Map(MapJob {
            dataset: absolute(&dataset)?,
            out: absolute(&out)?,
            svg: absolute_opt(svg)?,
            layer: match layer {
                Layer::Snr => MapLayer::Snr,
                Layer::Beam => MapLayer::Beam {
                    record: record.ok_or_else(|| Failure::usage("--layer beam needs --record"))?,
                    kind,
                    view: policy,
                    evaluate: match eval {
                        BeamEval::Average => MapPolicy::AveragePower,
                        BeamEval::View => MapPolicy::View(policy),
                    },
                },
            },
        }),
        Command::Stats { dataset, out, svg } => Job::Stats(StatsJob {
            dataset: absolute(&dataset)?,
            out: absolute(&out)?,
            svg: absolute_opt(svg)?,
        }),
        Command::Replay { .. } => unreachable!("replay is dispatched before resolution"),
    })
}

fn execute(job: Job) -> Result<(), Failure> {
    let start = Instant::now();
    let outcome = job.run()?;
    let digests = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>, _>>();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: job.name().into(),
        seeds: job.seeds(),
        inputs: digests(&outcome.inputs)?,
        outputs: digests(&outcome.outputs)?,
        threads: rayon::current_num_threads(),
        duration_s: start.elapsed().as_secs_f64(),
        results: outcome.results,
        job,
    };
    let path = manifest_path(manifest.job.primary_output());
    manifest.write(&path)?;
    println!("{}", outcome.summary);
    println!("manifest: {}", path.display());
    Ok(())
}

fn replay(path: &Path) -> Result<(), Failure> {
    let recorded = Manifest::read(path)?;
    for input in &recorded.inputs {
        let now = manifest::sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(Failure::data(format!("input {} changed since the run", input.path.display())));
        }
    }
    let outcome = recorded.job.run()?;
    let mut mismatched = Vec::new();
    for out in &recorded.outputs {
        if manifest::sha256_file(&out.path)? != out.sha256 {
            mismatched.push(out.path.display().to_string());
        }
    }
    if outcome.outputs.len() != recorded.outputs.len() {
        return Err(Failure::data("replay produced a different set of outputs"));
    }
    if !mismatched.is_empty() {
        return Err(Failure::data(format!("outputs differ after replay: {}", mismatched.join(", "))));
    }
    println!(
        "replayed {}: {} outputs byte-identical",
        recorded.command,
        recorded.outputs.len()
    );
    Ok(())
}

fn run(mut cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let command = std::mem::replace(&mut cli.command, Command::Replay { manifest: PathBuf::new() });
    match command {
        Command::Replay { manifest } => replay(&manifest),
        other => execute(resolve(&cli, other)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("csikit: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
