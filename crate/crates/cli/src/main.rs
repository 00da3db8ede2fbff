use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "dsgan", version, about = "Diversity-sensitive GAN training on synthetic 2D tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpMode {
    Linear,
    Slerp,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run; writes metrics.csv, final/best checkpoints and eval.json into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on fresh seeded samples and write the report as JSON.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one run per λ and write summary.csv into --out.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the latent-path gradient bound and the attraction inequality.
    Verify {
        /// Config whose generator architecture is checked at random initialisation.
        #[arg(long)]
        config: PathBuf,
        /// Check this trained generator instead of a random one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
    },
    /// Export generator outputs along a latent path as CSV.
    Interp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 9)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = InterpMode::Slerp)]
        mode: InterpMode,
        /// Start latent, comma separated; drawn from the seed when omitted.
        #[arg(long, value_delimiter = ',')]
        z_a: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        z_b: Option<Vec<f64>>,
        /// Class label for conditional-ring generators.
        #[arg(long)]
        label: Option<usize>,
        /// Raw condition vector (e.g. a flattened trajectory context), comma separated.
        #[arg(long, value_delimiter = ',')]
        condition: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn tune_allocator() {
    // Keep the many short-lived 128x128 buffers on the heap instead of mmap.
    extern "C" {
        fn mallopt(param: i32, value: i32) -> i32;
    }
    const M_TRIM_THRESHOLD: i32 = -1;
    const M_TOP_PAD: i32 = -2;
    const M_MMAP_THRESHOLD: i32 = -3;
    unsafe {
        mallopt(M_MMAP_THRESHOLD, 100_000_000);
        mallopt(M_TRIM_THRESHOLD, 1_000_000_000);
        mallopt(M_TOP_PAD, 100_000_000);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn tune_allocator() {}

fn main() -> ExitCode {
    tune_allocator();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed } => commands::train(&config, &out, seed),
        Command::Eval {
            config,
            checkpoint,
            out,
            seed,
        } => commands::eval(&config, &checkpoint, &out, seed),
        Command::Sweep {
            config,
            lambdas,
            out,
            jobs,
            seed,
        } => commands::sweep(&config, &lambdas, &out, jobs, seed),
        Command::Verify {
            config,
            checkpoint,
            out,
            seed,
            pairs,
            probes,
        } => commands::verify(&config, checkpoint.as_deref(), &out, seed, pairs, probes),
        Command::Interp {
            config,
            checkpoint,
            out,
            steps,
            mode,
            z_a,
            z_b,
            label,
            condition,
            seed,
        } => {
            let mode = match mode {
                InterpMode::Linear => dsgan_core::metrics::InterpolationMode::Linear,
                InterpMode::Slerp => dsgan_core::metrics::InterpolationMode::Slerp,
            };
            commands::interp(&commands::InterpArgs {
                config: &config,
                checkpoint: &checkpoint,
                out: &out,
                steps,
                mode,
                z_a,
                z_b,
                label,
                condition,
                seed,
            })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            commands::exit_code(&e)
        }
    }
}
