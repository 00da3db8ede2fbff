use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use dsgan_core::checkpoint::{load_checkpoint_for, save_checkpoint};
use dsgan_core::data::one_hot;
use dsgan_core::evaluation::{conditional_coverage, evaluate};
use dsgan_core::metrics::{latent_interpolation, InterpolationMode};
use dsgan_core::nets::{mlp_init, NetworkParams};
use dsgan_core::rng;
use dsgan_core::theory::{attraction_check, attraction_scenario, path_gradient_bound_refined, scenario_rng};
use dsgan_core::trainer::{sweep as run_sweep, train_from, Task, TrainConfig, TrainState, METRICS_HEADER};
use dsgan_core::{Error, Result};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::config::load_config;

pub fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(match e {
        Error::Config(_) | Error::Checkpoint(_) | Error::Shape { .. } | Error::Json(_) => 2,
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        Error::Io(_) => 4,
        _ => 1,
    })
}

fn config_with_seed(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn write_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    fs::write(path, save_checkpoint(state)?)?;
    Ok(())
}

fn load_generator(cfg: &TrainConfig, path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path)?;
    Ok(load_checkpoint_for(&bytes, &cfg.generator_spec(), &cfg.discriminator_spec())?.g)
}

pub fn train(config: &Path, out: &Path, seed: Option<u64>) -> Result<ExitCode> {
    let cfg = config_with_seed(config, seed)?;
    fs::create_dir_all(out)?;
    let state = TrainState::init(&cfg)?;
    let mut csv = BufWriter::new(File::create(out.join("metrics.csv"))?);
    writeln!(csv, "{METRICS_HEADER}")?;
    let mut write_err = None;
    let result = train_from(&cfg, state, |row| {
        if write_err.is_none() {
            if let Err(e) = writeln!(csv, "{}", row.csv_line()) {
                write_err = Some(e);
            }
        }
    });
    csv.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let outcome = result.map_err(|f| f.error)?;
    write_checkpoint(&out.join("final.ckpt.json"), &outcome.state)?;
    let best = outcome.best.as_ref().map_or(&outcome.state, |(_, s)| s);
    write_checkpoint(&out.join("best.ckpt.json"), best)?;
    write_json(&out.join("eval.json"), &outcome.final_report)?;
    if cfg.task == Task::ConditionalRing {
        write_json(&out.join("coverage.json"), &conditional_coverage(&cfg, &outcome.state.g)?)?;
    }
    let r = &outcome.final_report;
    println!(
        "step {}: modes {} hq {:.3} diversity {:.4} frechet {:.4}",
        outcome.state.step, r.modes_captured, r.hq_fraction, r.pairwise_diversity, r.frechet2
    );
    Ok(ExitCode::SUCCESS)
}

pub fn eval(config: &Path, checkpoint: &Path, out: &Path, seed: Option<u64>) -> Result<ExitCode> {
    let cfg = config_with_seed(config, seed)?;
    let g = load_generator(&cfg, checkpoint)?;
    write_json(out, &evaluate(&cfg, &g)?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(config: &Path, lambdas: &[f64], out: &Path, jobs: usize, seed: Option<u64>) -> Result<ExitCode> {
    let cfg = config_with_seed(config, seed)?;
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
    }
    fs::create_dir_all(out)?;
    let entries = run_sweep(&cfg, lambdas, jobs)?;
    let mut csv = BufWriter::new(File::create(out.join("summary.csv"))?);
    writeln!(csv, "lambda,modes,hq_frac,diversity,frechet")?;
    for e in &entries {
        match &e.report {
            Some(r) => writeln!(
                csv,
                "{},{},{},{},{}",
                e.lambda, r.modes_captured, r.hq_fraction, r.pairwise_diversity, r.frechet2
            )?,
            None => writeln!(csv, "{},,,,", e.lambda)?,
        }
    }
    csv.flush()?;
    write_json(&out.join("summary.json"), &entries)?;
    let failed: Vec<_> = entries.iter().filter_map(|e| e.error.as_ref().map(|m| (e.lambda, m))).collect();
    for (l, m) in &failed {
        eprintln!("lambda {l}: {m}");
    }
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

pub fn verify(
    config: &Path,
    checkpoint: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    pairs: usize,
    probes: usize,
) -> Result<ExitCode> {
    let cfg = config_with_seed(config, seed)?;
    let g = match checkpoint {
        Some(p) => load_generator(&cfg, p)?,
        None => mlp_init(&cfg.generator_spec(), cfg.seed)?,
    };
    let mut rng = scenario_rng(cfg.seed, 0);
    let condition = |rng: &mut rng::Rng| cfg.sample_real(rng, 1).condition.map(|c| c.data().to_vec());

    let mut violations = 0usize;
    let mut refined = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = condition(&mut rng);
        let z1: Vec<f64> = (0..cfg.z_dim).map(|_| rng.sample(StandardNormal)).collect();
        let z2: Vec<f64> = (0..cfg.z_dim).map(|_| rng.sample(StandardNormal)).collect();
        let r = path_gradient_bound_refined(&g, x.as_deref(), &z1, &z2, 64, 256, 1e-6, 1e-8)?;
        refined += usize::from(r.n_quadrature > 64);
        if !r.holds(1e-6, 1e-8) {
            violations += 1;
        }
        if r.rhs > 0.0 {
            worst = worst.max(r.lhs / r.rhs);
        }
    }

    let x = condition(&mut rng);
    let scenario = attraction_scenario(&g, x.as_deref(), &mut rng, 1e-3)?;
    let report = attraction_check(
        &scenario.g_t,
        &scenario.g_t1,
        x.as_deref(),
        &scenario.z1,
        &scenario.y_star,
        probes,
        &mut rng,
    )?;
    let passed = violations == 0 && report.counterexamples() == 0;
    write_json(
        out,
        &json!({
            "passed": passed,
            "gradient_bound": {
                "pairs": pairs,
                "violations": violations,
                "refined": refined,
                "max_lhs_over_rhs": worst,
            },
            "attraction": {
                "epsilon": report.epsilon,
                "probes": report.probes.len(),
                "condition_holds": report.condition_count(),
                "counterexamples": report.counterexamples(),
                "radius_estimate": report.radius_estimate,
            },
        }),
    )?;
    println!(
        "gradient bound: {violations}/{pairs} violations; attraction: {}/{} counterexamples",
        report.counterexamples(),
        report.condition_count()
    );
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub struct InterpArgs<'a> {
    pub config: &'a Path,
    pub checkpoint: &'a Path,
    pub out: &'a Path,
    pub steps: usize,
    pub mode: InterpolationMode,
    pub z_a: Option<Vec<f64>>,
    pub z_b: Option<Vec<f64>>,
    pub label: Option<usize>,
    pub condition: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

pub fn interp(args: &InterpArgs<'_>) -> Result<ExitCode> {
    let cfg = config_with_seed(args.config, args.seed)?;
    let g = load_generator(&cfg, args.checkpoint)?;
    let mut rng = rng::seeded(cfg.seed);
    let mut draw = |given: &Option<Vec<f64>>| match given {
        Some(z) if z.len() == cfg.z_dim => Ok(z.clone()),
        Some(z) => Err(Error::Config(format!("latent has {} values, z_dim is {}", z.len(), cfg.z_dim))),
        None => Ok((0..cfg.z_dim).map(|_| rng.sample(StandardNormal)).collect()),
    };
    let z_a = draw(&args.z_a)?;
    let z_b = draw(&args.z_b)?;
    let condition = match (args.label, &args.condition) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --label or --condition".into())),
        (Some(l), None) if cfg.task == Task::ConditionalRing && l < cfg.conditional.n_labels => {
            Some(one_hot(&[l], cfg.conditional.n_labels).data().to_vec())
        }
        (Some(l), None) => return Err(Error::Config(format!("label {l} is not valid for this task"))),
        (None, Some(c)) => Some(c.clone()),
        (None, None) => match cfg.task {
            Task::Ring => None,
            _ => return Err(Error::Config("this task needs --label or --condition".into())),
        },
    };
    if condition.as_ref().map_or(0, Vec::len) != cfg.condition_dim() {
        return Err(Error::Config(format!("condition must have {} values", cfg.condition_dim())));
    }
    let path = latent_interpolation(&g, condition.as_deref(), &z_a, &z_b, args.steps, args.mode)?;
    if path.fell_back_to_linear {
        eprintln!("warning: endpoints are (anti)parallel; used linear interpolation");
    }
    let mut csv = BufWriter::new(File::create(args.out)?);
    let mut header = vec!["t".to_string()];
    header.extend((0..cfg.z_dim).map(|j| format!("z{j}")));
    header.extend((0..path.outputs.cols()).map(|j| format!("y{j}")));
    writeln!(csv, "{}", header.join(","))?;
    for i in 0..args.steps {
        let t = if args.steps == 1 { 0.0 } else { i as f64 / (args.steps - 1) as f64 };
        let cells: Vec<String> = std::iter::once(t)
            .chain(path.latents.row(i).iter().copied())
            .chain(path.outputs.row(i).iter().copied())
            .map(|v| v.to_string())
            .collect();
        writeln!(csv, "{}", cells.join(","))?;
    }
    csv.flush()?;
    Ok(ExitCode::SUCCESS)
}
