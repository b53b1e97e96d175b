use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fpm_core::design::{heuristic_design, load_design, save_design, single_led_design};
use fpm_core::io::{read_stack, render_design, render_geometry, write_atomic, write_pgm, write_stack, StackData};
use fpm_core::optics::add_shot_noise;
use fpm_core::phantom::{generate_phantom, make_dataset, Split};
use fpm_core::pipeline::{bright_rows, evaluate_design, psnr_csv, simulate_stack};
use fpm_core::train::{train, TrainSetup};
use fpm_core::{build_led_geometry, reconstruct, Config, Context, ForwardModel, LedGeometry, MeasurementStack};

#[derive(Parser)]
#[command(
    name = "fpm",
    version,
    about = "Fourier ptychographic microscopy with learned LED designs"
)]
struct Cli {
    /// Overrides the training, noise and design seeds from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignKind {
    Single,
    Heuristic,
}

#[derive(Subcommand)]
enum Command {
    /// Write the LED geometry as text plus a PGM map of the array.
    Geometry {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a baseline design (single-LED or heuristic multiplexing).
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: DesignKind,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a multiplexed measurement stack of a generated phantom.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        phantom_seed: u64,
        #[arg(long, value_enum, default_value = "off")]
        noise: OnOff,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a design for a context.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        context: Option<Context>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a complex field from a measurement stack.
    Reconstruct {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare designs by band PSNR on the test phantoms.
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        designs: Vec<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<Config> {
    let mut cfg = Config::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.noise_seed = s;
        cfg.design_seed = s;
    }
    Ok(cfg)
}

fn setup(cfg: &Config) -> Result<(LedGeometry, ForwardModel)> {
    let geo = build_led_geometry(&cfg.system)?;
    let model = ForwardModel::new(&cfg.system, &geo)?;
    Ok((geo, model))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Geometry { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let geo = build_led_geometry(&cfg.system)?;
            write_atomic(&out, geo.to_text().as_bytes()).with_context(|| format!("writing {}", out.display()))?;
            write_pgm(&sibling(&out, ".pgm"), &render_geometry(&geo))?;
            println!(
                "{} LEDs ({} bright-field, {} dark-field)",
                geo.len(),
                geo.bright_count,
                geo.dark_count
            );
        }
        Command::Design { config, kind, k, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let geo = build_led_geometry(&cfg.system)?;
            let design = match kind {
                DesignKind::Single => single_led_design(&geo),
                DesignKind::Heuristic => heuristic_design(&geo, k.unwrap_or(cfg.measurements), cfg.design_seed)?,
            };
            save_design(&out, &design, &geo, &cfg.system)?;
            write_pgm(&sibling(&out, ".pgm"), &render_design(&design, &geo))?;
        }
        Command::Simulate {
            config,
            design,
            phantom_seed,
            noise,
            out,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let (geo, model) = setup(&cfg)?;
            let d = load_design(&design, &geo, &cfg.system)
                .with_context(|| format!("loading design {}", design.display()))?;
            let phantom = generate_phantom(&cfg.system, cfg.context, phantom_seed);
            let mut stack = simulate_stack(&phantom.field, &d, &model)?;
            if matches!(noise, OnOff::On) {
                stack = add_shot_noise(&stack, &cfg.system, cfg.noise_seed)?;
            }
            write_stack(&out, &StackData::Real(stack.images))?;
        }
        Command::Train {
            config,
            context,
            k,
            out,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let (geo, model) = setup(&cfg)?;
            let context = context.unwrap_or(cfg.context);
            let k = k.unwrap_or(cfg.measurements);
            let dataset = make_dataset(&cfg.system, context, cfg.dataset_size, cfg.dataset_seed)?;
            let s = TrainSetup {
                cfg: &cfg.system,
                model: &model,
                geometry: &geo,
                k,
                context,
            };
            let outcome = train(&dataset, &s, &cfg.train)?;
            let mut design = outcome.best;
            design.name = out
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or(design.name);
            save_design(&out, &design, &geo, &cfg.system)?;
            write_atomic(&sibling(&out, ".log.csv"), outcome.log.to_csv().as_bytes())?;
            write_pgm(&sibling(&out, ".pgm"), &render_design(&design, &geo))?;
            println!("best test loss at epoch {}", outcome.best_epoch);
        }
        Command::Reconstruct {
            stack,
            design,
            config,
            out,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let (geo, model) = setup(&cfg)?;
            let d = load_design(&design, &geo, &cfg.system)
                .with_context(|| format!("loading design {}", design.display()))?;
            let images = match read_stack(&stack).with_context(|| format!("reading {}", stack.display()))? {
                StackData::Real(v) => v,
                StackData::Complex(_) => bail!("{} holds complex data, expected intensities", stack.display()),
            };
            let bright = if images.len() == d.k() {
                bright_rows(&d, &model)
            } else {
                vec![true; images.len()]
            };
            let ms = MeasurementStack {
                images,
                design_id: d.name.clone(),
                noisy: false,
                bright,
            };
            let trace = reconstruct(&ms, &d, &model, &cfg.recon)?;
            write_stack(&out, &StackData::Complex(vec![trace.x_star.data.clone()]))?;
            write_pgm(&sibling(&out, ".amplitude.pgm"), &trace.x_star.amplitude())?;
            write_pgm(&sibling(&out, ".phase.pgm"), &trace.x_star.phase())?;
            let h = &trace.cost_history;
            println!("cost {:.6e} -> {:.6e}", h[0], h[h.len() - 1]);
        }
        Command::Evaluate { designs, config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let (geo, model) = setup(&cfg)?;
            let dataset = make_dataset(&cfg.system, cfg.context, cfg.dataset_size, cfg.dataset_seed)?;
            let test = dataset.split(Split::Test);
            let mut rows = Vec::new();
            for path in &designs {
                let d = load_design(path, &geo, &cfg.system)
                    .with_context(|| format!("loading design {}", path.display()))?;
                rows.extend(evaluate_design(
                    &d,
                    &test,
                    &model,
                    &cfg.system,
                    &cfg.recon,
                    cfg.context,
                    Some(cfg.noise_seed),
                )?);
            }
            write_atomic(&out, psnr_csv(&rows).as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    if let Some(n) = std::env::var("FPM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring thread pool")?;
    }
    run(Cli::parse())
}
