//! `shadenet` command line: the full pipeline from procedural data
//! generation to training, inference, evaluation and benchmarking.
//!
//! Every subcommand prints one machine-parseable summary line on success
//! and exits 0; runtime failures exit 1, usage errors exit 2.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use shadenet::dataset::{
    augment_dataset, generate, load_gbuffer, Dataset, GenerateOptions, Split,
};
use shadenet::loss::LossKind;
use shadenet::render::{AoSpec, DofSpec, EffectSpec, HemisphereWeighting};
use shadenet::runtime;
use shadenet::train::{self, Checkpoint, TrainConfig};
use shadenet::unet::{param_count, NetConfig};

#[derive(Parser)]
#[command(name = "shadenet", version, about = "Learned screen-space shading pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scenes, G-buffers, ground truth and a dataset manifest.
    Gen(GenArgs),
    /// Expand a dataset with the 8 square symmetries.
    Augment(AugmentArgs),
    /// Train networks from a config file (u0/kernel_size/loss may be lists).
    Train(TrainArgs),
    /// Run a checkpoint on a stored G-buffer and write an image.
    Infer(InferArgs),
    /// Evaluate a checkpoint on one dataset split.
    Eval(EvalArgs),
    /// Time the forward pass of a checkpoint.
    Bench(BenchArgs),
    /// Print the learnable parameter count of a network config.
    Params(ParamsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EffectArg {
    Ao,
    Dof,
}

#[derive(Args)]
struct GenArgs {
    /// Number of procedural scenes.
    #[arg(long, default_value_t = 2)]
    scenes: usize,
    /// Views per scene.
    #[arg(long, default_value_t = 8)]
    views: usize,
    #[arg(long, value_enum, default_value = "ao")]
    effect: EffectArg,
    /// World-space occlusion radius (ao).
    #[arg(long, default_value_t = 0.3)]
    radius: f64,
    /// Lens aperture radius (dof).
    #[arg(long, default_value_t = 0.08)]
    aperture: f64,
    /// Focal plane distance (dof).
    #[arg(long, default_value_t = 2.5)]
    focal: f64,
    /// Monte-Carlo samples per pixel.
    #[arg(long, default_value_t = 256)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image resolution as WxH.
    #[arg(long, default_value = "96x96")]
    res: String,
    /// Extra primitives per scene.
    #[arg(long, default_value_t = 5)]
    primitives: usize,
    /// Scenes held out as the test split (defaults to 1 when scenes >= 2).
    #[arg(long)]
    test_scenes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config mirroring the train-config fields; `net.u0`,
    /// `net.kernel_size` and `loss` accept lists for sweeps.
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory (manifest + records).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and curve CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Record directory holding the G-buffer PFM planes.
    #[arg(long)]
    gbuffer: PathBuf,
    /// Output image path (.png tonemapped, .pfm raw).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2.2)]
    gamma: f32,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Optional per-record CSV report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Resolution as WxH.
    #[arg(long, default_value = "256x256")]
    res: String,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParamsArgs {
    /// Network config JSON (or a train config with a `net` field).
    #[arg(long)]
    config: PathBuf,
}

fn parse_resolution(s: &str) -> anyhow::Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("resolution `{s}` is not WxH"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn run_gen(args: GenArgs) -> anyhow::Result<()> {
    let (width, height) = parse_resolution(&args.res)?;
    let effect = match args.effect {
        EffectArg::Ao => EffectSpec::Ao(AoSpec {
            radius: args.radius,
            spp: args.spp,
            weighting: HemisphereWeighting::Cosine,
        }),
        EffectArg::Dof => EffectSpec::Dof(DofSpec {
            aperture_radius: args.aperture,
            focal_distance: args.focal,
            spp: args.spp,
        }),
    };
    let test_scenes = args
        .test_scenes
        .unwrap_or(if args.scenes >= 2 { 1 } else { 0 });
    let opts = GenerateOptions {
        scenes: args.scenes,
        views: args.views,
        width,
        height,
        effect,
        extra_primitives: args.primitives,
        test_scenes,
        seed: args.seed,
    };
    let dataset = generate(&opts)?;
    dataset.save(&args.out)?;
    println!(
        "gen ok records={} scenes={} views={} effect={} res={}x{} out={}",
        dataset.len(),
        args.scenes,
        args.views,
        effect.name(),
        width,
        height,
        args.out.display()
    );
    Ok(())
}

fn run_augment(args: AugmentArgs) -> anyhow::Result<()> {
    let dataset = Dataset::load(&args.input)?;
    let augmented = augment_dataset(&dataset)?;
    augmented.save(&args.out)?;
    println!(
        "augment ok records_in={} records_out={} out={}",
        dataset.len(),
        augmented.len(),
        args.out.display()
    );
    Ok(())
}

/// One value or a list, for sweepable config fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct SweepNetConfig {
    levels: usize,
    u0: OneOrMany<usize>,
    kernel_size: OneOrMany<usize>,
    in_channels: usize,
    out_channels: usize,
    #[serde(default = "default_slope")]
    leaky_slope: f32,
    mode: shadenet::unet::NetMode,
    #[serde(default)]
    attributes: Vec<shadenet::unet::Attribute>,
}

fn default_slope() -> f32 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
struct SweepTrainConfig {
    net: SweepNetConfig,
    loss: OneOrMany<LossKind>,
    iterations: usize,
    batch_size: usize,
    crop_size: usize,
    validation_every: usize,
    seed: u64,
}

fn expand_sweep(cfg: &SweepTrainConfig) -> Vec<(String, TrainConfig)> {
    let u0s = cfg.net.u0.values();
    let kernels = cfg.net.kernel_size.values();
    let losses = cfg.loss.values();
    let single = u0s.len() == 1 && kernels.len() == 1 && losses.len() == 1;
    let mut combos = Vec::new();
    for &u0 in &u0s {
        for &k in &kernels {
            for &loss in &losses {
                let label = if single {
                    String::new()
                } else {
                    format!("u{:02}_k{}_{}", u0, k, loss.name())
                };
                combos.push((
                    label,
                    TrainConfig {
                        net: NetConfig {
                            levels: cfg.net.levels,
                            u0,
                            kernel_size: k,
                            in_channels: cfg.net.in_channels,
                            out_channels: cfg.net.out_channels,
                            leaky_slope: cfg.net.leaky_slope,
                            mode: cfg.net.mode,
                            attributes: cfg.net.attributes.clone(),
                        },
                        loss,
                        iterations: cfg.iterations,
                        batch_size: cfg.batch_size,
                        crop_size: cfg.crop_size,
                        validation_every: cfg.validation_every,
                        seed: cfg.seed,
                        checkpoint_dir: None,
                    },
                ));
            }
        }
    }
    combos
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let sweep: SweepTrainConfig = serde_json::from_str(&text)?;
    let combos = expand_sweep(&sweep);
    std::fs::create_dir_all(&args.out)?;
    let dataset = Dataset::load(&args.data)?;
    let n = combos.len();
    for (label, mut config) in combos {
        let combo_dir = if label.is_empty() {
            args.out.clone()
        } else {
            args.out.join(&label)
        };
        std::fs::create_dir_all(&combo_dir)?;
        config.checkpoint_dir = Some(combo_dir.clone());
        let output = train::train(&config, &dataset)?;
        let curves = if label.is_empty() {
            args.out.join("curves.csv")
        } else {
            args.out.join(format!("curves_{label}.csv"))
        };
        train::write_curves_csv(&curves, &output.curve)?;
        let checkpoint = combo_dir.join(format!("checkpoint_{:06}.dshd", config.iterations));
        println!(
            "train ok u0={} kernel={} loss={} iterations={} final_val_dssim={:.6} checkpoint={} curves={}",
            config.net.u0,
            config.net.kernel_size,
            config.loss.name(),
            config.iterations,
            output.final_validation.mean_dssim,
            checkpoint.display(),
            curves.display(),
        );
    }
    if n > 1 {
        println!("train-sweep ok combos={n} out={}", args.out.display());
    }
    Ok(())
}

fn run_infer(args: InferArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (net, _) = ckpt.restore()?;
    let gbuffer = load_gbuffer(&args.gbuffer)?;
    let out = runtime::infer(&net, &gbuffer)?;
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("pfm") => shadenet::dataset::pfm::write_pfm(&args.out, &out)?,
        _ => runtime::tonemap_export(&out, args.gamma, &args.out)?,
    }
    println!(
        "infer ok out={} channels={} mean={:.6}",
        args.out.display(),
        out.channels(),
        out.mean()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let split = Split::from_name(&args.split)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (net, _) = ckpt.restore()?;
    let dataset = Dataset::load(&args.data)?;
    let eval = runtime::evaluate(&net, &dataset, split)?;
    if let Some(report) = &args.report {
        runtime::write_evaluation_csv(report, &eval)?;
    }
    println!(
        "eval ok split={} records={} mean_ssim={:.6} mean_dssim={:.6}",
        args.split,
        eval.per_record.len(),
        eval.mean_ssim,
        eval.mean_dssim
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> anyhow::Result<()> {
    let (width, height) = parse_resolution(&args.res)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (net, _) = ckpt.restore()?;
    let d = net.config().resolution_divisor();
    if width % d != 0 || height % d != 0 {
        bail!("resolution {width}x{height} not divisible by {d}");
    }
    let stats = runtime::benchmark(&net, width, height, args.warmup, args.iters, args.seed)?;
    println!(
        "bench ok res={}x{} iters={} mean_ms={:.3} median_ms={:.3} p95_ms={:.3}",
        width, height, args.iters, stats.mean_ms, stats.median_ms, stats.p95_ms
    );
    Ok(())
}

#[derive(Deserialize)]
struct NetOnly {
    net: NetConfig,
}

fn run_params(args: ParamsArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let net: NetConfig = match serde_json::from_str(&text) {
        Ok(net) => net,
        Err(_) => serde_json::from_str::<NetOnly>(&text)
            .context("config is neither a network config nor a train config")?
            .net,
    };
    net.validate()?;
    println!("{}", param_count(&net));
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Gen(a) => run_gen(a),
        Cmd::Augment(a) => run_augment(a),
        Cmd::Train(a) => run_train(a),
        Cmd::Infer(a) => run_infer(a),
        Cmd::Eval(a) => run_eval(a),
        Cmd::Bench(a) => run_bench(a),
        Cmd::Params(a) => run_params(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

