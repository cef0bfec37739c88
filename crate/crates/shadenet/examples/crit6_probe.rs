use shadenet::dataset::{augment_dataset, generate, GenerateOptions, Split};
use shadenet::loss::LossKind;
use shadenet::render::{AoSpec, EffectSpec, HemisphereWeighting};
use shadenet::runtime::{constant_mean_baseline, evaluate};
use shadenet::train::{train, TrainConfig};
use shadenet::unet::{Attribute, NetConfig, NetMode};
use std::time::Instant;

fn run(scenes: usize, views: usize, res: usize, radius: f64, prims: usize, iters: usize, seed: u64) {
    let opts = GenerateOptions {
        scenes, views, width: res, height: res,
        effect: EffectSpec::Ao(AoSpec { radius, spp: 256, weighting: HemisphereWeighting::Cosine }),
        extra_primitives: prims,
        test_scenes: 0,
        seed,
    };
    let base = generate(&opts).unwrap();
    let ds = augment_dataset(&base).unwrap();
    let baseline = constant_mean_baseline(&ds, Split::Train, Split::Validation).unwrap();
    let cfg = TrainConfig {
        net: NetConfig {
            levels: 4, u0: 8, kernel_size: 3, in_channels: 6, out_channels: 1,
            leaky_slope: 0.01, mode: NetMode::Mono,
            attributes: vec![Attribute::NormalsCamera, Attribute::PositionsCamera],
        },
        loss: LossKind::ssim(),
        iterations: iters,
        batch_size: 8,
        crop_size: 64,
        validation_every: 500,
        seed: 7,
        checkpoint_dir: None,
    };
    let t1 = Instant::now();
    let out = train(&cfg, &ds).unwrap();
    let train_eval = evaluate(&out.network, &ds, Split::Train).unwrap();
    let vals: Vec<String> = out.curve.iter().filter(|p| p.val_dssim.is_some())
        .map(|p| format!("{}:{:.4}({:.2})", p.iteration, p.val_dssim.unwrap(), p.val_dssim.unwrap()/baseline.mean_dssim)).collect();
    println!("scenes={scenes} views={views} res={res} seed={seed}: baseline {:.4} | {} | train {:.4} | {:?}",
        baseline.mean_dssim, vals.join(" "), train_eval.mean_dssim, t1.elapsed());
}

fn main() {
    run(2, 32, 96, 0.3, 5, 4000, 11);
}
