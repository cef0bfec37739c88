use shadenet::dataset::{augment_dataset, generate, GenerateOptions, Split, Dataset};
use shadenet::loss::LossKind;
use shadenet::render::{AoSpec, EffectSpec, HemisphereWeighting};
use shadenet::runtime::evaluate;
use shadenet::train::{train, TrainConfig};
use shadenet::unet::{Attribute, NetConfig, NetMode};

fn main() {
    let opts = GenerateOptions {
        scenes: 1,
        views: 2,
        width: 96,
        height: 96,
        effect: EffectSpec::Ao(AoSpec { radius: 0.3, spp: 256, weighting: HemisphereWeighting::Cosine }),
        extra_primitives: 5,
        test_scenes: 0,
        seed: 11,
    };
    let base = generate(&opts).unwrap();
    let ds = augment_dataset(&base).unwrap();
    // Overfit: both views in train; reuse view 1 variants as "validation".
    let n = ds.len();
    let splits: Vec<Split> = (0..n).map(|i| if i % 16 == 8 { Split::Validation } else { Split::Train }).collect();
    let ds = Dataset::from_parts(ds.records().to_vec(), splits).unwrap();

    for levels in [4usize] {
        let cfg = TrainConfig {
            net: NetConfig {
                levels, u0: 8, kernel_size: 3, in_channels: 6, out_channels: 1,
                leaky_slope: 0.01, mode: NetMode::Mono,
                attributes: vec![Attribute::NormalsCamera, Attribute::PositionsCamera],
            },
            loss: LossKind::ssim(),
            iterations: 4000,
            batch_size: 8,
            crop_size: 64,
            validation_every: 1000,
            seed: 7,
            checkpoint_dir: None,
        };
        let out = train(&cfg, &ds).unwrap();
        let train_eval = evaluate(&out.network, &ds, Split::Train).unwrap();
        let last: Vec<String> = out.curve.iter().filter(|p| p.val_dssim.is_some())
            .map(|p| format!("it{}={:.4}", p.iteration, p.val_dssim.unwrap())).collect();
        println!("levels={levels}: overfit-train dssim {:.4}; val points {}", train_eval.mean_dssim, last.join(" "));
    }
}
