//! Deployment half: run a trained network on G-buffers, compose effects,
//! rescale the effect radius, evaluate against a split and time the
//! forward pass.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::loss;
use crate::render::GBuffer;
use crate::tensor::Tensor;
use crate::unet::{NetMode, Network};

/// Assembles the network input from a G-buffer and runs the forward pass.
///
/// Mono networks whose attribute list contains a color-dependent group run
/// once per color channel and the scalar outputs are concatenated; mono
/// networks on purely geometric attributes (and rgb networks) run once.
pub fn infer(net: &Network, gbuffer: &GBuffer) -> Result<Tensor> {
    let cfg = net.config();
    if cfg.attributes.is_empty() {
        return Err(Error::invalid(
            "network config has no attribute list to read from a G-buffer",
        ));
    }
    let replicate = cfg.mode == NetMode::Mono
        && cfg.attributes.iter().any(|a| a.color_dependent());
    if !replicate {
        let mut input: Option<Tensor> = None;
        for attr in &cfg.attributes {
            let group = gbuffer.attribute(*attr, cfg.mode)?;
            input = Some(match input {
                Some(t) => t.concat_channels(&group)?,
                None => group,
            });
        }
        return net.forward(&input.expect("attribute list checked non-empty"));
    }

    // One scalar forward per color channel.
    let mut out: Option<Tensor> = None;
    for c in 0..3 {
        let mut input: Option<Tensor> = None;
        for attr in &cfg.attributes {
            let group = if attr.color_dependent() {
                gbuffer.attribute(*attr, NetMode::Rgb)?.slice_channels(c, 1)?
            } else {
                gbuffer.attribute(*attr, cfg.mode)?
            };
            input = Some(match input {
                Some(t) => t.concat_channels(&group)?,
                None => group,
            });
        }
        let y = net.forward(&input.expect("non-empty"))?;
        out = Some(match out {
            Some(t) => t.concat_channels(&y)?,
            None => y,
        });
    }
    Ok(out.expect("three replicas"))
}

/// `ao * ambient * albedo`, per pixel and channel.
pub fn compose_ao(ao: &Tensor, albedo: &Tensor, ambient: [f32; 3]) -> Result<Tensor> {
    if ao.channels() != 1
        || albedo.channels() != 3
        || ao.height() != albedo.height()
        || ao.width() != albedo.width()
    {
        return Err(Error::shape(format!(
            "compose_ao expects (1, H, W) occlusion and (3, H, W) albedo, got {:?} and {:?}",
            ao.shape(),
            albedo.shape()
        )));
    }
    let plane = ao.height() * ao.width();
    let mut out = Tensor::zeros(3, ao.height(), ao.width());
    for c in 0..3 {
        for i in 0..plane {
            let v = ao.data()[i] * ambient[c] * albedo.data()[c * plane + i];
            out.data_mut()[c * plane + i] = v;
        }
    }
    Ok(out)
}

/// Scales the spatial-scale attributes (camera-space positions, depth and
/// focal distance) by `factor`; normals are untouched. Scaling positions by
/// `N` shrinks the effect radius the network was trained with by `1/N`.
pub fn rescale_effect_radius(gbuffer: &GBuffer, factor: f32) -> GBuffer {
    assert!(factor > 0.0, "rescale factor must be positive");
    GBuffer {
        positions_camera: gbuffer.positions_camera.map(|v| v * factor),
        normals_camera: gbuffer.normals_camera.clone(),
        normals_world: gbuffer.normals_world.clone(),
        depth: gbuffer.depth.map(|v| v * factor),
        focal_distance: gbuffer.focal_distance.map(|v| v * factor),
        albedo: gbuffer.albedo.clone(),
        direct_light: gbuffer.direct_light.clone(),
        coverage: gbuffer.coverage.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub id: String,
    pub ssim: f64,
    pub dssim: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub mean_ssim: f64,
    pub mean_dssim: f64,
    pub per_record: Vec<EvalRecord>,
}

fn summarize(per_record: Vec<EvalRecord>) -> Evaluation {
    let n = per_record.len() as f64;
    let mean_ssim = per_record.iter().map(|r| r.ssim).sum::<f64>() / n;
    let mean_dssim = per_record.iter().map(|r| r.dssim).sum::<f64>() / n;
    Evaluation { mean_ssim, mean_dssim, per_record }
}

fn record_target(record: &SampleRecord, prediction: &Tensor) -> Result<Tensor> {
    if prediction.channels() == record.target.channels() {
        Ok(record.target.clone())
    } else {
        record.target_for(NetMode::Mono)
    }
}

/// Mean SSIM/DSSIM of the network over one split.
pub fn evaluate(net: &Network, dataset: &Dataset, split: Split) -> Result<Evaluation> {
    let indices = dataset.indices_of(split);
    if indices.is_empty() {
        return Err(Error::invalid(format!("split `{}` is empty", split.name())));
    }
    let mut per_record = Vec::with_capacity(indices.len());
    for i in indices {
        let record = dataset.record(i);
        let prediction = infer(net, &record.gbuffer)?;
        let target = record_target(record, &prediction)?;
        let d = loss::dssim(&prediction, &target)?;
        per_record.push(EvalRecord {
            id: record.meta.id.clone(),
            ssim: 1.0 - 2.0 * d,
            dssim: d,
        });
    }
    Ok(summarize(per_record))
}

/// Baseline that predicts the per-channel mean target of `fit_split` for
/// every record of `eval_split`.
pub fn constant_mean_baseline(
    dataset: &Dataset,
    fit_split: Split,
    eval_split: Split,
) -> Result<Evaluation> {
    let fit = dataset.indices_of(fit_split);
    let eval_idx = dataset.indices_of(eval_split);
    if fit.is_empty() || eval_idx.is_empty() {
        return Err(Error::invalid("baseline needs non-empty splits"));
    }
    let channels = dataset.record(fit[0]).target.channels();
    let mut means = vec![0.0f64; channels];
    let mut count = 0.0f64;
    for &i in &fit {
        let t = &dataset.record(i).target;
        for c in 0..channels {
            means[c] += t.channel(c).iter().map(|&v| v as f64).sum::<f64>();
        }
        count += (t.height() * t.width()) as f64;
    }
    for m in &mut means {
        *m /= count;
    }

    let mut per_record = Vec::with_capacity(eval_idx.len());
    for i in eval_idx {
        let record = dataset.record(i);
        let t = &record.target;
        let mut pred = Tensor::zeros(channels, t.height(), t.width());
        for c in 0..channels {
            let v = means[c] as f32;
            pred.channel_mut(c).fill(v);
        }
        let d = loss::dssim(&pred, t)?;
        per_record.push(EvalRecord {
            id: record.meta.id.clone(),
            ssim: 1.0 - 2.0 * d,
            dssim: d,
        });
    }
    Ok(summarize(per_record))
}

pub fn write_evaluation_csv(path: &Path, eval: &Evaluation) -> Result<()> {
    let mut out = String::from("record,ssim,dssim\n");
    for r in &eval.per_record {
        out.push_str(&format!("{},{},{}\n", r.id, r.ssim, r.dssim));
    }
    out.push_str(&format!("mean,{},{}\n", eval.mean_ssim, eval.mean_dssim));
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub samples_ms: Vec<f64>,
}

/// Times the bare forward pass on a random input at the given resolution.
/// Warmup runs are excluded from the statistics.
pub fn benchmark(
    net: &Network,
    width: usize,
    height: usize,
    warmup: usize,
    iterations: usize,
    seed: u64,
) -> Result<BenchStats> {
    if iterations == 0 {
        return Err(Error::invalid("benchmark needs at least one iteration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = net.config();
    let data = (0..cfg.in_channels * height * width)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let input = Tensor::from_vec(cfg.in_channels, height, width, data)?;
    for _ in 0..warmup {
        std::hint::black_box(net.forward(&input)?);
    }
    let mut samples_ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        std::hint::black_box(net.forward(&input)?);
        samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = samples_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mean_ms = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let median_ms = sorted[sorted.len() / 2];
    let p95_idx = ((sorted.len() as f64) * 0.95).ceil() as usize - 1;
    let p95_ms = sorted[p95_idx.min(sorted.len() - 1)];
    Ok(BenchStats { mean_ms, median_ms, p95_ms, samples_ms })
}

/// Clamps to [0, 1], applies `v^(1/gamma)`, and quantizes to bytes
/// (round half up). Returns the interleaved bytes and the channel count.
pub fn tonemap_bytes(t: &Tensor, gamma: f32) -> Result<(Vec<u8>, usize)> {
    if gamma <= 0.0 {
        return Err(Error::invalid("gamma must be positive"));
    }
    let c = t.channels();
    if c != 1 && c != 3 {
        return Err(Error::invalid(format!("tonemap expects 1 or 3 channels, got {c}")));
    }
    let inv = 1.0 / gamma;
    let plane = t.height() * t.width();
    let mut bytes = Vec::with_capacity(c * plane);
    for i in 0..plane {
        for ch in 0..c {
            let v = t.data()[ch * plane + i].clamp(0.0, 1.0).powf(inv);
            bytes.push((v * 255.0).round() as u8);
        }
    }
    Ok((bytes, c))
}

/// Tonemaps and writes an 8-bit PNG.
pub fn tonemap_export(t: &Tensor, gamma: f32, path: &Path) -> Result<()> {
    let (bytes, channels) = tonemap_bytes(t, gamma)?;
    let (w, h) = (t.width() as u32, t.height() as u32);
    let ok = match channels {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .map(|img| img.save(path))
            .transpose(),
        _ => image::RgbImage::from_raw(w, h, bytes)
            .map(|img| img.save(path))
            .transpose(),
    };
    match ok {
        Ok(Some(_)) | Ok(None) => {}
        Err(e) => return Err(Error::invalid(format!("PNG write failed: {e}"))),
    }
    Ok(())
}
