//! U-shaped network: structural config, builder, forward and backward.
//!
//! The network has a down branch that halves resolution with 2x2 mean
//! pooling and doubles kernel count per level, a single step on the
//! coarsest level, and an up branch that doubles resolution with bilinear
//! up-sampling. Every step is one grouped convolution plus a leaky ReLU,
//! with `2^l` groups on level `l`. Up-branch convolutions read the
//! up-sampled coarser output concatenated with the same-level down step
//! output (the skip link). The final level-0 up convolution has no
//! activation so the regression output is unconstrained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    bilinear_up_2x, bilinear_up_2x_backward, conv2d_backward, conv2d_forward, leaky_relu,
    leaky_relu_backward, mean_pool_2x2, mean_pool_2x2_backward, ConvGrads, ConvParams,
};
use crate::tensor::Tensor;

/// Whether one scalar network is replicated per color channel (`mono`) or a
/// single network produces all channels (`rgb`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetMode {
    Mono,
    Rgb,
}

/// Named G-buffer channel groups a network can consume, in the order they
/// are concatenated into the input tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    /// Camera-space surface normals (3 channels).
    NormalsCamera,
    /// Camera-space positions (3 channels).
    PositionsCamera,
    /// World-space surface normals (3 channels).
    NormalsWorld,
    /// Camera-space depth, the z component of position (1 channel).
    Depth,
    /// Signed distance to the focal plane (1 channel).
    FocalDistance,
    /// Diffuse albedo (color-dependent: 1 channel mono, 3 rgb).
    Albedo,
    /// Direct light (color-dependent: 1 channel mono, 3 rgb).
    DirectLight,
}

impl Attribute {
    pub fn channels(self, mode: NetMode) -> usize {
        match self {
            Attribute::NormalsCamera
            | Attribute::PositionsCamera
            | Attribute::NormalsWorld => 3,
            Attribute::Depth | Attribute::FocalDistance => 1,
            Attribute::Albedo | Attribute::DirectLight => match mode {
                NetMode::Mono => 1,
                NetMode::Rgb => 3,
            },
        }
    }

    /// True for channel groups whose values vary per color channel.
    pub fn color_dependent(self) -> bool {
        matches!(self, Attribute::Albedo | Attribute::DirectLight)
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::NormalsCamera => "normals_camera",
            Attribute::PositionsCamera => "positions_camera",
            Attribute::NormalsWorld => "normals_world",
            Attribute::Depth => "depth",
            Attribute::FocalDistance => "focal_distance",
            Attribute::Albedo => "albedo",
            Attribute::DirectLight => "direct_light",
        }
    }
}

fn default_leaky_slope() -> f32 {
    0.01
}

/// Structural description of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Number of resolution levels (>= 1); level 0 is full resolution.
    pub levels: usize,
    /// Kernel count on level 0; doubles per level. Must be even when
    /// `levels >= 2` so grouped channel blocks stay integral.
    pub u0: usize,
    /// Spatial kernel extent (odd).
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f32,
    pub mode: NetMode,
    /// Channel groups assembled (in order) into the input tensor. May be
    /// empty for synthetic networks that are fed tensors directly.
    #[serde(default)]
    pub attributes: Vec<Attribute>,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("levels must be >= 1"));
        }
        if self.u0 == 0 {
            return Err(Error::invalid("u0 must be >= 1"));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::invalid("kernel_size must be odd"));
        }
        if self.levels >= 2 && self.u0 % 2 != 0 {
            return Err(Error::invalid(
                "u0 must be even for levels >= 2 (level-l convolutions use 2^l groups)",
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channel counts must be >= 1"));
        }
        if !self.attributes.is_empty() {
            let sum: usize = self.attributes.iter().map(|a| a.channels(self.mode)).sum();
            if sum != self.in_channels {
                return Err(Error::ConfigMismatch(format!(
                    "attributes supply {sum} channels but in_channels is {}",
                    self.in_channels
                )));
            }
        }
        Ok(())
    }

    /// Input spatial dimensions must be divisible by this.
    pub fn resolution_divisor(&self) -> usize {
        1 << (self.levels - 1)
    }
}

/// Where a convolution sits in the U.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Down,
    Up,
}

/// Channel geometry of one convolution step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub level: usize,
    pub branch: Branch,
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    /// Whether a leaky ReLU follows the convolution.
    pub activated: bool,
}

/// Convolution steps in build (execution) order: down level 0..levels-1,
/// then up level levels-2..0.
pub fn layer_specs(config: &NetConfig) -> Vec<LayerSpec> {
    let l_count = config.levels;
    let u0 = config.u0;
    let mut specs = Vec::new();
    for l in 0..l_count {
        let in_channels = if l == 0 {
            config.in_channels
        } else {
            u0 << (l - 1)
        };
        // A one-level net degenerates to a single step mapping input
        // channels straight to output channels.
        let out_channels = if l_count == 1 {
            config.out_channels
        } else {
            u0 << l
        };
        specs.push(LayerSpec {
            level: l,
            branch: Branch::Down,
            in_channels,
            out_channels,
            groups: 1 << l,
            activated: true,
        });
    }
    for l in (0..l_count.saturating_sub(1)).rev() {
        let in_channels = (u0 << (l + 1)) + (u0 << l); // up-sampled + skip
        let out_channels = if l == 0 { config.out_channels } else { u0 << l };
        specs.push(LayerSpec {
            level: l,
            branch: Branch::Up,
            in_channels,
            out_channels,
            groups: 1 << l,
            activated: l != 0,
        });
    }
    specs
}

/// Closed-form number of learnable scalars: for each convolution,
/// `out * (in/groups) * k^2` weights plus `out` biases.
pub fn param_count(config: &NetConfig) -> u64 {
    let k2 = (config.kernel_size * config.kernel_size) as u64;
    layer_specs(config)
        .iter()
        .map(|s| {
            let o = s.out_channels as u64;
            let ipg = (s.in_channels / s.groups) as u64;
            o * ipg * k2 + o
        })
        .sum()
}

/// Built network: the generating config plus per-step convolution
/// parameters in build order.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetConfig,
    convs: Vec<ConvParams>,
}

/// Activations recorded during a forward pass, consumed by [`Network::backward`].
pub struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    conv_outputs: Vec<Tensor>,
}

impl Network {
    /// Builds a network with He-style weights (normal with variance
    /// `2 / (in_per_group * k^2)`) and zero biases, deterministic in `seed`.
    pub fn build(config: NetConfig, seed: u64) -> Result<Network> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::new();
        for spec in layer_specs(&config) {
            let in_per_group = spec.in_channels / spec.groups;
            let mut p = ConvParams::zeros(
                spec.out_channels,
                in_per_group,
                spec.groups,
                config.kernel_size,
            )?;
            let fan_in = (in_per_group * config.kernel_size * config.kernel_size) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
            for w in p.weights.iter_mut() {
                *w = normal.sample(&mut rng) as f32;
            }
            convs.push(p);
        }
        Ok(Network { config, convs })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn convs(&self) -> &[ConvParams] {
        &self.convs
    }

    /// Number of learnable scalars actually held by this instance.
    pub fn num_params(&self) -> usize {
        self.convs.iter().map(|c| c.param_count()).sum()
    }

    /// Parameter tensors in build order, weights before bias per step.
    pub fn param_blocks(&self) -> Vec<&[f32]> {
        self.convs
            .iter()
            .flat_map(|c| [c.weights.as_slice(), c.bias.as_slice()])
            .collect()
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut Vec<f32>> {
        self.convs
            .iter_mut()
            .flat_map(|c| {
                let ConvParams { weights, bias, .. } = c;
                [weights, bias]
            })
            .collect()
    }

    /// Replaces parameters from blocks laid out as by [`Self::param_blocks`].
    pub fn load_param_blocks(&mut self, blocks: &[Vec<f32>]) -> Result<()> {
        let mine = self.param_blocks_mut();
        if blocks.len() != mine.len() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} parameter blocks, got {}",
                mine.len(),
                blocks.len()
            )));
        }
        for (dst, src) in mine.into_iter().zip(blocks) {
            if dst.len() != src.len() {
                return Err(Error::ConfigMismatch(format!(
                    "parameter block length {} does not match expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.channels() != self.config.in_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                input.channels()
            )));
        }
        let d = self.config.resolution_divisor();
        if input.height() % d != 0 || input.width() % d != 0 {
            return Err(Error::invalid(format!(
                "input {}x{} not divisible by {} (levels = {})",
                input.height(),
                input.width(),
                d,
                self.config.levels
            )));
        }
        Ok(())
    }

    /// Runs the network. Output spatial size equals input spatial size.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false)?.0)
    }

    /// Runs the network keeping the intermediates needed by [`Self::backward`].
    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let (out, cache) = self.run(input, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<(Tensor, Option<ForwardCache>)> {
        self.check_input(input)?;
        let levels = self.config.levels;
        let slope = self.config.leaky_slope;
        let mut conv_inputs = Vec::new();
        let mut conv_outputs = Vec::new();
        let mut down_acts: Vec<Tensor> = Vec::with_capacity(levels);

        let mut x = input.clone();
        for l in 0..levels {
            if l > 0 {
                x = mean_pool_2x2(&x)?;
            }
            let y = conv2d_forward(&x, &self.convs[l])?;
            if keep {
                conv_inputs.push(x);
                conv_outputs.push(y.clone());
            }
            x = leaky_relu(&y, slope);
            down_acts.push(x.clone());
        }

        let mut idx = levels;
        for l in (0..levels.saturating_sub(1)).rev() {
            let up = bilinear_up_2x(&x);
            let cat = up.concat_channels(&down_acts[l])?;
            let y = conv2d_forward(&cat, &self.convs[idx])?;
            if keep {
                conv_inputs.push(cat);
                conv_outputs.push(y.clone());
            }
            x = if l == 0 { y } else { leaky_relu(&y, slope) };
            idx += 1;
        }

        let cache = keep.then_some(ForwardCache {
            conv_inputs,
            conv_outputs,
        });
        Ok((x, cache))
    }

    /// Reverse-mode gradients for every convolution, in build order.
    /// Gradient flow through each skip concatenation is the sum of the
    /// up-branch and pooled-path contributions.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Vec<ConvGrads>> {
        let levels = self.config.levels;
        let n_convs = self.convs.len();
        if cache.conv_inputs.len() != n_convs {
            return Err(Error::State(
                "forward cache does not match network layer count".into(),
            ));
        }
        let slope = self.config.leaky_slope;
        let mut grads: Vec<Option<ConvGrads>> = (0..n_convs).map(|_| None).collect();
        let mut skip_grads: Vec<Option<Tensor>> = (0..levels).map(|_| None).collect();

        // Up branch, unwinding from the level-0 output conv.
        let mut g = grad_out.clone();
        for l in 0..levels.saturating_sub(1) {
            let idx = n_convs - 1 - l; // up conv of level l
            if l > 0 {
                g = leaky_relu_backward(&cache.conv_outputs[idx], &g, slope)?;
            }
            let (gin, cg) = conv2d_backward(&cache.conv_inputs[idx], &self.convs[idx], &g)?;
            grads[idx] = Some(cg);
            let up_ch = self.config.u0 << (l + 1);
            let up_part = gin.slice_channels(0, up_ch)?;
            let skip_part = gin.slice_channels(up_ch, gin.channels() - up_ch)?;
            skip_grads[l] = Some(skip_part);
            g = bilinear_up_2x_backward(&up_part);
        }

        // Down branch; `g` is now the gradient at the coarsest activation
        // (or at the single step's output for a one-level net).
        for l in (0..levels).rev() {
            let gy = leaky_relu_backward(&cache.conv_outputs[l], &g, slope)?;
            let (gin, cg) = conv2d_backward(&cache.conv_inputs[l], &self.convs[l], &gy)?;
            grads[l] = Some(cg);
            if l > 0 {
                let pooled = mean_pool_2x2_backward(&gin);
                g = match skip_grads[l - 1].take() {
                    Some(skip) => pooled.add(&skip)?,
                    None => pooled,
                };
            }
        }

        Ok(grads.into_iter().map(|g| g.expect("all layers visited")).collect())
    }
}
