//! Residual 1-D encoder-decoder with UNet-style skips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    avgpool2, avgpool2_backward, conv1d, conv1d_backward, maxpool2, maxpool2_backward, mse_loss,
    relu, relu_backward, upsample2, upsample2_backward, upsample2_linear,
    upsample2_linear_backward, ConvGrad, ConvSpec,
};
use super::{NnError, Tensor1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    #[default]
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleKind {
    #[default]
    Nearest,
    Linear,
}

fn default_enc() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_kernel() -> usize {
    7
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "default_enc")]
    pub enc_channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_one")]
    pub in_channels: usize,
    #[serde(default = "default_one")]
    pub out_channels: usize,
    #[serde(default = "default_true")]
    pub residual: bool,
    #[serde(default = "default_true")]
    pub skip: bool,
    #[serde(default)]
    pub pool: PoolKind,
    #[serde(default)]
    pub upsample: UpsampleKind,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            enc_channels: default_enc(),
            kernel_size: default_kernel(),
            in_channels: 1,
            out_channels: 1,
            residual: true,
            skip: true,
            pool: PoolKind::Max,
            upsample: UpsampleKind::Nearest,
        }
    }
}

impl NetConfig {
    pub fn with_out_channels(mut self, out_channels: usize) -> Self {
        self.out_channels = out_channels;
        self
    }

    pub fn depth(&self) -> usize {
        self.enc_channels.len()
    }

    /// Input lengths must be multiples of this.
    pub fn length_multiple(&self) -> usize {
        1 << self.depth()
    }

    pub fn padded_len(&self, len: usize) -> usize {
        len.div_ceil(self.length_multiple()) * self.length_multiple()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.enc_channels.is_empty()
            || self.enc_channels.len() > 16
            || self.enc_channels.contains(&0)
            || self.kernel_size % 2 == 0
            || self.in_channels == 0
            || self.out_channels == 0
        {
            return Err(NnError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }

    /// (input channels, output channels) of every encoder and decoder block.
    fn block_plan(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let enc = &self.enc_channels;
        let n = enc.len();
        let encoder = (0..n)
            .map(|b| (if b == 0 { self.in_channels } else { enc[b - 1] }, enc[b]))
            .collect();
        let mut prev = enc[n - 1];
        let decoder = (0..n)
            .map(|j| {
                let out = enc[n - 1 - j];
                let skip = if self.skip { enc[n - 1 - j] } else { 0 };
                let plan = (prev + skip, out);
                prev = out;
                plan
            })
            .collect();
        (encoder, decoder)
    }
}

/// Three stacked convolutions plus an optional 1x1 projection of the block
/// input for the residual path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub convs: [ConvSpec; 3],
    pub proj: Option<ConvSpec>,
}

impl ResidualBlock {
    fn zeros(in_c: usize, out_c: usize, k: usize, residual: bool) -> Self {
        Self {
            convs: [
                ConvSpec::zeros(in_c, out_c, k),
                ConvSpec::zeros(out_c, out_c, k),
                ConvSpec::zeros(out_c, out_c, k),
            ],
            proj: (residual && in_c != out_c).then(|| ConvSpec::zeros(in_c, out_c, 1)),
        }
    }

    fn specs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.convs.iter().chain(self.proj.as_ref())
    }

    fn specs_mut(&mut self) -> impl Iterator<Item = &mut ConvSpec> {
        self.convs.iter_mut().chain(self.proj.as_mut())
    }

    fn n_specs(&self) -> usize {
        3 + usize::from(self.proj.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwDRecNetParams {
    pub config: NetConfig,
    pub encoder: Vec<ResidualBlock>,
    pub decoder: Vec<ResidualBlock>,
    pub head: ConvSpec,
    #[serde(skip)]
    version: u64,
}

/// Per-parameter gradients, in the canonical order of `PwDRecNetParams::specs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwDRecNetGrads {
    pub convs: Vec<ConvGrad>,
}

impl PwDRecNetGrads {
    pub fn zeros_like(params: &PwDRecNetParams) -> Self {
        Self {
            convs: params.specs().map(ConvGrad::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &PwDRecNetGrads) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.convs.iter_mut().for_each(|g| g.scale(s));
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.convs
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
    }
}

impl PwDRecNetParams {
    pub fn zeros(config: NetConfig) -> Result<Self, NnError> {
        config.validate()?;
        let (enc, dec) = config.block_plan();
        let k = config.kernel_size;
        let encoder = enc
            .iter()
            .map(|&(i, o)| ResidualBlock::zeros(i, o, k, config.residual))
            .collect();
        let decoder = dec
            .iter()
            .map(|&(i, o)| ResidualBlock::zeros(i, o, k, config.residual))
            .collect();
        let head = ConvSpec::zeros(config.enc_channels[0], config.out_channels, 1);
        Ok(Self {
            config,
            encoder,
            decoder,
            head,
            version: 0,
        })
    }

    /// Uniform weights in +/- sqrt(6 / fan_in), zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NnError> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in params.specs_mut() {
            let bound = (6.0 / (spec.in_channels * spec.kernel_size) as f64).sqrt();
            spec.weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..=bound));
        }
        Ok(params)
    }

    /// Rebuilds a parameter set from specs in canonical order.
    pub fn from_specs(config: NetConfig, specs: Vec<ConvSpec>) -> Result<Self, NnError> {
        let mut params = Self::zeros(config)?;
        if specs.len() != params.n_specs() {
            return Err(NnError::ShapeMismatch(format!(
                "{} convolutions, expected {}",
                specs.len(),
                params.n_specs()
            )));
        }
        for (slot, spec) in params.specs_mut().zip(specs) {
            spec.validate()?;
            if (slot.in_channels, slot.out_channels, slot.kernel_size)
                != (spec.in_channels, spec.out_channels, spec.kernel_size)
            {
                return Err(NnError::ShapeMismatch("convolution dims differ from config".into()));
            }
            *slot = spec;
        }
        Ok(params)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(ResidualBlock::specs)
            .chain(std::iter::once(&self.head))
    }

    /// Mutable access invalidates caches from earlier forward passes.
    pub fn specs_mut(&mut self) -> impl Iterator<Item = &mut ConvSpec> {
        self.version += 1;
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(ResidualBlock::specs_mut)
            .chain(std::iter::once(&mut self.head))
    }

    pub fn n_specs(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(ResidualBlock::n_specs)
            .sum::<usize>()
            + 1
    }

    pub fn n_params(&self) -> usize {
        self.specs().map(ConvSpec::n_params).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.specs().flat_map(|s| s.weights.iter().chain(&s.bias).copied())
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Tensor1,
    h1: Tensor1,
    h2: Tensor1,
    out: Tensor1,
    pool_arg: Vec<u8>,
}

/// Activations retained by `forward` for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    encoder: Vec<BlockCache>,
    decoder: Vec<BlockCache>,
    head_input: Tensor1,
}

fn block_forward(block: &ResidualBlock, x: Tensor1, residual: bool) -> Result<BlockCache, NnError> {
    let h1 = relu(&conv1d(&x, &block.convs[0])?);
    let h2 = relu(&conv1d(&h1, &block.convs[1])?);
    let mut r = conv1d(&h2, &block.convs[2])?;
    if residual {
        match &block.proj {
            Some(p) => r.add_assign(&conv1d(&x, p)?),
            None => r.add_assign(&x),
        }
    }
    Ok(BlockCache {
        input: x,
        h1,
        h2,
        out: relu(&r),
        pool_arg: Vec::new(),
    })
}

fn block_backward(
    block: &ResidualBlock,
    cache: &BlockCache,
    grad_out: &Tensor1,
    residual: bool,
    grads: &mut [ConvGrad],
) -> Result<Tensor1, NnError> {
    let g_r = relu_backward(&cache.out, grad_out);
    let g_h2 = conv1d_backward(&cache.h2, &block.convs[2], &g_r, &mut grads[2])?;
    let g_h2 = relu_backward(&cache.h2, &g_h2);
    let g_h1 = conv1d_backward(&cache.h1, &block.convs[1], &g_h2, &mut grads[1])?;
    let g_h1 = relu_backward(&cache.h1, &g_h1);
    let mut g_x = conv1d_backward(&cache.input, &block.convs[0], &g_h1, &mut grads[0])?;
    if residual {
        match &block.proj {
            Some(p) => g_x.add_assign(&conv1d_backward(&cache.input, p, &g_r, &mut grads[3])?),
            None => g_x.add_assign(&g_r),
        }
    }
    Ok(g_x)
}

/// Full forward pass on an input whose length is a multiple of
/// `config.length_multiple()`.
pub fn forward(params: &PwDRecNetParams, x: &Tensor1) -> Result<(Tensor1, ForwardCache), NnError> {
    let cfg = &params.config;
    if x.channels() != cfg.in_channels || x.len() % cfg.length_multiple() != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "input {:?} for {} channels, length multiple {}",
            x.shape(),
            cfg.in_channels,
            cfg.length_multiple()
        )));
    }
    let mut encoder = Vec::with_capacity(cfg.depth());
    let mut h = x.clone();
    for block in &params.encoder {
        let mut cache = block_forward(block, h, cfg.residual)?;
        h = match cfg.pool {
            PoolKind::Max => {
                let (p, arg) = maxpool2(&cache.out)?;
                cache.pool_arg = arg;
                p
            }
            PoolKind::Avg => avgpool2(&cache.out)?,
        };
        encoder.push(cache);
    }
    let mut decoder = Vec::with_capacity(cfg.depth());
    for (j, block) in params.decoder.iter().enumerate() {
        let up = match cfg.upsample {
            UpsampleKind::Nearest => upsample2(&h),
            UpsampleKind::Linear => upsample2_linear(&h),
        };
        let input = if cfg.skip {
            up.concat_channels(&encoder[cfg.depth() - 1 - j].out)?
        } else {
            up
        };
        let cache = block_forward(block, input, cfg.residual)?;
        h = cache.out.clone();
        decoder.push(cache);
    }
    let out = conv1d(&h, &params.head)?;
    Ok((
        out,
        ForwardCache {
            version: params.version,
            encoder,
            decoder,
            head_input: h,
        },
    ))
}

/// Reverse pass; `cache` must come from `forward` on the same parameters.
pub fn backward(
    params: &PwDRecNetParams,
    cache: &ForwardCache,
    grad_out: &Tensor1,
) -> Result<PwDRecNetGrads, NnError> {
    if cache.version != params.version {
        return Err(NnError::StaleCache);
    }
    let cfg = &params.config;
    let n = cfg.depth();
    let mut grads = PwDRecNetGrads::zeros_like(params);
    let offsets: Vec<usize> = params
        .encoder
        .iter()
        .chain(&params.decoder)
        .scan(0, |acc, b| {
            let start = *acc;
            *acc += b.n_specs();
            Some(start)
        })
        .collect();
    let head_idx = grads.convs.len() - 1;

    let mut g = conv1d_backward(&cache.head_input, &params.head, grad_out, &mut grads.convs[head_idx])?;
    let mut skip_grads: Vec<Option<Tensor1>> = vec![None; n];
    for j in (0..n).rev() {
        let block = &params.decoder[j];
        let off = offsets[n + j];
        let g_in = block_backward(
            block,
            &cache.decoder[j],
            &g,
            cfg.residual,
            &mut grads.convs[off..off + block.n_specs()],
        )?;
        let g_up = if cfg.skip {
            let up_c = g_in.channels() - cfg.enc_channels[n - 1 - j];
            let (g_up, g_skip) = g_in.split_channels(up_c);
            skip_grads[n - 1 - j] = Some(g_skip);
            g_up
        } else {
            g_in
        };
        g = match cfg.upsample {
            UpsampleKind::Nearest => upsample2_backward(&g_up),
            UpsampleKind::Linear => upsample2_linear_backward(&g_up),
        };
    }
    for b in (0..n).rev() {
        let block = &params.encoder[b];
        let c = &cache.encoder[b];
        let mut g_out = match cfg.pool {
            PoolKind::Max => maxpool2_backward(&c.pool_arg, &g),
            PoolKind::Avg => avgpool2_backward(&g),
        };
        if let Some(gs) = &skip_grads[b] {
            g_out.add_assign(gs);
        }
        let off = offsets[b];
        g = block_backward(block, c, &g_out, cfg.residual, &mut grads.convs[off..off + block.n_specs()])?;
    }
    Ok(grads)
}

/// Loss and gradients for one window. The input is zero-padded on the right
/// to the required multiple; the loss only covers the original length.
pub fn sample_loss_and_grad(
    params: &PwDRecNetParams,
    x: &[f64],
    target: &Tensor1,
) -> Result<(f64, PwDRecNetGrads), NnError> {
    let len = x.len();
    if target.len() != len || target.channels() != params.config.out_channels {
        return Err(NnError::ShapeMismatch("target does not match input window".into()));
    }
    let input = Tensor1::new(1, len, x.to_vec())?.padded(params.config.padded_len(len));
    let (out, cache) = forward(params, &input)?;
    let (loss, g) = mse_loss(&out.cropped(len), target)?;
    let grads = backward(params, &cache, &g.padded(out.len()))?;
    Ok((loss, grads))
}

pub fn sample_loss(params: &PwDRecNetParams, x: &[f64], target: &Tensor1) -> Result<f64, NnError> {
    let pred = predict(params, x)?;
    Ok(mse_loss(&pred, target)?.0)
}

/// Prediction for a window of any length: pad, run, crop.
pub fn predict(params: &PwDRecNetParams, x: &[f64]) -> Result<Tensor1, NnError> {
    let len = x.len();
    let input = Tensor1::new(1, len, x.to_vec())?.padded(params.config.padded_len(len));
    let (out, _) = forward(params, &input)?;
    Ok(out.cropped(len))
}
