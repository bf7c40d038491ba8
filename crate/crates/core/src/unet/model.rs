use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::config::{doubling_output_padding, halving_padding, UNetConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::{NormSpec, SpecImage};
use crate::tensor::{
    add_channel_bias, batchnorm2d, concat_channels, conv2d, conv_transpose2d, dropout, leaky_relu, read_checkpoint,
    relu, scale, tanh, write_checkpoint, Checkpoint, Mode, RunningStats, Shape, Tensor, BN_EPS, BN_MOMENTUM,
};

pub const INIT_STD: f64 = 0.02;
const DROPOUT_STREAM: u64 = 0xD50;

/// Layer recipes named after their op sequence: C conv, DC transposed conv,
/// B batchnorm, D dropout, L leaky ReLU, R ReLU, T tanh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    CL,
    CBL,
    /// Innermost encoder block. Carries a bias instead of batchnorm: with
    /// batch 1 and a 1×1 bottleneck, batch statistics are degenerate.
    CBR,
    DCDR,
    DCR,
    DCT,
}

impl BlockKind {
    pub fn label(self) -> &'static str {
        match self {
            BlockKind::CL => "CL",
            BlockKind::CBL => "CBL",
            BlockKind::CBR => "CBR",
            BlockKind::DCDR => "DCDR",
            BlockKind::DCR => "DCR",
            BlockKind::DCT => "DCT",
        }
    }

    fn transposed(self) -> bool {
        matches!(self, BlockKind::DCDR | BlockKind::DCR | BlockKind::DCT)
    }

    fn has_bn(self) -> bool {
        matches!(self, BlockKind::CBL | BlockKind::DCDR | BlockKind::DCR)
    }
}

struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    stats: Mutex<RunningStats>,
}

/// One stride-2 convolution block.
pub struct Block {
    pub kind: BlockKind,
    pub in_ch: usize,
    pub out_ch: usize,
    weight: Tensor,
    bias: Option<Tensor>,
    bn: Option<BatchNorm>,
    padding: (usize, usize),
    output_padding: (usize, usize),
}

impl Block {
    fn new(kind: BlockKind, in_ch: usize, out_ch: usize, cfg: &UNetConfig, rng: &mut crate::rng::Rng) -> Self {
        let (kh, kw) = (cfg.filter_freq, cfg.filter_time);
        let wshape = if kind.transposed() {
            Shape::new(in_ch, out_ch, kh, kw)
        } else {
            Shape::new(out_ch, in_ch, kh, kw)
        };
        let weight = Tensor::randn(wshape, INIT_STD, rng).requires_grad_(true);
        let bn = kind.has_bn().then(|| BatchNorm {
            gamma: Tensor::ones(Shape::vector(out_ch)).requires_grad_(true),
            beta: Tensor::zeros(Shape::vector(out_ch)).requires_grad_(true),
            stats: Mutex::new(RunningStats::new(out_ch)),
        });
        let bias = (!kind.has_bn()).then(|| Tensor::zeros(Shape::vector(out_ch)).requires_grad_(true));
        Block {
            kind,
            in_ch,
            out_ch,
            weight,
            bias,
            bn,
            padding: (halving_padding(kh), halving_padding(kw)),
            output_padding: (doubling_output_padding(kh), doubling_output_padding(kw)),
        }
    }

    fn forward(&self, x: &Tensor, mode: Mode, slope: f64, dropout_p: f64, seed: u64) -> Result<Tensor> {
        let mut h = if self.kind.transposed() {
            conv_transpose2d(x, &self.weight, (2, 2), self.padding, self.output_padding)?
        } else {
            conv2d(x, &self.weight, (2, 2), self.padding)?
        };
        if let Some(b) = &self.bias {
            h = add_channel_bias(&h, b)?;
        }
        if let Some(bn) = &self.bn {
            let mut stats = bn.stats.lock();
            h = batchnorm2d(&h, &bn.gamma, &bn.beta, &mut stats, mode, BN_MOMENTUM, BN_EPS)?;
        }
        Ok(match self.kind {
            BlockKind::CL | BlockKind::CBL => leaky_relu(&h, slope),
            BlockKind::CBR | BlockKind::DCR => relu(&h),
            BlockKind::DCDR => relu(&dropout(&h, dropout_p, mode, seed)?),
            BlockKind::DCT => tanh(&h),
        })
    }

    fn named_parameters(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut v = vec![(format!("{prefix}.weight"), self.weight.clone())];
        if let Some(b) = &self.bias {
            v.push((format!("{prefix}.bias"), b.clone()));
        }
        if let Some(bn) = &self.bn {
            v.push((format!("{prefix}.bn.gamma"), bn.gamma.clone()));
            v.push((format!("{prefix}.bn.beta"), bn.beta.clone()));
        }
        v
    }
}

/// The generator: encoder of `depth` halving blocks, decoder of `depth`
/// doubling blocks, decoder block `j ≥ 1` fed with the previous decoder
/// output concatenated with encoder output `depth − 1 − j`.
pub struct UNetModel {
    config: UNetConfig,
    encoders: Vec<Block>,
    decoders: Vec<Block>,
    mode: Mode,
    norm: Option<NormSpec>,
    seed: u64,
    forward_calls: AtomicU64,
}

impl std::fmt::Debug for UNetModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UNetModel")
            .field("config", &self.config)
            .field("mode", &self.mode)
            .field("norm", &self.norm)
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

impl UNetModel {
    /// Weights `N(0, 0.02²)`, biases and BN shifts 0, BN scales 1. Starts in train mode.
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let c = &config.enc_channels;
        let d = config.depth;
        let mut encoders = Vec::with_capacity(d);
        for i in 0..d {
            let kind = match i {
                0 => BlockKind::CL,
                i if i == d - 1 => BlockKind::CBR,
                _ => BlockKind::CBL,
            };
            let in_ch = if i == 0 { 1 } else { c[i - 1] };
            encoders.push(Block::new(kind, in_ch, c[i], &config, &mut rng));
        }
        let mut decoders = Vec::with_capacity(d);
        let mut prev = c[d - 1];
        for j in 0..d {
            let in_ch = if j == 0 { prev } else { prev + c[d - 1 - j] };
            let (kind, out_ch) = if j == d - 1 {
                (BlockKind::DCT, 1)
            } else if j < config.dropout_decoder_layers {
                (BlockKind::DCDR, c[d - 2 - j])
            } else {
                (BlockKind::DCR, c[d - 2 - j])
            };
            decoders.push(Block::new(kind, in_ch, out_ch, &config, &mut rng));
            prev = out_ch;
        }
        Ok(UNetModel {
            config,
            encoders,
            decoders,
            mode: Mode::Train,
            norm: None,
            seed,
            forward_calls: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn encoders(&self) -> &[Block] {
        &self.encoders
    }

    pub fn decoders(&self) -> &[Block] {
        &self.decoders
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn norm(&self) -> Option<NormSpec> {
        self.norm
    }

    pub fn set_norm(&mut self, norm: NormSpec) {
        self.norm = Some(norm);
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn blocks(&self) -> impl Iterator<Item = (String, &Block)> {
        let enc = self.encoders.iter().enumerate().map(|(i, b)| (format!("enc{i}"), b));
        let dec = self.decoders.iter().enumerate().map(|(i, b)| (format!("dec{i}"), b));
        enc.chain(dec)
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        self.blocks().flat_map(|(n, b)| b.named_parameters(&n)).collect()
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&self) {
        self.parameters().iter().for_each(Tensor::zero_grad);
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        let (h, w) = self.config.input_size;
        if s.channels != 1 || s.height != h || s.width != w || s.batch == 0 {
            return Err(Error::Dimension(format!("u-net expects N×1×{h}×{w} input, got {s}")));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, mode: Mode, zero_bottleneck: bool, trace: Option<&mut Vec<Shape>>) -> Result<Tensor> {
        self.check_input(x)?;
        let call = if mode == Mode::Train {
            self.forward_calls.fetch_add(1, Ordering::Relaxed)
        } else {
            0
        };
        let call_seed = derive_seed(derive_seed(self.seed, DROPOUT_STREAM), call);
        let (slope, p) = (self.config.leaky_slope, self.config.dropout_p);
        let mut shapes = Vec::new();
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x.clone();
        for b in &self.encoders {
            h = b.forward(&h, mode, slope, p, 0)?;
            shapes.push(h.shape());
            skips.push(h.clone());
        }
        if zero_bottleneck {
            h = scale(&h, 0.0);
        }
        let d = self.config.depth;
        for (j, b) in self.decoders.iter().enumerate() {
            let input = if j == 0 {
                h
            } else {
                concat_channels(&h, &skips[d - 1 - j])?
            };
            h = b.forward(&input, mode, slope, p, derive_seed(call_seed, j as u64))?;
            shapes.push(h.shape());
        }
        if let Some(t) = trace {
            *t = shapes;
        }
        Ok(h)
    }

    /// `N×1×H×W` in, same shape out, values in (−1, 1).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, self.mode, false, None)
    }

    /// [`UNetModel::forward`] in an explicit mode, ignoring the model's own flag.
    pub fn forward_with_mode(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.run(x, mode, false, None)
    }

    /// Forward pass with the bottleneck activations replaced by zeros, so the
    /// output depends on the input only through the skip connections.
    pub fn forward_zeroed_bottleneck(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, self.mode, true, None)
    }

    /// Output together with the shape after every block (encoders, then decoders).
    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, Vec<Shape>)> {
        let mut shapes = Vec::new();
        let y = self.run(x, self.mode, false, Some(&mut shapes))?;
        Ok((y, shapes))
    }

    /// Eval-mode forward of a batch of images without recording a graph.
    pub fn forward_images(&self, images: &[SpecImage]) -> Result<Vec<SpecImage>> {
        let x = images_to_tensor(images)?;
        let y = crate::tensor::no_grad(|| self.forward_with_mode(&x, Mode::Eval))?;
        tensor_to_images(&y, images)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::default();
        ck.set_meta("model", "unet");
        ck.set_meta("depth", c.depth);
        ck.set_meta(
            "enc_channels",
            c.enc_channels
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        ck.set_meta("filter_freq", c.filter_freq);
        ck.set_meta("filter_time", c.filter_time);
        ck.set_meta("input_h", c.input_size.0);
        ck.set_meta("input_w", c.input_size.1);
        ck.set_meta("leaky_slope", c.leaky_slope);
        ck.set_meta("dropout_decoder_layers", c.dropout_decoder_layers);
        ck.set_meta("dropout_p", c.dropout_p);
        ck.set_meta("seed", self.seed);
        ck.set_meta("forward_calls", self.forward_calls.load(Ordering::Relaxed));
        if let Some(n) = self.norm {
            ck.set_meta("norm_lo", n.lo_db);
            ck.set_meta("norm_hi", n.hi_db);
        }
        for (name, t) in self.named_parameters() {
            ck.push(name, t.shape().dims().to_vec(), t.to_vec());
        }
        for (name, b) in self.blocks() {
            if let Some(bn) = &b.bn {
                let s = bn.stats.lock();
                ck.push(format!("{name}.bn.running_mean"), vec![s.mean.len()], s.mean.clone());
                ck.push(format!("{name}.bn.running_var"), vec![s.var.len()], s.var.clone());
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ck.meta(k)
                .ok_or_else(|| Error::format(0, format!("checkpoint metadata lacks '{k}'")))
        };
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::format(0, format!("bad checkpoint metadata {k}={v}")))
        }
        if meta("model")? != "unet" {
            return Err(Error::format(0, "checkpoint does not hold a u-net"));
        }
        let enc_channels = meta("enc_channels")?
            .split(',')
            .map(|v| parse("enc_channels", v))
            .collect::<Result<Vec<usize>>>()?;
        let config = UNetConfig {
            depth: parse("depth", meta("depth")?)?,
            enc_channels,
            filter_freq: parse("filter_freq", meta("filter_freq")?)?,
            filter_time: parse("filter_time", meta("filter_time")?)?,
            input_size: (parse("input_h", meta("input_h")?)?, parse("input_w", meta("input_w")?)?),
            leaky_slope: parse("leaky_slope", meta("leaky_slope")?)?,
            dropout_decoder_layers: parse("dropout_decoder_layers", meta("dropout_decoder_layers")?)?,
            dropout_p: parse("dropout_p", meta("dropout_p")?)?,
        };
        let mut model = UNetModel::new(config, parse("seed", meta("seed")?)?)?;
        model.forward_calls = AtomicU64::new(parse("forward_calls", meta("forward_calls")?)?);
        if let (Some(lo), Some(hi)) = (ck.meta("norm_lo"), ck.meta("norm_hi")) {
            model.norm = Some(NormSpec::new(parse("norm_lo", lo)?, parse("norm_hi", hi)?)?);
        }
        let entry = |name: &str, numel: usize| -> Result<&[f64]> {
            let e = ck
                .get(name)
                .ok_or_else(|| Error::format(0, format!("checkpoint lacks entry '{name}'")))?;
            if e.values.len() != numel {
                return Err(Error::format(
                    0,
                    format!("entry '{name}' holds {} values, model expects {numel}", e.values.len()),
                ));
            }
            Ok(&e.values)
        };
        for (name, t) in model.named_parameters() {
            t.assign(entry(&name, t.numel())?)?;
        }
        for (name, b) in model.blocks() {
            if let Some(bn) = &b.bn {
                let mut s = bn.stats.lock();
                s.mean = entry(&format!("{name}.bn.running_mean"), b.out_ch)?.to_vec();
                s.var = entry(&format!("{name}.bn.running_var"), b.out_ch)?.to_vec();
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }

    /// Loads weights, statistics and normalization; the model comes back in eval mode.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::from_checkpoint(&read_checkpoint(path)?)?;
        m.mode = Mode::Eval;
        Ok(m)
    }
}

/// Stack equally sized images into an `N×1×H×W` tensor.
pub fn images_to_tensor(images: &[SpecImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Dimension("empty image batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if img.height != h || img.width != w {
            return Err(Error::Dimension(format!(
                "image batch mixes {h}x{w} and {}x{}",
                img.height, img.width
            )));
        }
        data.extend_from_slice(&img.values);
    }
    Tensor::from_vec(Shape::new(images.len(), 1, h, w), data)
}

/// Split an `N×1×H×W` tensor back into images, copying layout metadata from `like`.
pub fn tensor_to_images(t: &Tensor, like: &[SpecImage]) -> Result<Vec<SpecImage>> {
    let s = t.shape();
    if s.batch != like.len() || s.channels != 1 {
        return Err(Error::Dimension(format!(
            "tensor {s} does not hold {} single-channel images",
            like.len()
        )));
    }
    let data = t.data();
    Ok(like
        .iter()
        .zip(data.chunks(s.plane()))
        .map(|(img, v)| SpecImage {
            height: s.height,
            width: s.width,
            values: v.to_vec(),
            ..img.clone()
        })
        .collect())
}
