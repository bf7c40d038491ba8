use std::path::Path;

use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::{
    add_channel_bias, batchnorm2d, concat_channels, conv2d, leaky_relu, read_checkpoint, sigmoid, write_checkpoint,
    Checkpoint, Mode, RunningStats, Shape, Tensor, BN_EPS, BN_MOMENTUM,
};
use crate::unet::{halving_padding, INIT_STD};

/// Conditional patch discriminator geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscConfig {
    /// Output channels of the stride-2 CBL blocks.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: f64,
}

impl DiscConfig {
    /// Four blocks `b, 2b, 4b, 8b` with 5×5 kernels.
    pub fn from_base(base: usize) -> Self {
        DiscConfig {
            channels: (0..4).map(|i| base << i).collect(),
            kernel: 5,
            leaky_slope: 0.2,
        }
    }

    pub fn toy() -> Self {
        Self::from_base(8)
    }

    pub fn paper() -> Self {
        Self::from_base(64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(
                "discriminator needs at least one block of positive width".into(),
            ));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "discriminator kernel must be odd so the head keeps its size, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    /// Input sides must be divisible by this.
    pub fn reduction(&self) -> usize {
        1 << self.channels.len()
    }
}

struct DiscBlock {
    weight: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stats: Mutex<RunningStats>,
}

/// Stack of stride-2 Conv-BatchNorm-LeakyReLU blocks over the channel pair
/// `(condition, candidate)`, then a stride-1 conv to one channel and a
/// sigmoid: one real/fake probability per patch.
pub struct DiscModel {
    config: DiscConfig,
    blocks: Vec<DiscBlock>,
    head_weight: Tensor,
    head_bias: Tensor,
    mode: Mode,
    seed: u64,
}

impl std::fmt::Debug for DiscModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscModel")
            .field("config", &self.config)
            .field("mode", &self.mode)
            .finish()
    }
}

impl DiscModel {
    pub fn new(config: DiscConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let k = config.kernel;
        let mut in_ch = 2;
        let mut blocks = Vec::new();
        for &out in &config.channels {
            blocks.push(DiscBlock {
                weight: Tensor::randn(Shape::new(out, in_ch, k, k), INIT_STD, &mut rng).requires_grad_(true),
                gamma: Tensor::ones(Shape::vector(out)).requires_grad_(true),
                beta: Tensor::zeros(Shape::vector(out)).requires_grad_(true),
                stats: Mutex::new(RunningStats::new(out)),
            });
            in_ch = out;
        }
        let head_weight = Tensor::randn(Shape::new(1, in_ch, k, k), INIT_STD, &mut rng).requires_grad_(true);
        Ok(DiscModel {
            config,
            blocks,
            head_weight,
            head_bias: Tensor::zeros(Shape::vector(1)).requires_grad_(true),
            mode: Mode::Train,
            seed,
        })
    }

    pub fn config(&self) -> &DiscConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            v.push((format!("d{i}.weight"), b.weight.clone()));
            v.push((format!("d{i}.bn.gamma"), b.gamma.clone()));
            v.push((format!("d{i}.bn.beta"), b.beta.clone()));
        }
        v.push(("head.weight".into(), self.head_weight.clone()));
        v.push(("head.bias".into(), self.head_bias.clone()));
        v
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn zero_grad(&self) {
        self.parameters().iter().for_each(Tensor::zero_grad);
    }

    /// Patch probabilities `N×1×(H/2^L)×(W/2^L)` for the pair `(condition, candidate)`.
    pub fn forward(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        self.forward_with_mode(condition, candidate, self.mode)
    }

    pub fn forward_with_mode(&self, condition: &Tensor, candidate: &Tensor, mode: Mode) -> Result<Tensor> {
        self.run(condition, candidate, mode, true)
    }

    /// Normalizes with the batch's own statistics, like a training pass, but
    /// leaves the running statistics alone.
    pub fn forward_batch_stats(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        self.run(condition, candidate, Mode::Train, false)
    }

    fn run(&self, condition: &Tensor, candidate: &Tensor, mode: Mode, track: bool) -> Result<Tensor> {
        let (cs, xs) = (condition.shape(), candidate.shape());
        if cs != xs || cs.channels != 1 {
            return Err(Error::Dimension(format!(
                "discriminator takes two equal N×1×H×W images, got {cs} and {xs}"
            )));
        }
        let r = self.config.reduction();
        if cs.height % r != 0 || cs.width % r != 0 {
            return Err(Error::Dimension(format!(
                "discriminator input {}x{} is not divisible by {r}",
                cs.height, cs.width
            )));
        }
        let p = halving_padding(self.config.kernel);
        let mut h = concat_channels(condition, candidate)?;
        for b in &self.blocks {
            h = conv2d(&h, &b.weight, (2, 2), (p, p))?;
            h = if track {
                batchnorm2d(&h, &b.gamma, &b.beta, &mut b.stats.lock(), mode, BN_MOMENTUM, BN_EPS)?
            } else {
                let mut scratch = b.stats.lock().clone();
                batchnorm2d(&h, &b.gamma, &b.beta, &mut scratch, mode, BN_MOMENTUM, BN_EPS)?
            };
            h = leaky_relu(&h, self.config.leaky_slope);
        }
        let h = conv2d(&h, &self.head_weight, (1, 1), (p, p))?;
        Ok(sigmoid(&add_channel_bias(&h, &self.head_bias)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set_meta("model", "disc");
        ck.set_meta(
            "channels",
            self.config
                .channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        ck.set_meta("kernel", self.config.kernel);
        ck.set_meta("leaky_slope", self.config.leaky_slope);
        ck.set_meta("seed", self.seed);
        for (name, t) in self.named_parameters() {
            ck.push(name, t.shape().dims().to_vec(), t.to_vec());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let s = b.stats.lock();
            ck.push(format!("d{i}.bn.running_mean"), vec![s.mean.len()], s.mean.clone());
            ck.push(format!("d{i}.bn.running_var"), vec![s.var.len()], s.var.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ck.meta(k)
                .ok_or_else(|| Error::format(0, format!("checkpoint metadata lacks '{k}'")))
        };
        let bad = |k: &str| Error::format(0, format!("bad checkpoint metadata '{k}'"));
        if meta("model")? != "disc" {
            return Err(Error::format(0, "checkpoint does not hold a discriminator"));
        }
        let config = DiscConfig {
            channels: meta("channels")?
                .split(',')
                .map(|v| v.parse().map_err(|_| bad("channels")))
                .collect::<Result<_>>()?,
            kernel: meta("kernel")?.parse().map_err(|_| bad("kernel"))?,
            leaky_slope: meta("leaky_slope")?.parse().map_err(|_| bad("leaky_slope"))?,
        };
        let d = DiscModel::new(config, meta("seed")?.parse().map_err(|_| bad("seed"))?)?;
        let entry = |name: &str, numel: usize| -> Result<&[f64]> {
            let e = ck
                .get(name)
                .ok_or_else(|| Error::format(0, format!("checkpoint lacks entry '{name}'")))?;
            if e.values.len() != numel {
                return Err(Error::format(0, format!("entry '{name}' has the wrong size")));
            }
            Ok(&e.values)
        };
        for (name, t) in d.named_parameters() {
            t.assign(entry(&name, t.numel())?)?;
        }
        for (i, b) in d.blocks.iter().enumerate() {
            let mut s = b.stats.lock();
            let n = s.mean.len();
            s.mean = entry(&format!("d{i}.bn.running_mean"), n)?.to_vec();
            s.var = entry(&format!("d{i}.bn.running_var"), n)?.to_vec();
        }
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}
