use crate::error::{Error, Result};

/// Architecture hyperparameters. Images are `input_size = (height, width)`,
/// i.e. (frequency bins, frames).
#[derive(Clone, Debug, PartialEq)]
pub struct UNetConfig {
    pub depth: usize,
    pub enc_channels: Vec<usize>,
    pub filter_freq: usize,
    pub filter_time: usize,
    pub input_size: (usize, usize),
    pub leaky_slope: f64,
    /// Leading decoder blocks that apply dropout.
    pub dropout_decoder_layers: usize,
    pub dropout_p: f64,
}

impl UNetConfig {
    /// Channels double from `base` up to `8·base` and stay there.
    pub fn from_base(depth: usize, base: usize, input_size: (usize, usize)) -> Self {
        UNetConfig {
            depth,
            enc_channels: (0..depth).map(|i| base << i.min(3)).collect(),
            filter_freq: 5,
            filter_time: 5,
            input_size,
            leaky_slope: 0.2,
            dropout_decoder_layers: 3,
            dropout_p: 0.5,
        }
    }

    /// Depth 6, base 8, 64×64 images.
    pub fn toy() -> Self {
        Self::from_base(6, 8, (64, 64))
    }

    /// Depth 8, 64…512 channels, 256×256 images, 5×5 filters.
    pub fn paper() -> Self {
        Self::from_base(8, 64, (256, 256))
    }

    /// [`UNetConfig::paper`] with 10×5 (frequency × time) filters.
    pub fn paper_asymmetric() -> Self {
        UNetConfig {
            filter_freq: 10,
            ..Self::paper()
        }
    }

    pub fn with_filters(mut self, freq: usize, time: usize) -> Self {
        self.filter_freq = freq;
        self.filter_time = time;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth < 2 {
            return bad(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.enc_channels.len() != self.depth {
            return bad(format!(
                "enc_channels has {} entries but depth is {}",
                self.enc_channels.len(),
                self.depth
            ));
        }
        if self.enc_channels.contains(&0) {
            return bad("enc_channels must be positive".into());
        }
        if self.filter_freq == 0 || self.filter_time == 0 {
            return bad("filter sizes must be positive".into());
        }
        let (h, w) = self.input_size;
        let div = 1usize << self.depth;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return bad(format!(
                "input size {h}x{w} is not divisible by 2^{} = {div}",
                self.depth
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} not in [0, 1)", self.dropout_p));
        }
        if self.dropout_decoder_layers > self.depth - 1 {
            return bad(format!(
                "dropout_decoder_layers {} exceeds the {} inner decoder blocks",
                self.dropout_decoder_layers,
                self.depth - 1
            ));
        }
        if !(self.leaky_slope >= 0.0) {
            return bad(format!("leaky_slope must be non-negative, got {}", self.leaky_slope));
        }
        Ok(())
    }

    /// Spatial size after the encoder.
    pub fn bottleneck_size(&self) -> (usize, usize) {
        (self.input_size.0 >> self.depth, self.input_size.1 >> self.depth)
    }
}

/// Stride-2 padding that halves a dimension: `⌊(k−1)/2⌋`.
pub fn halving_padding(k: usize) -> usize {
    (k - 1) / 2
}

/// Transposed-conv output padding that makes the matching decoder layer double.
pub fn doubling_output_padding(k: usize) -> usize {
    2 + 2 * halving_padding(k) - k
}
