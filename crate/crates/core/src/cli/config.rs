//! `key=value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{DatasetConfig, DEFAULT_TAIL_GAIN};
use crate::error::{Error, Result};
use crate::gan::{DiscConfig, GanConfig};
use crate::signal::{TileSpec, SAMPLE_RATE};
use crate::unet::UNetConfig;

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn show(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u64, f64, bool);

impl ConfigValue for Option<PathBuf> {
    fn parse_value(s: &str) -> Option<Self> {
        Some((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn show(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

/// Which subcommands read a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Data,
    Model,
    Train,
    Gan,
    Paths,
}

macro_rules! run_config {
    ($($section:ident $name:ident: $t:ty = $default:expr, $doc:literal;)*) => {
        /// Every setting a command can read. Each has a default; a config
        /// file or `--set` overrides it.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $name: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($name: $default,)* }
            }
        }

        /// `(key, section, description)` for every key.
        pub const KEYS: &[(&str, Section, &str)] = &[$((stringify!($name), Section::$section, $doc),)*];

        impl RunConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => {
                        self.$name = <$t as ConfigValue>::parse_value(value).ok_or_else(|| {
                            Error::Config(format!("bad value '{value}' for '{key}'"))
                        })?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $(stringify!($name) => Some(self.$name.show()),)*
                    _ => None,
                }
            }
        }
    };
}

run_config! {
    Data n_utts: usize = 8, "utterances to synthesize";
    Data t60_lo: f64 = 0.2, "shortest reverberation time (s)";
    Data t60_hi: f64 = 0.8, "longest reverberation time (s)";
    Data snr_db: f64 = 20.0, "additive white-noise SNR in dB (inf for none)";
    Data duration_s: f64 = 2.0, "utterance length (s)";
    Data seed: u64 = 0, "master seed; every random stream of a command derives from it";
    Model depth: usize = 6, "encoder blocks";
    Model base_channels: usize = 8, "channels of the first encoder block";
    Model filter_freq: usize = 5, "kernel height (frequency)";
    Model filter_time: usize = 5, "kernel width (time)";
    Model input_h: usize = 64, "image height in frequency bins";
    Model input_w: usize = 64, "image width in frames";
    Model leaky_slope: f64 = 0.2, "LeakyReLU slope in the encoder";
    Model dropout_layers: usize = 3, "decoder blocks with dropout";
    Model dropout_p: f64 = 0.5, "decoder dropout probability";
    Train epochs: usize = 10, "MSE training epochs";
    Train max_steps: usize = 0, "stop after this many updates (0 for no limit)";
    Train lr: f64 = 1e-3, "Adam learning rate";
    Train shuffle: bool = true, "shuffle images every epoch";
    Gan lambda_mse: f64 = 1000.0, "weight of the MSE term in the generator loss";
    Gan gan_epochs: usize = 2, "adversarial epochs";
    Gan d_steps_per_g: usize = 1, "discriminator updates per generator update";
    Gan disc_base: usize = 8, "channels of the first discriminator block";
    Paths data_dir: Option<PathBuf> = None, "dataset directory";
    Paths checkpoint: Option<PathBuf> = None, "checkpoint written by train and train-gan";
    Paths init_checkpoint: Option<PathBuf> = None, "U-Net checkpoint train-gan starts from";
}

impl RunConfig {
    /// Parse `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    n + 1,
                    e.to_string().trim_start_matches("config error: ")
                ))
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(format!("config {} not found", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        Self::parse(&text)
    }

    /// Apply `key=value` overrides in order.
    pub fn apply(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Round-trips through [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _, doc) in KEYS {
            let _ = writeln!(s, "# {doc}\n{k} = {}", self.get(k).unwrap_or_default());
        }
        s
    }

    pub fn tile(&self) -> Result<TileSpec> {
        TileSpec::new(self.input_h, self.input_w).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        let cfg = DatasetConfig {
            n_utts: self.n_utts,
            t60_range: (self.t60_lo, self.t60_hi),
            snr_db: self.snr_db,
            duration_s: self.duration_s,
            seed: self.seed,
            tile: self.tile()?,
            norm: None,
            sample_rate: SAMPLE_RATE,
            tail_gain: DEFAULT_TAIL_GAIN,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn unet(&self) -> Result<UNetConfig> {
        let cfg = UNetConfig::from_base(self.depth, self.base_channels, (self.input_h, self.input_w))
            .with_filters(self.filter_freq, self.filter_time);
        let cfg = UNetConfig {
            leaky_slope: self.leaky_slope,
            dropout_decoder_layers: self.dropout_layers,
            dropout_p: self.dropout_p,
            ..cfg
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn disc(&self) -> Result<DiscConfig> {
        let cfg = DiscConfig::from_base(self.disc_base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gan(&self) -> GanConfig {
        GanConfig {
            lambda_mse: self.lambda_mse,
            epochs: self.gan_epochs,
            max_steps: (self.max_steps > 0).then_some(self.max_steps),
            d_steps_per_g: self.d_steps_per_g,
            shuffle: self.shuffle,
            ..GanConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        self.gan().validate()
    }

    /// Help text listing the keys of `sections` with their defaults.
    pub fn help_table(sections: &[Section]) -> String {
        let d = RunConfig::default();
        let mut s = String::from("Config keys (set in --config or with --set key=value):\n");
        for (k, _, doc) in KEYS.iter().filter(|(_, sec, _)| sections.contains(sec)) {
            let _ = writeln!(s, "  {k:<16} {doc} [default: {}]", d.get(k).unwrap_or_default());
        }
        s
    }
}
