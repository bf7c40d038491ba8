//! Command-line surface: synthesize data, train, refine adversarially,
//! enhance, evaluate and render spectrograms.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;
use sha2::{Digest, Sha256};

pub use config::{RunConfig, Section, KEYS};

use crate::dataset::{build_dataset, content_hash, load_dataset_dir, manifest_tsv, write_dataset};
use crate::error::{Error, Result};
use crate::gan::{train_gan, DiscModel};
use crate::metrics::evaluate_corpus;
use crate::rng::derive_seed;
use crate::signal::{read_wav, spectrogram_pgm, write_wav, NormSpec};
use crate::tensor::{AdamConfig, AdamState};
use crate::unet::{enhance_utterance, train_mse, TrainConfig, UNetModel};

const MODEL_STREAM: u64 = 0x4d4f;
const ORDER_STREAM: u64 = 0x4f52;
const DISC_STREAM: u64 = 0x4453;

#[derive(Parser, Debug)]
#[command(
    name = "dereverb",
    version,
    about = "U-Net speech dereverberation on log-spectrogram images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// key=value config file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a paired clean/reverberant corpus
    SynthData {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the U-Net on the MSE objective
    Train {
        /// Dataset directory [default: config data_dir]
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to write [default: config checkpoint]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Loss log TSV [default: <out>.log.tsv]
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Refine a trained U-Net with a conditional discriminator
    TrainGan {
        /// Dataset directory [default: config data_dir]
        #[arg(long)]
        data: Option<PathBuf>,
        /// U-Net checkpoint to start from [default: config init_checkpoint]
        #[arg(long)]
        init: Option<PathBuf>,
        /// Generator checkpoint to write [default: config checkpoint]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Discriminator checkpoint [default: <out>.disc]
        #[arg(long)]
        disc_out: Option<PathBuf>,
        /// Loss log TSV [default: <out>.log.tsv]
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Dereverberate one WAV file
    Enhance {
        /// U-Net checkpoint
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score degraded WAVs against same-named references
    Evaluate {
        /// Directory of reference WAVs
        #[arg(long)]
        reference: PathBuf,
        /// Directory of degraded or enhanced WAVs
        #[arg(long)]
        degraded: PathBuf,
        /// Report TSV [default: print only]
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a WAV's log-spectrogram as a P5 graymap
    Spectrogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// dB value mapped to white [default: loudest bin]
        #[arg(long)]
        ceiling_db: Option<f64>,
    },
}

fn sections_of(name: &str) -> &'static [Section] {
    match name {
        "synth-data" => &[Section::Data, Section::Model],
        "train" => &[Section::Data, Section::Model, Section::Train, Section::Paths],
        "train-gan" => &[Section::Data, Section::Train, Section::Gan, Section::Paths],
        _ => &[],
    }
}

/// The clap command with each subcommand's config keys and defaults in its help.
pub fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for name in ["synth-data", "train", "train-gan"] {
        cmd = cmd.mut_subcommand(name, |sc| sc.after_help(RunConfig::help_table(sections_of(name))));
    }
    cmd
}

fn require(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or config key)")))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn adam(params: &[crate::tensor::Tensor], cfg: &RunConfig) -> AdamState {
    AdamState::new(
        params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    )
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn synth_data(out: &Path, cfg: &RunConfig) -> Result<()> {
    let (examples, norm) = build_dataset(&cfg.dataset()?)?;
    write_dataset(out, &examples, norm)?;
    let manifest = manifest_tsv(&examples);
    println!("wrote {} utterances to {}", examples.len(), out.display());
    println!("normalization {:.3}..{:.3} dB", norm.lo_db, norm.hi_db);
    println!("manifest sha256 {}", sha256_hex(manifest.as_bytes()));
    println!("content sha256 {}", content_hash(&examples));
    Ok(())
}

pub fn train(data: &Path, out: &Path, log_path: &Path, cfg: &RunConfig) -> Result<()> {
    let (examples, _) = load_dataset_dir(data, cfg.tile()?, None)?;
    info!("loaded {} utterances from {}", examples.len(), data.display());
    let mut model = UNetModel::new(cfg.unet()?, derive_seed(cfg.seed, MODEL_STREAM))?;
    let mut opt = adam(&model.parameters(), cfg);
    let tc = TrainConfig {
        epochs: cfg.epochs,
        max_steps: (cfg.max_steps > 0).then_some(cfg.max_steps),
        shuffle: cfg.shuffle,
        seed: derive_seed(cfg.seed, ORDER_STREAM),
        checkpoint_path: Some(out.to_path_buf()),
    };
    let log = train_mse(&mut model, &examples, &tc, &mut opt)?;
    log.write(log_path)?;
    // also covers a run with zero steps
    model.save(out)?;
    match log.records.last() {
        Some(r) => println!("{} steps, final loss {:.6e}", r.step, r.loss),
        None => println!("0 steps"),
    }
    println!("checkpoint {}", out.display());
    Ok(())
}

pub fn train_gan_cmd(
    data: &Path,
    init: &Path,
    out: &Path,
    disc_out: &Path,
    log_path: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    let mut g = UNetModel::load(init)?;
    let (h, w) = g.config().input_size;
    let tile = crate::signal::TileSpec::new(h, w)?;
    let (examples, _) = load_dataset_dir(data, tile, g.norm())?;
    let mut d = DiscModel::new(cfg.disc()?, derive_seed(cfg.seed, DISC_STREAM))?;
    let mut g_opt = adam(&g.parameters(), cfg);
    let mut d_opt = adam(&d.parameters(), cfg);
    let gc = crate::gan::GanConfig {
        seed: derive_seed(cfg.seed, ORDER_STREAM),
        g_checkpoint: Some(out.to_path_buf()),
        d_checkpoint: Some(disc_out.to_path_buf()),
        ..cfg.gan()
    };
    let log = train_gan(&mut g, &mut d, &examples, &gc, &mut g_opt, &mut d_opt)?;
    log.write(log_path)?;
    g.save(out)?;
    d.save(disc_out)?;
    match log.records.last() {
        Some(r) => println!(
            "{} steps, final d_loss {:.6e} g_bce {:.6e} g_mse {:.6e}",
            r.step, r.d_loss, r.g_bce, r.g_mse
        ),
        None => println!("0 steps"),
    }
    println!("checkpoint {}", out.display());
    Ok(())
}

pub fn enhance(model: &Path, input: &Path, output: &Path) -> Result<()> {
    let model = UNetModel::load(model)?;
    let w = read_wav(input)?;
    let y = enhance_utterance(&model, &w)?;
    write_wav(output, &y)?;
    println!("{} samples -> {}", y.len(), output.display());
    Ok(())
}

fn wav_names(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(format!("{} is not a directory", dir.display())));
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .filter_map(|p| p.file_name()?.to_str().map(String::from))
        .collect();
    names.sort();
    Ok(names)
}

pub fn evaluate(reference: &Path, degraded: &Path, report: Option<&Path>) -> Result<String> {
    let names = wav_names(reference)?;
    if names.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "no WAV files in {}",
            reference.display()
        )));
    }
    let mut pairs = Vec::with_capacity(names.len());
    for n in &names {
        let r = read_wav(&reference.join(n))?;
        let d = read_wav(&degraded.join(n))?;
        pairs.push((n.trim_end_matches(".wav").to_string(), r, d));
    }
    let rep = evaluate_corpus(&pairs)?;
    let tsv = rep.to_tsv();
    for (id, why) in &rep.skipped {
        eprintln!("skipped {id}: {why}");
    }
    if let Some(p) = report {
        std::fs::write(p, &tsv).map_err(|e| Error::io(p, e))?;
    }
    Ok(tsv)
}

pub fn spectrogram(input: &Path, output: &Path, ceiling_db: Option<f64>) -> Result<()> {
    let w = read_wav(input)?;
    let bytes = spectrogram_pgm(&w, ceiling_db.map(NormSpec::from_ceiling));
    std::fs::write(output, bytes).map_err(|e| Error::io(output, e))
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthData { out, cfg } => synth_data(&out, &cfg.resolve()?),
        Command::Train { data, out, log, cfg } => {
            let cfg = cfg.resolve()?;
            let data = require(data, &cfg.data_dir, "dataset directory")?;
            let out = require(out, &cfg.checkpoint, "output checkpoint")?;
            let log = log.unwrap_or_else(|| with_suffix(&out, ".log.tsv"));
            train(&data, &out, &log, &cfg)
        }
        Command::TrainGan {
            data,
            init,
            out,
            disc_out,
            log,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            let data = require(data, &cfg.data_dir, "dataset directory")?;
            let init = require(init, &cfg.init_checkpoint, "initial U-Net checkpoint")?;
            let out = require(out, &cfg.checkpoint, "output checkpoint")?;
            let disc_out = disc_out.unwrap_or_else(|| with_suffix(&out, ".disc"));
            let log = log.unwrap_or_else(|| with_suffix(&out, ".log.tsv"));
            train_gan_cmd(&data, &init, &out, &disc_out, &log, &cfg)
        }
        Command::Enhance { model, input, output } => enhance(&model, &input, &output),
        Command::Evaluate {
            reference,
            degraded,
            report,
        } => {
            print!("{}", evaluate(&reference, &degraded, report.as_deref())?);
            Ok(())
        }
        Command::Spectrogram {
            input,
            output,
            ceiling_db,
        } => spectrogram(&input, &output, ceiling_db),
    }
}

/// Parse arguments, run, and map the outcome to an exit code:
/// 0 ok, 2 config, 3 missing artifact, 4 data format, 1 anything else.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
