use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::model::{images_to_tensor, UNetModel};
use crate::dataset::PairedExample;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::SpecImage;
use crate::tensor::{adam_step, mse_loss, no_grad, AdamState, Mode};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many updates even mid-epoch.
    pub max_steps: Option<usize>,
    /// Visit images in a seeded random order each epoch.
    pub shuffle: bool,
    pub seed: u64,
    /// Written after every epoch, including one cut short by `max_steps`.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            max_steps: None,
            shuffle: true,
            seed: 0,
            checkpoint_path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

/// Per-step loss history of [`train_mse`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\tepoch\tloss\n");
        for r in &self.records {
            let _ = writeln!(s, "{}\t{}\t{:e}", r.step, r.epoch, r.loss);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Every (reverberant, clean) image pair of the corpus, in corpus order.
pub fn training_pairs(examples: &[PairedExample]) -> Vec<(SpecImage, SpecImage)> {
    examples
        .iter()
        .flat_map(|e| e.reverb_images.iter().cloned().zip(e.clean_images.iter().cloned()))
        .collect()
}

/// Check image geometry and normalization against the model, adopting the
/// data's normalization when the model has none yet.
pub(crate) fn prepare(model: &mut UNetModel, pairs: &[(SpecImage, SpecImage)]) -> Result<()> {
    let (h, w) = model.config().input_size;
    let Some((first, _)) = pairs.first() else {
        return Err(Error::Parameter("training set is empty".into()));
    };
    if let Some((img, _)) = pairs
        .iter()
        .find(|(a, b)| a.height != h || a.width != w || b.height != h || b.width != w)
    {
        return Err(Error::Dimension(format!(
            "training image is {}x{}, model expects {h}x{w}",
            img.height, img.width
        )));
    }
    match model.norm() {
        None => model.set_norm(first.norm),
        Some(n) if n != first.norm => {
            return Err(Error::Contract(format!(
                "model normalization [{}, {}] dB differs from the data's [{}, {}] dB",
                n.lo_db, n.hi_db, first.norm.lo_db, first.norm.hi_db
            )))
        }
        Some(_) => {}
    }
    Ok(())
}

/// Visiting order for one epoch.
pub(crate) fn epoch_order(n: usize, cfg_seed: u64, shuffle: bool, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut rng_from_seed(derive_seed(cfg_seed, epoch as u64)));
    }
    order
}

/// Batch-1 Adam on `mse(G(reverberant), clean)` over every image pair.
/// Aborts with [`Error::NonFinite`] on a NaN or infinite loss.
pub fn train_mse(
    model: &mut UNetModel,
    examples: &[PairedExample],
    cfg: &TrainConfig,
    opt: &mut AdamState,
) -> Result<TrainingLog> {
    let pairs = training_pairs(examples);
    prepare(model, &pairs)?;
    let params = model.parameters();
    let previous_mode = model.mode();
    model.set_mode(Mode::Train);
    let mut log = TrainingLog::default();
    let limit = cfg.max_steps.unwrap_or(usize::MAX);
    for epoch in 0..cfg.epochs {
        if log.len() >= limit {
            break;
        }
        for i in epoch_order(pairs.len(), cfg.seed, cfg.shuffle, epoch) {
            if log.len() >= limit {
                break;
            }
            let step = log.len() + 1;
            let (input, target) = &pairs[i];
            let x = images_to_tensor(std::slice::from_ref(input))?;
            let t = images_to_tensor(std::slice::from_ref(target))?;
            model.zero_grad();
            let loss = mse_loss(&model.forward(&x)?, &t)?;
            let value = loss.item();
            if !value.is_finite() {
                model.set_mode(previous_mode);
                return Err(Error::NonFinite { step });
            }
            loss.backward()?;
            adam_step(&params, opt)?;
            log.records.push(LogRecord {
                step,
                epoch: epoch + 1,
                loss: value,
            });
        }
        if let Some(path) = &cfg.checkpoint_path {
            model.save(path)?;
        }
        if let Some(r) = log.records.last() {
            log::info!("epoch {} done at step {}, loss {:.4e}", epoch + 1, r.step, r.loss);
        }
    }
    model.zero_grad();
    model.set_mode(previous_mode);
    Ok(log)
}

/// Mean per-image MSE of the model's eval-mode output against the clean images.
pub fn evaluate_mse(model: &UNetModel, examples: &[PairedExample]) -> Result<f64> {
    let pairs = training_pairs(examples);
    if pairs.is_empty() {
        return Err(Error::Parameter("evaluation set is empty".into()));
    }
    let mut total = 0.0;
    for (input, target) in &pairs {
        let x = images_to_tensor(std::slice::from_ref(input))?;
        let t = images_to_tensor(std::slice::from_ref(target))?;
        total += no_grad(|| -> Result<f64> { Ok(mse_loss(&model.forward_with_mode(&x, Mode::Eval)?, &t)?.item()) })?;
    }
    Ok(total / pairs.len() as f64)
}
