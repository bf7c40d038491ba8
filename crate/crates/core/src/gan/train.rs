use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::disc::DiscModel;
use crate::dataset::PairedExample;
use crate::error::{Error, Result};
use crate::signal::SpecImage;
use crate::tensor::{
    adam_step, add, bce_loss, mean, mse_loss, no_grad, scale, write_checkpoint, AdamState, Checkpoint, Mode, Tensor,
};
use crate::unet::{epoch_order, images_to_tensor, prepare, training_pairs, UNetModel};

/// What adversarial training needs from a generator.
pub trait Generator {
    /// Forward pass in the generator's current mode.
    fn generate(&self, z: &Tensor) -> Result<Tensor>;

    fn generate_eval(&self, z: &Tensor) -> Result<Tensor>;

    fn parameters(&self) -> Vec<Tensor>;

    fn mode(&self) -> Mode {
        Mode::Eval
    }

    fn set_mode(&mut self, _mode: Mode) {}

    /// Validate (and possibly adopt settings from) the training pairs.
    fn prepare(&mut self, _pairs: &[(SpecImage, SpecImage)]) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        None
    }

    fn zero_grad(&self) {
        self.parameters().iter().for_each(Tensor::zero_grad);
    }
}

impl Generator for UNetModel {
    fn generate(&self, z: &Tensor) -> Result<Tensor> {
        self.forward(z)
    }

    fn generate_eval(&self, z: &Tensor) -> Result<Tensor> {
        self.forward_with_mode(z, Mode::Eval)
    }

    fn parameters(&self) -> Vec<Tensor> {
        UNetModel::parameters(self)
    }

    fn mode(&self) -> Mode {
        UNetModel::mode(self)
    }

    fn set_mode(&mut self, mode: Mode) {
        UNetModel::set_mode(self, mode)
    }

    fn prepare(&mut self, pairs: &[(SpecImage, SpecImage)]) -> Result<()> {
        prepare(self, pairs)
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        Some(self.to_checkpoint())
    }
}

/// Passes the reverberant image through unchanged. Has no parameters, so it
/// serves as a frozen generator when probing the discriminator.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityGenerator;

impl Generator for IdentityGenerator {
    fn generate(&self, z: &Tensor) -> Result<Tensor> {
        Ok(z.detach())
    }

    fn generate_eval(&self, z: &Tensor) -> Result<Tensor> {
        Ok(z.detach())
    }

    fn parameters(&self) -> Vec<Tensor> {
        Vec::new()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    /// Weight of the MSE term in the generator loss.
    pub lambda_mse: f64,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    /// Discriminator updates per generator update; 0 freezes D.
    pub d_steps_per_g: usize,
    /// When false only D is trained.
    pub train_generator: bool,
    pub shuffle: bool,
    pub seed: u64,
    pub g_checkpoint: Option<PathBuf>,
    pub d_checkpoint: Option<PathBuf>,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            lambda_mse: 1000.0,
            epochs: 2,
            max_steps: None,
            d_steps_per_g: 1,
            train_generator: true,
            shuffle: true,
            seed: 0,
            g_checkpoint: None,
            d_checkpoint: None,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_mse.is_finite() || self.lambda_mse < 0.0 {
            return Err(Error::Config(format!(
                "lambda_mse must be finite and non-negative, got {}",
                self.lambda_mse
            )));
        }
        Ok(())
    }
}

/// Discriminator objective `bce(D(z,x), 1) + bce(D(z,fake), 0)` plus the
/// mean patch probabilities on real and fake input.
pub struct DiscLoss {
    pub loss: Tensor,
    pub p_real: f64,
    pub p_fake: f64,
}

pub fn discriminator_loss(d: &DiscModel, z: &Tensor, real: &Tensor, fake: &Tensor) -> Result<DiscLoss> {
    let pr = d.forward(z, real)?;
    let pf = d.forward(z, fake)?;
    Ok(DiscLoss {
        loss: add(&bce_loss(&pr, 1.0), &bce_loss(&pf, 0.0))?,
        p_real: mean(&pr).item(),
        p_fake: mean(&pf).item(),
    })
}

/// Generator objective, split into its parts. `total = bce + λ·mse`.
pub struct GenLoss {
    pub bce: Tensor,
    pub mse: Tensor,
    pub total: Tensor,
}

/// Non-saturating adversarial term `bce(D(z,fake), 1)` plus the weighted
/// reconstruction error against the clean target.
pub fn generator_loss(d: &DiscModel, z: &Tensor, target: &Tensor, fake: &Tensor, lambda: f64) -> Result<GenLoss> {
    let bce = bce_loss(&d.forward(z, fake)?, 1.0);
    let mse = mse_loss(fake, target)?;
    let total = add(&bce, &scale(&mse, lambda))?;
    Ok(GenLoss { bce, mse, total })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanRecord {
    pub step: usize,
    pub epoch: usize,
    pub d_loss: f64,
    pub g_bce: f64,
    pub g_mse: f64,
    pub g_loss: f64,
    pub p_real: f64,
    pub p_fake: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanLog {
    pub records: Vec<GanRecord>,
}

impl GanLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\td_loss\tg_bce\tg_mse\n");
        for r in &self.records {
            let _ = writeln!(s, "{}\t{:e}\t{:e}\t{:e}", r.step, r.d_loss, r.g_bce, r.g_mse);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn restore<G: Generator + ?Sized>(g: &mut G, d: &mut DiscModel, modes: (Mode, Mode)) {
    g.zero_grad();
    d.zero_grad();
    g.set_mode(modes.0);
    d.set_mode(modes.1);
}

/// Alternating adversarial training with batch 1.
///
/// Each step computes `fake = G(z)` once. D takes `d_steps_per_g` Adam steps
/// on that fake (detached), then G takes one step on `bce + λ·mse` with D's
/// parameters left untouched.
pub fn train_gan<G: Generator + ?Sized>(
    g: &mut G,
    d: &mut DiscModel,
    examples: &[PairedExample],
    cfg: &GanConfig,
    g_opt: &mut AdamState,
    d_opt: &mut AdamState,
) -> Result<GanLog> {
    cfg.validate()?;
    let pairs = training_pairs(examples);
    if pairs.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    g.prepare(&pairs)?;
    let g_params = g.parameters();
    let d_params = d.parameters();
    let modes = (g.mode(), d.mode());
    g.set_mode(Mode::Train);
    d.set_mode(Mode::Train);
    let mut log = GanLog::default();
    let limit = cfg.max_steps.unwrap_or(usize::MAX);
    let result = (|| -> Result<()> {
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
                let z = images_to_tensor(std::slice::from_ref(input))?;
                let x = images_to_tensor(std::slice::from_ref(target))?;
                let fake = if cfg.train_generator {
                    g.generate(&z)?
                } else {
                    no_grad(|| g.generate(&z))?
                };
                let held = fake.detach();

                let mut dl = None;
                for _ in 0..cfg.d_steps_per_g {
                    d.zero_grad();
                    let l = discriminator_loss(d, &z, &x, &held)?;
                    if !l.loss.item().is_finite() {
                        return Err(Error::NonFinite { step });
                    }
                    l.loss.backward()?;
                    adam_step(&d_params, d_opt)?;
                    dl = Some(l);
                }
                let dl = match dl {
                    Some(l) => l,
                    None => no_grad(|| discriminator_loss(d, &z, &x, &held))?,
                };

                let gl = if cfg.train_generator {
                    g.zero_grad();
                    let gl = generator_loss(d, &z, &x, &fake, cfg.lambda_mse)?;
                    if !gl.total.item().is_finite() {
                        return Err(Error::NonFinite { step });
                    }
                    gl.total.backward()?;
                    adam_step(&g_params, g_opt)?;
                    // the backward pass also reached D; those grads are discarded
                    d.zero_grad();
                    gl
                } else {
                    no_grad(|| generator_loss(d, &z, &x, &held, cfg.lambda_mse))?
                };
                log.records.push(GanRecord {
                    step,
                    epoch: epoch + 1,
                    d_loss: dl.loss.item(),
                    g_bce: gl.bce.item(),
                    g_mse: gl.mse.item(),
                    g_loss: gl.total.item(),
                    p_real: dl.p_real,
                    p_fake: dl.p_fake,
                });
            }
            if let (Some(path), Some(ck)) = (&cfg.g_checkpoint, g.checkpoint()) {
                write_checkpoint(path, &ck)?;
            }
            if let Some(path) = &cfg.d_checkpoint {
                d.save(path)?;
            }
        }
        Ok(())
    })();
    restore(g, d, modes);
    result.map(|_| log)
}

/// Fraction of discriminator patches classified correctly, over the real
/// pair and the generated pair of every image. G runs in eval mode. D
/// normalizes each pass with its own batch statistics, as during training:
/// its running statistics average real and fake batches and describe neither.
pub fn discriminator_accuracy<G: Generator + ?Sized>(g: &G, d: &DiscModel, examples: &[PairedExample]) -> Result<f64> {
    let pairs = training_pairs(examples);
    if pairs.is_empty() {
        return Err(Error::Parameter("evaluation set is empty".into()));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (input, target) in &pairs {
        let z = images_to_tensor(std::slice::from_ref(input))?;
        let x = images_to_tensor(std::slice::from_ref(target))?;
        no_grad(|| -> Result<()> {
            let fake = g.generate_eval(&z)?;
            let pr = d.forward_batch_stats(&z, &x)?;
            let pf = d.forward_batch_stats(&z, &fake)?;
            correct += pr.data().iter().filter(|&&p| p > 0.5).count();
            correct += pf.data().iter().filter(|&&p| p < 0.5).count();
            total += pr.numel() + pf.numel();
            Ok(())
        })?;
    }
    Ok(correct as f64 / total as f64)
}
