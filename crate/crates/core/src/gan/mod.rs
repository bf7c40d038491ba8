//! Conditional adversarial refinement of the U-Net: a patch discriminator and
//! alternating D/G training with a weighted MSE term.

mod disc;
mod train;

pub use disc::{DiscConfig, DiscModel};
pub use train::{
    discriminator_accuracy, discriminator_loss, generator_loss, train_gan, DiscLoss, GanConfig, GanLog, GanRecord,
    GenLoss, Generator, IdentityGenerator,
};
