//! Training objectives.

mod contextual;
mod objectives;

pub use contextual::{
    contextual_loss, contextual_score, contextual_similarity, cosine_distance_matrix, subsample_stride, ContextualFormula,
    ContextualParams, COSINE_EPS, MAX_PAIRS,
};
pub use objectives::{
    adversarial_losses, cross_cycle_loss, discriminator_loss, gan_total, generator_adversarial_loss, reconstruction_loss, total_loss,
    total_loss_var, weighted_l1, LossReport, LossWeights,
};
