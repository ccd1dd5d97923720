//! Evaluation: SSIM, PSNR, sharpness difference, KL score and top-k agreement.

mod classifier;
mod image;
mod report;
mod scores;

pub use classifier::{
    classifier_accuracy, train_on_pairs, train_scene_classifier, ClassifierConfig, SceneClassifier, CLASSIFIER_SEED_OFFSET,
};
pub use image::{gradient_magnitude, mse, psnr, sharpness_difference, ssim, to_unit_range, DB_CAP, SSIM_C1, SSIM_C2, SSIM_WINDOW};
pub use report::{evaluate, generate_ego, score_images, EvalOptions, Evaluation, MetricsReport};
pub use scores::{
    floor_and_normalize, kl_divergence, kl_score, ranked, topk_agreement, KlDirection, TopK, CONFIDENT_THRESHOLD, PROB_FLOOR,
};
