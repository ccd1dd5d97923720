//! Cycle, reconstruction and adversarial terms and their weighted total.

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result, TensorError};
use crate::nets::{BoundDiscriminator, CrossViewGenerators, Gen};
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the ego term inside the cross-cycle loss.
    pub lambda1: f64,
    /// Weight of the second generator's adversarial loss.
    pub lambda2: f64,
    /// Weight of the exo term inside the reconstruction loss.
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub zeta: f64,
    /// Contextual similarity bandwidth `h`.
    pub h: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda1: 10.0, lambda2: 10.0, lambda3: 100.0, lambda4: 10.0, lambda5: 1.0, lambda6: 1.0, zeta: 1e-5, h: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("weights.lambda1", self.lambda1),
            ("weights.lambda2", self.lambda2),
            ("weights.lambda3", self.lambda3),
            ("weights.lambda4", self.lambda4),
            ("weights.lambda5", self.lambda5),
            ("weights.lambda6", self.lambda6),
        ];
        for (key, v) in lambdas {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{key} must be a non-negative number, got {v}")));
            }
        }
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::Config(format!("weights.zeta must be positive, got {}", self.zeta)));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Config(format!("weights.h must be positive, got {}", self.h)));
        }
        Ok(())
    }
}

/// Component values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub gan1: f64,
    pub gan2: f64,
    pub d1: f64,
    pub d2: f64,
    pub cross_cycle: f64,
    pub reconstruction: f64,
    pub contextual: f64,
    pub total: f64,
}

impl LossReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gan1: f64,
        gan2: f64,
        d1: f64,
        d2: f64,
        cross_cycle: f64,
        reconstruction: f64,
        contextual: f64,
        weights: &LossWeights,
    ) -> Self {
        let total = total_loss(gan_total(gan1, gan2, weights.lambda2), cross_cycle, reconstruction, contextual, weights);
        LossReport { gan1, gan2, d1, d2, cross_cycle, reconstruction, contextual, total }
    }

    pub fn components(&self) -> [(&'static str, f64); 8] {
        [
            ("gan1", self.gan1),
            ("gan2", self.gan2),
            ("d1", self.d1),
            ("d2", self.d2),
            ("cross_cycle", self.cross_cycle),
            ("reconstruction", self.reconstruction),
            ("contextual", self.contextual),
            ("total", self.total),
        ]
    }

    /// Errors on the first non-finite component.
    pub fn check_finite(&self) -> Result<()> {
        match self.components().into_iter().find(|(_, v)| !v.is_finite()) {
            Some((component, value)) => Err(Error::NonFiniteLoss { component, value }),
            None => Ok(()),
        }
    }
}

pub fn gan_total(gan1: f64, gan2: f64, lambda2: f64) -> f64 {
    gan1 + lambda2 * gan2
}

/// Generator objective: `gan + λ₄·cross_cycle + λ₅·reconstruction + λ₆·contextual`.
pub fn total_loss(gan: f64, cross_cycle: f64, reconstruction: f64, contextual: f64, w: &LossWeights) -> f64 {
    gan + w.lambda4 * cross_cycle + w.lambda5 * reconstruction + w.lambda6 * contextual
}

/// Tape version of [`gan_total`] followed by [`total_loss`], with the same
/// evaluation order.
pub fn total_loss_var<'t, T: Element>(
    gan1: Var<'t, T>,
    gan2: Var<'t, T>,
    cross_cycle: Var<'t, T>,
    reconstruction: Var<'t, T>,
    contextual: Var<'t, T>,
    w: &LossWeights,
) -> Result<Var<'t, T>, TensorError> {
    let gan = gan1.add(gan2.scale(w.lambda2)?)?;
    gan.add(cross_cycle.scale(w.lambda4)?)?.add(reconstruction.scale(w.lambda5)?)?.add(contextual.scale(w.lambda6)?)
}

/// `mean|a − a'| + λ·mean|b − b'|`.
pub fn weighted_l1<'t, T: Element>(
    a: Var<'t, T>,
    a_out: Var<'t, T>,
    b: Var<'t, T>,
    b_out: Var<'t, T>,
    lambda: f64,
) -> Result<Var<'t, T>, TensorError> {
    let first = a.sub(a_out)?.mean_abs()?;
    let second = b.sub(b_out)?.mean_abs()?;
    first.add(second.scale(lambda)?)
}

/// `mean|I_exo − DE₂(EN₁(I_exo))| + λ₁·mean|I_ego − DE₁(EN₂(I_ego))|`.
pub fn cross_cycle_loss<'t, T: Element, G: CrossViewGenerators<'t, T>>(
    gens: &G,
    exo: Var<'t, T>,
    ego: Var<'t, T>,
    lambda1: f64,
) -> Result<Var<'t, T>, TensorError> {
    let exo_back = gens.decode(Gen::G2, &gens.encode(Gen::G1, exo)?)?;
    let ego_back = gens.decode(Gen::G1, &gens.encode(Gen::G2, ego)?)?;
    weighted_l1(exo, exo_back, ego, ego_back, lambda1)
}

/// `mean|I_ego − G₁(I_exo)| + λ₃·mean|I_exo − G₂(I_ego)|`.
pub fn reconstruction_loss<'t, T: Element, G: CrossViewGenerators<'t, T>>(
    gens: &G,
    exo: Var<'t, T>,
    ego: Var<'t, T>,
    lambda3: f64,
) -> Result<Var<'t, T>, TensorError> {
    let fake_ego = gens.generate(Gen::G1, exo)?;
    let fake_exo = gens.generate(Gen::G2, ego)?;
    weighted_l1(ego, fake_ego, exo, fake_exo, lambda3)
}

/// `log σ(z)` computed on the tape (guarded log).
fn log_sigmoid<'t, T: Element>(z: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
    z.sigmoid()?.log()
}

/// `−mean log σ(real) − mean log(1 − σ(fake))`, with `1 − σ(z) = σ(−z)`.
pub fn discriminator_loss<'t, T: Element>(real_logits: Var<'t, T>, fake_logits: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
    let real = log_sigmoid(real_logits)?.mean()?;
    let fake = log_sigmoid(fake_logits.neg()?)?.mean()?;
    real.add(fake)?.neg()
}

/// Non-saturating generator loss `−mean log σ(fake)`.
pub fn generator_adversarial_loss<'t, T: Element>(fake_logits: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
    log_sigmoid(fake_logits)?.mean()?.neg()
}

/// `(d_loss, g_loss)` for one conditional discriminator. `d_loss` sees the
/// fake as a constant; `g_loss` lets gradient flow into the generator.
pub fn adversarial_losses<'t, T: Element>(
    disc: &BoundDiscriminator<'_, 't, T>,
    condition: Var<'t, T>,
    real: Var<'t, T>,
    fake: Var<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>), TensorError> {
    let real_logits = disc.discriminate(condition, real)?;
    let fake_const = disc.discriminate(condition, fake.detach())?;
    let d_loss = discriminator_loss(real_logits, fake_const)?;
    let g_loss = generator_adversarial_loss(disc.discriminate(condition, fake)?)?;
    Ok((d_loss, g_loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gan_total_examples() {
        assert_eq!(gan_total(1.0, 0.5, 10.0), 6.0);
        assert_eq!(gan_total(1.25, 0.5, 0.0), 1.25);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert!((total_loss(1.0, 2.0, 0.5, 0.1, &w) - 21.6).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &w), 0.0);
    }

    #[test]
    fn report_total_recomputes_from_parts() {
        let w = LossWeights::default();
        let r = LossReport::new(0.7, 0.9, 1.3, 1.2, 0.31, 0.22, 2.1, &w);
        let again = r.gan1 + w.lambda2 * r.gan2 + w.lambda4 * r.cross_cycle + w.lambda5 * r.reconstruction + w.lambda6 * r.contextual;
        assert_eq!(r.total, again);
        r.check_finite().unwrap();
        let bad = LossReport { contextual: f64::NAN, ..r };
        assert!(matches!(bad.check_finite(), Err(Error::NonFiniteLoss { component: "contextual", .. })));
    }

    #[test]
    fn weights_validation_names_key() {
        let w = LossWeights { lambda4: -1.0, ..LossWeights::default() };
        assert!(w.validate().unwrap_err().to_string().contains("weights.lambda4"));
    }
}
