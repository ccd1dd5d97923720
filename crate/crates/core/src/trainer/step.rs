use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::config::{AdamHyper, ContextualDirections, TrainConfig};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, InComponent, Result};
use crate::losses::{contextual_loss, discriminator_loss, generator_adversarial_loss, total_loss_var, weighted_l1, LossReport};
use crate::nets::{CrossViewGenerators, FeatureExtractor, Gen, GeneratorPair, ParamId, PatchDiscriminator};
use crate::synthdata::{rgb_to_tensor, seg_to_tensor, ViewPair};
use crate::tensor::{Element, Tensor};

/// Stacked images of one mini-batch. The `*_input` tensors carry the
/// conditioning channel when it is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T: Element> {
    pub exo: Tensor<T>,
    pub ego: Tensor<T>,
    pub exo_input: Tensor<T>,
    pub ego_input: Tensor<T>,
}

fn with_channel<T: Element>(image: &Tensor<T>, extra: &Tensor<T>) -> Tensor<T> {
    let (c, hw) = (image.shape()[0], image.shape()[1] * image.shape()[2]);
    let mut shape = image.shape().to_vec();
    shape[0] = c + 1;
    let mut data = image.data().to_vec();
    data.extend_from_slice(&extra.data()[..hw]);
    Tensor::new(shape, data).expect("channel concat")
}

impl<T: Element> Batch<T> {
    pub fn from_pairs(pairs: &[ViewPair], seg_conditioning: bool) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Dataset("empty batch".into()));
        }
        let mut exo = Vec::with_capacity(pairs.len());
        let mut ego = Vec::with_capacity(pairs.len());
        let mut exo_in = Vec::with_capacity(pairs.len());
        let mut ego_in = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (x, y) = (rgb_to_tensor::<T>(&p.exo), rgb_to_tensor::<T>(&p.ego));
            if seg_conditioning {
                exo_in.push(with_channel(&x, &seg_to_tensor(&p.ego_seg)));
                ego_in.push(with_channel(&y, &seg_to_tensor(&p.exo_seg)));
            }
            exo.push(x);
            ego.push(y);
        }
        let exo = Tensor::stack_batch(&exo)?;
        let ego = Tensor::stack_batch(&ego)?;
        let (exo_input, ego_input) =
            if seg_conditioning { (Tensor::stack_batch(&exo_in)?, Tensor::stack_batch(&ego_in)?) } else { (exo.clone(), ego.clone()) };
        Ok(Batch { exo, ego, exo_input, ego_input })
    }

    pub fn len(&self) -> usize {
        self.exo.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Networks, optimizer moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T: Element> {
    pub config: TrainConfig,
    pub gens: GeneratorPair<T>,
    pub d1: PatchDiscriminator<T>,
    pub d2: PatchDiscriminator<T>,
    pub psi: FeatureExtractor<T>,
    pub opt_gen: AdamState<T>,
    pub opt_d1: AdamState<T>,
    pub opt_d2: AdamState<T>,
    pub step: u64,
}

impl<T: Element> TrainState<T> {
    /// Fresh networks initialized from `config.seed`.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let config = config.effective()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gens = GeneratorPair::new(config.net.clone(), &mut rng)?;
        let (c, o, s) = (config.net.in_channels, config.net.out_channels, config.net.conditioning_channels);
        let d1 = PatchDiscriminator::new(config.disc.clone(), c + s, o, &mut rng)?;
        let d2 = PatchDiscriminator::new(config.disc.clone(), o + s, c, &mut rng)?;
        let psi = FeatureExtractor::new(config.psi_seed, o);
        Ok(TrainState {
            opt_gen: AdamState::new(gens.params()),
            opt_d1: AdamState::new(d1.params()),
            opt_d2: AdamState::new(d2.params()),
            config,
            gens,
            d1,
            d2,
            psi,
            step: 0,
        })
    }

    pub fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let (_, c, h, w) = batch.exo_input.dims4()?;
        if c != self.config.net.input_channels() {
            return Err(Error::Config(format!("batch has {c} input channels, generators expect {}", self.config.net.input_channels())));
        }
        self.config.net.check_side(h)?;
        self.config.net.check_side(w)
    }

    /// One D step then one joint G step on `batch`.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<LossReport> {
        self.check_batch(batch)?;
        let cfg = self.config.clone();
        let hyper = cfg.adam();
        let gen_before = self.gens.params().fingerprint();
        let tape = Tape::new();
        let exo = tape.constant(batch.exo.clone());
        let ego = tape.constant(batch.ego.clone());
        let (report, grads) = {
            let gens = self.gens.bind(&tape, true);
            let enc1 = gens.encode(Gen::G1, tape.constant(batch.exo_input.clone())).in_component("generator")?;
            let enc2 = gens.encode(Gen::G2, tape.constant(batch.ego_input.clone())).in_component("generator")?;
            let fake_ego = gens.decode(Gen::G1, &enc1).in_component("generator")?;
            let fake_exo = gens.decode(Gen::G2, &enc2).in_component("generator")?;

            let d1 =
                discriminator_update(&mut self.d1, &mut self.opt_d1, &hyper, &batch.exo_input, &batch.ego, &fake_ego.to_tensor(), "d1")?;
            let d2 =
                discriminator_update(&mut self.d2, &mut self.opt_d2, &hyper, &batch.ego_input, &batch.exo, &fake_exo.to_tensor(), "d2")?;
            if self.gens.params().fingerprint() != gen_before {
                return Err(Error::PhaseViolation("discriminator"));
            }

            let disc1 = self.d1.bind(&tape, false);
            let disc2 = self.d2.bind(&tape, false);
            let (exo_cond, ego_cond) = (tape.constant(batch.exo_input.clone()), tape.constant(batch.ego_input.clone()));
            let gan1 = generator_adversarial_loss(disc1.discriminate(exo_cond, fake_ego).in_component("gan1")?).in_component("gan1")?;
            let gan2 = generator_adversarial_loss(disc2.discriminate(ego_cond, fake_exo).in_component("gan2")?).in_component("gan2")?;
            let w = &cfg.weights;
            let exo_back = gens.decode(Gen::G2, &enc1).in_component("cross_cycle")?;
            let ego_back = gens.decode(Gen::G1, &enc2).in_component("cross_cycle")?;
            let cross = weighted_l1(exo, exo_back, ego, ego_back, w.lambda1).in_component("cross_cycle")?;
            let recon = weighted_l1(ego, fake_ego, exo, fake_exo, w.lambda3).in_component("reconstruction")?;
            let ctx = self.contextual(&tape, ego, fake_ego, exo, fake_exo).in_component("contextual")?;

            let report = LossReport::new(
                gan1.item().as_f64(),
                gan2.item().as_f64(),
                d1,
                d2,
                cross.item().as_f64(),
                recon.item().as_f64(),
                ctx.item().as_f64(),
                w,
            );
            report.check_finite()?;
            let total = total_loss_var(gan1, gan2, cross, recon, ctx, w).in_component("total")?;
            tape.backward(total).in_component("total")?;
            (report, gens.grads())
        };
        let d_before = (self.d1.params().fingerprint(), self.d2.params().fingerprint());
        self.apply_generator_grads(&grads)?;
        if (self.d1.params().fingerprint(), self.d2.params().fingerprint()) != d_before {
            return Err(Error::PhaseViolation("generator"));
        }
        self.gens.assert_shared()?;
        self.step += 1;
        Ok(report)
    }

    fn contextual<'t>(
        &self,
        tape: &'t Tape<T>,
        ego: Var<'t, T>,
        fake_ego: Var<'t, T>,
        exo: Var<'t, T>,
        fake_exo: Var<'t, T>,
    ) -> std::result::Result<Var<'t, T>, crate::TensorError> {
        let params = self.config.contextual_params();
        let direction =
            |real: Var<'t, T>, fake: Var<'t, T>| contextual_loss(&self.psi.extract(tape, real)?, &self.psi.extract(tape, fake)?, &params);
        let ego_term = direction(ego, fake_ego)?;
        match self.config.contextual_directions {
            ContextualDirections::EgoOnly => Ok(ego_term),
            ContextualDirections::Both => ego_term.add(direction(exo, fake_exo)?)?.scale(0.5),
        }
    }

    /// One Adam step of the generator pair with externally computed grads.
    pub fn apply_generator_grads(&mut self, grads: &[(ParamId, Tensor<T>)]) -> Result<()> {
        let hyper = self.config.adam();
        adam_step(self.gens.params_mut(), grads, &mut self.opt_gen, &hyper)?;
        Ok(())
    }

    /// `G₁(exo)` for a batch, without gradient bookkeeping.
    pub fn generate(&self, which: Gen, batch: &Batch<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let input = match which {
            Gen::G1 => &batch.exo_input,
            Gen::G2 => &batch.ego_input,
        };
        Ok(self.gens.generate_tensor(which, input)?)
    }
}

/// Minimizes one discriminator's loss on `(cond, real)` against a constant
/// `fake`; returns the loss before the update.
#[allow(clippy::too_many_arguments)]
pub fn discriminator_update<T: Element>(
    disc: &mut PatchDiscriminator<T>,
    opt: &mut AdamState<T>,
    hyper: &AdamHyper,
    cond: &Tensor<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    component: &'static str,
) -> Result<f64> {
    let tape = Tape::new();
    let (value, grads) = {
        let d = disc.bind(&tape, true);
        let c = tape.constant(cond.clone());
        let real_logits = d.discriminate(c, tape.constant(real.clone())).in_component(component)?;
        let fake_logits = d.discriminate(c, tape.constant(fake.clone())).in_component(component)?;
        let loss = discriminator_loss(real_logits, fake_logits).in_component(component)?;
        let value = loss.item().as_f64();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { component, value });
        }
        tape.backward(loss).in_component(component)?;
        (value, d.grads())
    };
    adam_step(disc.params_mut(), &grads, opt, hyper)?;
    Ok(value)
}
