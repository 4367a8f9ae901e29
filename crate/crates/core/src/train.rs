//! Composite objective and the seeded optimization loop.
//!
//! `total = bce + lambda_pg * pg + lambda_shap * kl`. The advantage matrix and
//! the Shapley target are constants within a step, so the game terms only
//! send gradient into the decision-matrix logits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState, ParamSet};
use crate::game::{
    kl_loss, kl_weight_grad, policy_gradient_loss, policy_gradient_weight_grad,
    rewards_and_advantage, sample_budget, shapley_mc, AdvantageMatrix, BatchGame, ShapleyState,
};
use crate::model::{forward_case, predict, EmbeddedCase, Gradients, ModelParams, ModelShape};
use crate::ops::{bce_term, bce_term_grad, check_labels};
use crate::rng::{epoch_rng, stream_rng, Stream};
use crate::{Error, Matrix, Result};

/// Ablation switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Single head on the global payload only (zero partition agents).
    pub centralized_only: bool,
    /// Freeze `W` at uniform: agents are averaged, not weighted.
    pub no_decision_matrix: bool,
    /// Drop the policy-gradient and Shapley-KL terms.
    pub no_contribution_losses: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub agents: usize,
    pub classes: usize,
    pub dim: usize,
    pub agent_hidden: Vec<usize>,
    pub fusion_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_pg: f64,
    pub lambda_shap: f64,
    pub ema_decay: f64,
    /// Permutations per Shapley estimate; `None` means `ceil(2^{N/2})`.
    pub mc_budget: Option<usize>,
    /// Recompute the Shapley matrix every this many steps.
    pub shapley_interval: usize,
    pub seed: u64,
    pub ablation: Ablation,
}

/// Named hyperparameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 1000 epochs at learning rate 5e-5.
    HccLike,
    /// 30 epochs at learning rate 5e-3.
    MtbLike,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "hcc-like" => Some(Preset::HccLike),
            "mtb-like" => Some(Preset::MtbLike),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::HccLike => "hcc-like",
            Preset::MtbLike => "mtb-like",
        }
    }

    /// Overwrites epochs, learning rate, batch size and loss weights.
    pub fn apply(self, config: &mut TrainConfig) {
        let (epochs, lr) = match self {
            Preset::HccLike => (1000, 5e-5),
            Preset::MtbLike => (30, 5e-3),
        };
        config.epochs = epochs;
        config.learning_rate = lr;
        config.batch_size = 4;
        config.lambda_pg = 1.0;
        config.lambda_shap = 10.0;
    }
}

impl TrainConfig {
    pub fn new(agents: usize, classes: usize, dim: usize) -> Self {
        TrainConfig {
            agents,
            classes,
            dim,
            agent_hidden: alloc::vec![64],
            fusion_hidden: alloc::vec![32],
            epochs: 30,
            batch_size: 4,
            learning_rate: 5e-3,
            lambda_pg: 1.0,
            lambda_shap: 10.0,
            ema_decay: 0.9,
            mc_budget: None,
            shapley_interval: 1,
            seed: 0,
            ablation: Ablation::default(),
        }
    }

    pub fn with_preset(agents: usize, classes: usize, dim: usize, preset: Preset) -> Self {
        let mut config = Self::new(agents, classes, dim);
        preset.apply(&mut config);
        config
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("agents", self.agents),
            ("classes", self.classes),
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("shapley_interval", self.shapley_interval),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lambda_pg >= 0.0) || !(self.lambda_shap >= 0.0) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.mc_budget == Some(0) {
            return Err(Error::Config("mc_budget must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }

    /// Number of partition agents the model actually has.
    pub fn model_agents(&self) -> usize {
        if self.ablation.centralized_only {
            0
        } else {
            self.agents
        }
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            agents: self.model_agents(),
            classes: self.classes,
            dim: self.dim,
            agent_hidden: self.agent_hidden.clone(),
            fusion_hidden: self.fusion_hidden.clone(),
        }
    }

    pub fn shapley_budget(&self) -> Result<usize> {
        match self.mc_budget {
            Some(m) => Ok(m),
            None => sample_budget(self.model_agents().max(1)),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_pg: self.lambda_pg,
            lambda_shap: self.lambda_shap,
            contribution_losses: !self.ablation.no_contribution_losses,
        }
    }
}

/// The three terms of the objective and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub pg: f64,
    pub shap: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_pg: f64,
    pub lambda_shap: f64,
    /// When false the game terms are neither computed nor reported.
    pub contribution_losses: bool,
}

/// Loss value, parameter gradient and the advantage used for one batch.
#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub breakdown: LossBreakdown,
    pub gradients: ModelParams,
    pub advantage: Option<AdvantageMatrix>,
}

/// Evaluates the composite loss on `batch` and its gradient with respect to
/// every parameter. `phi_target` is the smoothed Shapley matrix; without it
/// the KL term is zero.
pub fn total_loss(
    params: &ModelParams,
    batch: &[EmbeddedCase],
    phi_target: Option<&Matrix>,
    weights: LossWeights,
) -> Result<LossEvaluation> {
    if batch.is_empty() {
        return Err(Error::Input("loss needs a nonempty batch".into()));
    }
    let w = params.decision_weights();
    let mixture = params.mixture_weights();
    let mut acc = Gradients::zeros_for(params);
    let scale = 1.0 / (batch.len() * params.classes()) as f64;
    let mut bce = 0.0;
    for case in batch {
        check_labels(&case.labels)?;
        let fwd = forward_case(params, case, &w, mixture)?;
        let mut grad = Vec::with_capacity(params.classes());
        for (&z, &y) in fwd.logits.iter().zip(&case.labels) {
            bce += bce_term(z, y);
            grad.push(bce_term_grad(z, y) * scale);
        }
        fwd.backward(&grad, &w, mixture, &mut acc)?;
    }
    bce *= scale;

    let (mut pg, mut shap, mut advantage) = (0.0, 0.0, None);
    if weights.contribution_losses && params.agents() > 0 {
        let (_, adv) = rewards_and_advantage(params, batch)?;
        pg = policy_gradient_loss(&w, &adv.advantage)?;
        add_scaled(&mut acc.d_weights, &policy_gradient_weight_grad(&w, &adv.advantage)?, weights.lambda_pg);
        if let Some(phi) = phi_target {
            shap = kl_loss(&w, phi)?;
            add_scaled(&mut acc.d_weights, &kl_weight_grad(&w, phi)?, weights.lambda_shap);
        }
        advantage = Some(adv);
    }
    let total = bce + weights.lambda_pg * pg + weights.lambda_shap * shap;
    Ok(LossEvaluation {
        breakdown: LossBreakdown { bce, pg, shap, total },
        gradients: acc.finish(&w, mixture),
        advantage,
    })
}

fn add_scaled(target: &mut Matrix, source: &Matrix, factor: f64) {
    if factor == 0.0 {
        return;
    }
    for (t, s) in target.as_mut_slice().iter_mut().zip(source.as_slice()) {
        *t += factor * s;
    }
}

/// The scalar whose exact gradient [`total_loss`] returns: the composite loss
/// with the advantage and Shapley target frozen at the given values.
pub fn fixed_target_loss(
    params: &ModelParams,
    batch: &[EmbeddedCase],
    advantage: Option<&Matrix>,
    phi_target: Option<&Matrix>,
    weights: LossWeights,
) -> Result<f64> {
    let mut bce = 0.0;
    for case in batch {
        let y = predict(params, case)?;
        bce += y.iter().zip(&case.labels).map(|(&z, &t)| bce_term(z, t)).sum::<f64>();
    }
    bce /= (batch.len() * params.classes()) as f64;
    let w = params.decision_weights();
    let pg = match advantage {
        Some(a) if weights.contribution_losses => policy_gradient_loss(&w, a)?,
        _ => 0.0,
    };
    let shap = match phi_target {
        Some(phi) if weights.contribution_losses => kl_loss(&w, phi)?,
        _ => 0.0,
    };
    Ok(bce + weights.lambda_pg * pg + weights.lambda_shap * shap)
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub shapley: ShapleyState,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Current epoch (0-based) and the position inside its shuffled order.
    pub epoch: u64,
    pub batch_cursor: usize,
    /// Word position of the Shapley sampling stream.
    pub shapley_rng_word_pos: u128,
}

/// Diagnostics emitted after every optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: LossBreakdown,
    /// `W` after the update.
    pub weights: Matrix,
    pub advantage: Option<AdvantageMatrix>,
    pub phi_instant: Option<Matrix>,
    pub phi_ema: Option<Matrix>,
    /// `KL(W || phi_ema)` after the update.
    pub kl: Option<f64>,
}

pub struct Trainer {
    state: TrainerState,
    shapley_rng: ChaCha8Rng,
    order: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(config.model_shape(), &mut stream_rng(config.seed, Stream::Init))?;
        let adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &params);
        let shapley = ShapleyState::new(config.ema_decay, config.shapley_budget()?)?;
        Self::from_state(TrainerState {
            config,
            params,
            adam,
            shapley,
            step: 0,
            epoch: 0,
            batch_cursor: 0,
            shapley_rng_word_pos: 0,
        })
    }

    pub fn from_state(state: TrainerState) -> Result<Self> {
        state.config.validate()?;
        state.params.validate()?;
        if state.params.shape != state.config.model_shape() {
            return Err(Error::Config("checkpoint parameters do not match its configuration".into()));
        }
        let mut shapley_rng = stream_rng(state.config.seed, Stream::Shapley);
        shapley_rng.set_word_pos(state.shapley_rng_word_pos);
        Ok(Trainer {
            state,
            shapley_rng,
            order: None,
        })
    }

    /// Snapshot of the complete training state.
    pub fn state(&self) -> TrainerState {
        let mut state = self.state.clone();
        state.shapley_rng_word_pos = self.shapley_rng.get_word_pos();
        state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.state.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.state.params
    }

    pub fn shapley(&self) -> &ShapleyState {
        &self.state.shapley
    }

    pub fn steps_taken(&self) -> u64 {
        self.state.step
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.state.config.epochs as u64
    }

    fn epoch_order(&mut self, len: usize) -> &[usize] {
        let epoch = self.state.epoch;
        if self.order.as_ref().map(|(e, o)| (*e, o.len())) != Some((epoch, len)) {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..len).collect();
            order.shuffle(&mut epoch_rng(self.state.config.seed, epoch));
            self.order = Some((epoch, order));
        }
        &self.order.as_ref().unwrap().1
    }

    /// Runs one optimizer step on the next batch of `data`.
    pub fn step(&mut self, data: &[EmbeddedCase]) -> Result<StepRecord> {
        if data.is_empty() {
            return Err(Error::Input("training set is empty".into()));
        }
        if self.is_finished() {
            return Err(Error::Usage("training already finished".into()));
        }
        let bs = self.state.config.batch_size;
        let cursor = self.state.batch_cursor;
        let batch: Vec<EmbeddedCase> = {
            let order = self.epoch_order(data.len());
            let end = (cursor + bs).min(order.len());
            order[cursor..end].iter().map(|&j| data[j].clone()).collect()
        };

        let step = self.state.step;
        let config = &self.state.config;
        let agents = self.state.params.agents();
        if agents > 0 && step.is_multiple_of(config.shapley_interval as u64) {
            let game = BatchGame::new(&self.state.params, &batch)?;
            let phi = shapley_mc(&game, self.state.shapley.budget, &mut self.shapley_rng)?;
            self.state.shapley.ema_update(phi)?;
        }

        let weights = config.loss_weights();
        let eval = total_loss(&self.state.params, &batch, self.state.shapley.ema.as_ref(), weights)?;
        self.check_finite(&eval)?;
        let mut grads = eval.gradients;
        if self.state.config.ablation.no_decision_matrix {
            grads.decision_logits.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
        }
        self.state.adam.step(&mut self.state.params, &grads)?;

        let batch_epoch = self.state.epoch;
        self.state.step += 1;
        self.state.batch_cursor = cursor + batch.len();
        if self.state.batch_cursor >= data.len() {
            self.state.batch_cursor = 0;
            self.state.epoch += 1;
        }

        let w = self.state.params.decision_weights();
        let kl = match &self.state.shapley.ema {
            Some(phi) => Some(kl_loss(&w, phi)?),
            None => None,
        };
        Ok(StepRecord {
            step,
            epoch: batch_epoch,
            loss: eval.breakdown,
            weights: w,
            advantage: eval.advantage,
            phi_instant: self.state.shapley.instant.clone(),
            phi_ema: self.state.shapley.ema.clone(),
            kl,
        })
    }

    fn check_finite(&self, eval: &LossEvaluation) -> Result<()> {
        let b = eval.breakdown;
        let term = [("bce", b.bce), ("pg", b.pg), ("shap", b.shap), ("total", b.total)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(t, _)| t);
        let names = self.state.params.block_names();
        let block = eval
            .gradients
            .blocks()
            .iter()
            .position(|blk| blk.iter().any(|g| !g.is_finite()))
            .map(|i| names[i].clone());
        match (term, block) {
            (None, None) => Ok(()),
            (term, block) => Err(Error::NonFinite {
                step: self.state.step,
                term: term.unwrap_or("gradient"),
                block: block.unwrap_or_else(|| String::from("none")),
            }),
        }
    }

    /// Trains until the configured number of epochs is reached.
    pub fn run(&mut self, data: &[EmbeddedCase], mut on_step: impl FnMut(&StepRecord)) -> Result<()> {
        while !self.is_finished() {
            let record = self.step(data)?;
            on_step(&record);
        }
        Ok(())
    }

    /// Takes at most `max_steps` steps; returns how many were taken.
    pub fn run_steps(
        &mut self,
        data: &[EmbeddedCase],
        max_steps: u64,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<u64> {
        let mut taken = 0;
        while taken < max_steps && !self.is_finished() {
            let record = self.step(data)?;
            on_step(&record);
            taken += 1;
        }
        Ok(taken)
    }

    pub fn into_params(self) -> ModelParams {
        self.state.params
    }
}

/// Mean full-coalition BCE over `cases`.
pub fn mean_bce(params: &ModelParams, cases: &[EmbeddedCase]) -> Result<f64> {
    let mut total = 0.0;
    for case in cases {
        let y = predict(params, case)?;
        total += y.iter().zip(&case.labels).map(|(&z, &t)| bce_term(z, t)).sum::<f64>();
    }
    Ok(total / (cases.len() * params.classes()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adam::flatten;
    use crate::adam::unflatten_into;
    use crate::fd::fd_check;
    use rand::Rng;

    fn micro_batch(agents: usize, classes: usize, dim: usize, n: usize, seed: u64) -> Vec<EmbeddedCase> {
        let mut rng = stream_rng(seed, Stream::Synth);
        (0..n)
            .map(|j| EmbeddedCase {
                id: format!("{j}"),
                partitions: (0..agents).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                global: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                labels: (0..classes).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect(),
            })
            .collect()
    }

    fn micro_config() -> TrainConfig {
        let mut c = TrainConfig::new(3, 2, 4);
        c.agent_hidden = alloc::vec![4];
        c.fusion_hidden = alloc::vec![4];
        c
    }

    #[test]
    fn preset_values() {
        let hcc = TrainConfig::with_preset(5, 8, 16, Preset::HccLike);
        assert_eq!((hcc.epochs, hcc.learning_rate, hcc.batch_size), (1000, 5e-5, 4));
        assert_eq!((hcc.lambda_pg, hcc.lambda_shap), (1.0, 10.0));
        let mtb = TrainConfig::with_preset(5, 2, 16, Preset::MtbLike);
        assert_eq!((mtb.epochs, mtb.learning_rate), (30, 5e-3));
        assert_eq!(Preset::parse("mtb-like"), Some(Preset::MtbLike));
        assert_eq!(Preset::parse("nope"), None);
    }

    #[test]
    fn config_validation() {
        let mut c = micro_config();
        c.batch_size = 0;
        assert!(matches!(Trainer::new(c), Err(Error::Config(_))));
        let mut c = micro_config();
        c.lambda_shap = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn gradient_matches_fd_with_frozen_targets() {
        let config = micro_config();
        let params = ModelParams::init(config.model_shape(), &mut stream_rng(0, Stream::Init)).unwrap();
        let batch = micro_batch(3, 2, 4, 4, 0);
        let game = BatchGame::new(&params, &batch).unwrap();
        let phi = shapley_mc(&game, 8, &mut stream_rng(0, Stream::Shapley)).unwrap();
        let weights = config.loss_weights();
        let eval = total_loss(&params, &batch, Some(&phi), weights).unwrap();
        let adv = eval.advantage.clone().unwrap();
        let mut probe = params.clone();
        let loss = |theta: &[f64]| {
            unflatten_into(&mut probe, theta).unwrap();
            fixed_target_loss(&probe, &batch, Some(&adv.advantage), Some(&phi), weights).unwrap()
        };
        let err = fd_check(loss, &flatten(&params), &flatten(&eval.gradients), 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
        let b = eval.breakdown;
        assert!((b.total - (b.bce + b.pg + 10.0 * b.shap)).abs() < 1e-12);
    }

    #[test]
    fn zero_lambdas_reduce_to_bce() {
        let config = micro_config();
        let params = ModelParams::init(config.model_shape(), &mut stream_rng(1, Stream::Init)).unwrap();
        let batch = micro_batch(3, 2, 4, 4, 1);
        let phi = crate::game::normalize_to_simplex(&Matrix::filled(3, 2, 1.0));
        let weights = LossWeights { lambda_pg: 0.0, lambda_shap: 0.0, contribution_losses: true };
        let with_terms = total_loss(&params, &batch, Some(&phi), weights).unwrap();
        let plain = total_loss(&params, &batch, None, LossWeights { contribution_losses: false, ..weights }).unwrap();
        assert_eq!(with_terms.breakdown.total, with_terms.breakdown.bce);
        assert_eq!(flatten(&with_terms.gradients), flatten(&plain.gradients));
        assert_eq!(plain.breakdown.pg, 0.0);
        assert_eq!(plain.breakdown.shap, 0.0);
    }

    #[test]
    fn symmetric_batch_with_matching_target_is_plain_bce() {
        let config = micro_config();
        let mut params = ModelParams::init(config.model_shape(), &mut stream_rng(2, Stream::Init)).unwrap();
        let head = params.agent_heads[0].clone();
        params.agent_heads.iter_mut().for_each(|h| *h = head.clone());
        let mut batch = micro_batch(3, 2, 4, 3, 2);
        for case in &mut batch {
            let x = case.partitions[0].clone();
            case.partitions.iter_mut().for_each(|p| *p = x.clone());
        }
        let w = params.decision_weights();
        let eval = total_loss(&params, &batch, Some(&w), config.loss_weights()).unwrap();
        let b = eval.breakdown;
        assert_eq!(b.pg, 0.0);
        assert!(b.shap.abs() < 1e-6);
        assert!((b.total - b.bce).abs() < 1e-5);
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let mut config = micro_config();
        config.epochs = 3;
        let data = micro_batch(3, 2, 4, 10, 3);
        let mut a = Trainer::new(config.clone()).unwrap();
        a.run(&data, |_| {}).unwrap();
        let mut b = Trainer::new(config.clone()).unwrap();
        b.run(&data, |_| {}).unwrap();
        assert_eq!(a.state(), b.state());

        let mut c = Trainer::new(config).unwrap();
        c.run_steps(&data, 4, |_| {}).unwrap();
        let mut resumed = Trainer::from_state(c.state()).unwrap();
        resumed.run(&data, |_| {}).unwrap();
        assert_eq!(resumed.state(), a.state());
    }

    #[test]
    fn simplex_and_zero_sum_hold_every_step() {
        let mut config = micro_config();
        config.epochs = 4;
        let data = micro_batch(3, 2, 4, 9, 4);
        let mut trainer = Trainer::new(config).unwrap();
        let mut steps = 0;
        trainer
            .run(&data, |r| {
                steps += 1;
                assert!((r.weights.sum() - 1.0).abs() < 1e-9);
                assert!(r.weights.as_slice().iter().all(|&w| w > 0.0));
                let a = &r.advantage.as_ref().unwrap().advantage;
                for k in 0..a.cols() {
                    assert!(a.column(k).iter().sum::<f64>().abs() < 1e-12);
                }
                let l = r.loss;
                assert!((l.total - (l.bce + l.pg + 10.0 * l.shap)).abs() < 1e-12);
            })
            .unwrap();
        // 9 cases in batches of 4 keep the short last batch: 3 steps/epoch
        assert_eq!(steps, 12);
    }

    #[test]
    fn ablations_behave() {
        let data = micro_batch(3, 2, 4, 8, 5);
        let mut config = micro_config();
        config.epochs = 2;
        config.ablation.no_contribution_losses = true;
        let mut t = Trainer::new(config.clone()).unwrap();
        t.run(&data, |r| {
            assert_eq!((r.loss.pg, r.loss.shap), (0.0, 0.0));
        })
        .unwrap();

        config.ablation = Ablation { no_decision_matrix: true, ..Ablation::default() };
        let mut t = Trainer::new(config.clone()).unwrap();
        t.run(&data, |_| {}).unwrap();
        assert!(t.params().decision_logits.as_slice().iter().all(|&z| z == 0.0));

        config.ablation = Ablation { centralized_only: true, ..Ablation::default() };
        let mut t = Trainer::new(config).unwrap();
        t.run(&data, |r| assert!(r.phi_ema.is_none())).unwrap();
        assert_eq!(t.params().agents(), 0);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let config = micro_config();
        let mut t = Trainer::new(config).unwrap();
        let mut data = micro_batch(3, 2, 4, 4, 6);
        data.iter_mut().for_each(|c| c.global[0] = f64::NAN);
        match t.step(&data) {
            Err(Error::NonFinite { step, term, .. }) => {
                assert_eq!(step, 0);
                assert_eq!(term, "bce");
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
