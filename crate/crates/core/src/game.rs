//! Cooperative-game credit assignment over the partition agents.
//!
//! The value of a coalition `S` for class `k` is the batch-mean BCE of the
//! prediction that uses only the agents in `S` (plus the global stream).
//! Lower is better, so a marginal contribution is `v(S) - v(S + i)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cell::RefCell;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{predict_from_streams, stream_outputs, CoalitionMask, EmbeddedCase, ModelParams, StreamOutputs};
use crate::ops::{bce_term, order_free_sum};
use crate::{Error, Matrix, Result};

/// Largest `N` accepted by exact enumeration.
pub const MAX_EXACT_AGENTS: usize = 12;

/// Smoothing added to the Shapley target before taking logarithms.
pub const KL_EPSILON: f64 = 1e-8;

/// A game with per-class values for every coalition of `agents()` players.
pub trait CoalitionGame {
    fn agents(&self) -> usize;
    fn classes(&self) -> usize;
    /// Per-class loss of the coalition.
    fn value(&self, mask: &CoalitionMask) -> Result<Vec<f64>>;
}

/// The game induced by a frozen model on one batch.
pub struct BatchGame<'a> {
    params: &'a ModelParams,
    streams: Vec<StreamOutputs>,
    labels: Vec<&'a [f64]>,
    weights: Matrix,
    mixture: (f64, f64),
}

impl<'a> BatchGame<'a> {
    pub fn new(params: &'a ModelParams, batch: &'a [EmbeddedCase]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Input("coalition game needs a nonempty batch".into()));
        }
        let streams = batch
            .iter()
            .map(|c| stream_outputs(params, c))
            .collect::<Result<Vec<_>>>()?;
        for case in batch {
            crate::ops::check_labels(&case.labels)?;
        }
        Ok(BatchGame {
            params,
            streams,
            labels: batch.iter().map(|c| c.labels.as_slice()).collect(),
            weights: params.decision_weights(),
            mixture: params.mixture_weights(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }
}

impl CoalitionGame for BatchGame<'_> {
    fn agents(&self) -> usize {
        self.params.agents()
    }

    fn classes(&self) -> usize {
        self.params.classes()
    }

    fn value(&self, mask: &CoalitionMask) -> Result<Vec<f64>> {
        let mut total = alloc::vec![0.0; self.classes()];
        for (streams, labels) in self.streams.iter().zip(&self.labels) {
            let y = predict_from_streams(self.params, streams, &self.weights, self.mixture, mask)?;
            for (k, t) in total.iter_mut().enumerate() {
                *t += bce_term(y[k], labels[k]);
            }
        }
        let n = self.streams.len() as f64;
        total.iter_mut().for_each(|t| *t /= n);
        Ok(total)
    }
}

/// Complete table of coalition values, indexed by coalition bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTable {
    agents: usize,
    classes: usize,
    values: Vec<Vec<f64>>,
}

impl GameTable {
    pub fn from_values(agents: usize, classes: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        check_exact_budget(agents)?;
        if values.len() != 1 << agents {
            return Err(Error::shape("GameTable coalitions", 1usize << agents, values.len()));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != classes) {
            return Err(Error::shape("GameTable classes", classes, bad.len()));
        }
        Ok(GameTable {
            agents,
            classes,
            values,
        })
    }

    /// Tabulates `f(mask)` for all `2^N` coalitions.
    pub fn from_fn(
        agents: usize,
        classes: usize,
        mut f: impl FnMut(&CoalitionMask) -> Vec<f64>,
    ) -> Result<Self> {
        check_exact_budget(agents)?;
        let values = (0..1u64 << agents)
            .map(|bits| f(&CoalitionMask::from_bits(agents, bits)))
            .collect();
        Self::from_values(agents, classes, values)
    }

    pub fn from_game<G: CoalitionGame + ?Sized>(game: &G) -> Result<Self> {
        check_exact_budget(game.agents())?;
        let values = (0..1u64 << game.agents())
            .map(|bits| game.value(&CoalitionMask::from_bits(game.agents(), bits)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(game.agents(), game.classes(), values)
    }

    pub fn get(&self, bits: u64) -> &[f64] {
        &self.values[bits as usize]
    }
}

impl CoalitionGame for GameTable {
    fn agents(&self) -> usize {
        self.agents
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn value(&self, mask: &CoalitionMask) -> Result<Vec<f64>> {
        if mask.len() != self.agents {
            return Err(Error::shape("GameTable mask", self.agents, mask.len()));
        }
        Ok(self.values[mask.to_bits() as usize].clone())
    }
}

fn check_exact_budget(agents: usize) -> Result<()> {
    if agents > MAX_EXACT_AGENTS {
        return Err(Error::Budget {
            agents,
            limit: MAX_EXACT_AGENTS,
        });
    }
    Ok(())
}

/// Memoizes coalition values; evaluation is deterministic, so caching never
/// changes results.
struct Memo<'g, G: ?Sized> {
    game: &'g G,
    cache: RefCell<BTreeMap<u64, Vec<f64>>>,
}

impl<'g, G: CoalitionGame + ?Sized> Memo<'g, G> {
    fn new(game: &'g G) -> Self {
        Memo {
            game,
            cache: RefCell::new(BTreeMap::new()),
        }
    }

    fn value(&self, mask: &CoalitionMask) -> Result<Vec<f64>> {
        if self.game.agents() > 63 {
            return self.game.value(mask);
        }
        let key = mask.to_bits();
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(v.clone());
        }
        let v = self.game.value(mask)?;
        self.cache.borrow_mut().insert(key, v.clone());
        Ok(v)
    }
}

/// Batch-mean marginal loss reductions `r'_ik = L_k(without i) - L_k(full)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMatrix(pub Matrix);

/// `A = r' - b` with the per-class baseline `b_k = mean_i r'_ik`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageMatrix {
    pub advantage: Matrix,
    pub baseline: Vec<f64>,
}

pub fn advantage_from_rewards(rewards: &Matrix) -> AdvantageMatrix {
    let (n, c) = (rewards.rows(), rewards.cols());
    let baseline: Vec<f64> = (0..c)
        .map(|k| {
            if n == 0 {
                0.0
            } else {
                (0..n).map(|i| rewards.get(i, k)).sum::<f64>() / n as f64
            }
        })
        .collect();
    let mut advantage = Matrix::zeros(n, c);
    for i in 0..n {
        for k in 0..c {
            advantage.set(i, k, rewards.get(i, k) - baseline[k]);
        }
    }
    AdvantageMatrix { advantage, baseline }
}

/// Leave-one-out rewards and advantages of any game.
pub fn rewards_and_advantage_of<G: CoalitionGame + ?Sized>(
    game: &G,
) -> Result<(RewardMatrix, AdvantageMatrix)> {
    let n = game.agents();
    let full = game.value(&CoalitionMask::full(n))?;
    let mut rewards = Matrix::zeros(n, game.classes());
    for i in 0..n {
        let without = game.value(&CoalitionMask::without(n, i))?;
        for (k, (w, f)) in without.iter().zip(&full).enumerate() {
            rewards.set(i, k, w - f);
        }
    }
    let adv = advantage_from_rewards(&rewards);
    Ok((RewardMatrix(rewards), adv))
}

/// Rewards and advantages of the frozen model on `batch`.
pub fn rewards_and_advantage(
    params: &ModelParams,
    batch: &[EmbeddedCase],
) -> Result<(RewardMatrix, AdvantageMatrix)> {
    rewards_and_advantage_of(&BatchGame::new(params, batch)?)
}

/// `-sum_ik ln(W_ik) * A_ik`, with `A` held constant.
pub fn policy_gradient_loss(w: &Matrix, advantage: &Matrix) -> Result<f64> {
    advantage.ensure_shape("policy_gradient_loss A", w.shape())?;
    Ok(-w
        .as_slice()
        .iter()
        .zip(advantage.as_slice())
        .map(|(&p, &a)| libm::log(p) * a)
        .sum::<f64>())
}

/// Gradient of [`policy_gradient_loss`] with respect to `W`: `-A / W`.
pub fn policy_gradient_weight_grad(w: &Matrix, advantage: &Matrix) -> Result<Matrix> {
    advantage.ensure_shape("policy_gradient_weight_grad A", w.shape())?;
    let data = w
        .as_slice()
        .iter()
        .zip(advantage.as_slice())
        .map(|(&p, &a)| -a / p)
        .collect();
    Matrix::from_vec(w.rows(), w.cols(), data)
}

/// `ceil(2^{N/2})` sampled permutations.
pub fn sample_budget(agents: usize) -> Result<usize> {
    if agents == 0 {
        return Err(Error::Config("sample budget needs at least one agent".into()));
    }
    let m = libm::ceil(libm::pow(2.0, agents as f64 / 2.0));
    Ok(m as usize)
}

/// Rectified Monte-Carlo Shapley estimate before normalization: the mean
/// over `permutations` random orderings of `[v(S) - v(S + i)]_+`, where `S`
/// is the set of agents preceding `i`.
pub fn shapley_mc_raw<G, R>(game: &G, permutations: usize, rng: &mut R) -> Result<Matrix>
where
    G: CoalitionGame + ?Sized,
    R: Rng + ?Sized,
{
    if permutations == 0 {
        return Err(Error::Config("Shapley sample budget must be at least 1".into()));
    }
    let (n, c) = (game.agents(), game.classes());
    let memo = Memo::new(game);
    let empty = memo.value(&CoalitionMask::empty(n))?;
    let mut raw = Matrix::zeros(n, c);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        for (slot, i) in order.iter_mut().enumerate() {
            *i = slot;
        }
        order.shuffle(rng);
        let mut mask = CoalitionMask::empty(n);
        let mut previous = empty.clone();
        for &i in &order {
            mask.insert(i);
            let current = memo.value(&mask)?;
            for k in 0..c {
                let marginal = previous[k] - current[k];
                if marginal > 0.0 {
                    raw.add_at(i, k, marginal);
                }
            }
            previous = current;
        }
    }
    raw.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v /= permutations as f64);
    Ok(raw)
}

/// Rectified Monte-Carlo Shapley matrix normalized onto the `N x C` simplex.
pub fn shapley_mc<G, R>(game: &G, permutations: usize, rng: &mut R) -> Result<Matrix>
where
    G: CoalitionGame + ?Sized,
    R: Rng + ?Sized,
{
    Ok(normalize_to_simplex(&shapley_mc_raw(game, permutations, rng)?))
}

/// Scales a nonnegative matrix to sum to one, falling back to uniform when
/// the total is below `1e-12`.
pub fn normalize_to_simplex(raw: &Matrix) -> Matrix {
    let total = raw.sum();
    let data = if total < 1e-12 {
        alloc::vec![1.0 / raw.len() as f64; raw.len()]
    } else {
        raw.as_slice().iter().map(|v| v / total).collect()
    };
    Matrix::from_vec(raw.rows(), raw.cols(), data).expect("shape preserved")
}

/// Exact Shapley values by enumeration of every coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactShapley {
    /// Classical (unrectified) values; `sum_i phi_ik = v_k(empty) - v_k(all)`.
    pub classical: Matrix,
    /// Expectation of the per-marginal rectified contribution.
    pub rectified: Matrix,
    /// `rectified` normalized onto the simplex, comparable to [`shapley_mc`].
    pub rectified_normalized: Matrix,
}

pub fn shapley_exact(table: &GameTable) -> Result<ExactShapley> {
    let (n, c) = (table.agents, table.classes);
    check_exact_budget(n)?;
    let mut factorial = [1.0f64; MAX_EXACT_AGENTS + 1];
    for s in 1..=MAX_EXACT_AGENTS {
        factorial[s] = factorial[s - 1] * s as f64;
    }
    let mut classical = Matrix::zeros(n, c);
    let mut rectified = Matrix::zeros(n, c);
    // weighted marginals per class, summed order-free so that symmetric
    // players get bit-identical values
    let mut terms = alloc::vec![Vec::with_capacity(1 << n.saturating_sub(1)); c];
    let mut positive = terms.clone();
    for i in 0..n {
        let bit = 1u64 << i;
        terms.iter_mut().chain(positive.iter_mut()).for_each(Vec::clear);
        for s in (0..1u64 << n).filter(|s| s & bit == 0) {
            let size = s.count_ones() as usize;
            let weight = factorial[size] * factorial[n - size - 1] / factorial[n];
            let without = table.get(s);
            let with = table.get(s | bit);
            for k in 0..c {
                let marginal = without[k] - with[k];
                terms[k].push(weight * marginal);
                if marginal > 0.0 {
                    positive[k].push(weight * marginal);
                }
            }
        }
        for k in 0..c {
            classical.set(i, k, order_free_sum(&mut terms[k]));
            rectified.set(i, k, order_free_sum(&mut positive[k]));
        }
    }
    Ok(ExactShapley {
        rectified_normalized: normalize_to_simplex(&rectified),
        classical,
        rectified,
    })
}

/// Instantaneous Shapley matrix and its exponential moving average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyState {
    pub decay: f64,
    pub budget: usize,
    pub instant: Option<Matrix>,
    pub ema: Option<Matrix>,
}

impl ShapleyState {
    pub fn new(decay: f64, budget: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Config(format!("EMA decay must lie in [0, 1), got {decay}")));
        }
        Ok(ShapleyState {
            decay,
            budget,
            instant: None,
            ema: None,
        })
    }

    /// `ema <- decay * ema + (1 - decay) * instant`, renormalized; the first
    /// update copies `instant`.
    pub fn ema_update(&mut self, instant: Matrix) -> Result<()> {
        let next = match &self.ema {
            None => instant.clone(),
            Some(ema) => {
                instant.ensure_shape("ema_update", ema.shape())?;
                let beta = self.decay;
                let blended = ema
                    .as_slice()
                    .iter()
                    .zip(instant.as_slice())
                    .map(|(e, p)| beta * e + (1.0 - beta) * p)
                    .collect();
                normalize_to_simplex(&Matrix::from_vec(ema.rows(), ema.cols(), blended)?)
            }
        };
        self.ema = Some(next);
        self.instant = Some(instant);
        Ok(())
    }
}

fn smoothed_target(phi: &Matrix) -> Vec<f64> {
    let total: f64 = phi.as_slice().iter().map(|p| p + KL_EPSILON).sum();
    phi.as_slice()
        .iter()
        .map(|p| (p + KL_EPSILON) / total)
        .collect()
}

/// `sum_ik W_ik ln(W_ik / q_ik)` where `q` is `phi + 1e-8` renormalized.
pub fn kl_loss(w: &Matrix, phi: &Matrix) -> Result<f64> {
    phi.ensure_shape("kl_loss target", w.shape())?;
    let q = smoothed_target(phi);
    Ok(w.as_slice()
        .iter()
        .zip(&q)
        .map(|(&p, &t)| p * libm::log(p / t))
        .sum())
}

/// Gradient of [`kl_loss`] with respect to `W` (target held constant).
pub fn kl_weight_grad(w: &Matrix, phi: &Matrix) -> Result<Matrix> {
    phi.ensure_shape("kl_weight_grad target", w.shape())?;
    let q = smoothed_target(phi);
    let data = w
        .as_slice()
        .iter()
        .zip(&q)
        .map(|(&p, &t)| libm::log(p / t) + 1.0)
        .collect();
    Matrix::from_vec(w.rows(), w.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelShape;
    use crate::rng::{stream_rng, Stream};

    fn two_agent_table() -> GameTable {
        // bits: 0 = {}, 1 = {1}, 2 = {2}, 3 = {1,2}
        GameTable::from_values(2, 1, alloc::vec![
            alloc::vec![0.9],
            alloc::vec![0.5],
            alloc::vec![0.7],
            alloc::vec![0.4],
        ])
        .unwrap()
    }

    #[test]
    fn two_agent_exact_example() {
        let exact = shapley_exact(&two_agent_table()).unwrap();
        assert!((exact.classical.get(0, 0) - 0.35).abs() < 1e-15);
        assert!((exact.classical.get(1, 0) - 0.15).abs() < 1e-15);
        assert!((exact.classical.sum() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_drops_are_recovered() {
        let drops = [0.3, -0.1, 0.05, 0.2];
        let table = GameTable::from_fn(4, 1, |m| {
            alloc::vec![1.0 - (0..4).filter(|&i| m.includes(i)).map(|i| drops[i]).sum::<f64>()]
        })
        .unwrap();
        let exact = shapley_exact(&table).unwrap();
        for (i, d) in drops.iter().enumerate() {
            assert!((exact.classical.get(i, 0) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn dummy_player_gets_zero() {
        let table = GameTable::from_fn(3, 2, |m| {
            let a = if m.includes(0) { 0.3 } else { 0.0 };
            let b = if m.includes(1) { 0.1 } else { 0.0 };
            alloc::vec![1.0 - a - a * b * 2.0, 0.8 - b]
        })
        .unwrap();
        let exact = shapley_exact(&table).unwrap();
        assert_eq!(exact.classical.row(2), &[0.0, 0.0]);
        let raw = shapley_mc_raw(&table, 50, &mut stream_rng(0, Stream::Shapley)).unwrap();
        assert_eq!(raw.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn exact_refuses_large_games() {
        let err = GameTable::from_values(13, 1, alloc::vec![]).unwrap_err();
        assert_eq!(err, Error::Budget { agents: 13, limit: MAX_EXACT_AGENTS });
        assert!(err.to_string().contains("2^13"));
    }

    #[test]
    fn advantage_arithmetic() {
        let r = Matrix::from_vec(3, 1, alloc::vec![0.3, 0.1, 0.2]).unwrap();
        let adv = advantage_from_rewards(&r);
        assert!((adv.baseline[0] - 0.2).abs() < 1e-15);
        let expected = [0.1, -0.1, 0.0];
        for i in 0..3 {
            assert!((adv.advantage.get(i, 0) - expected[i]).abs() < 1e-15);
        }
    }

    fn symmetric_model() -> (ModelParams, Vec<EmbeddedCase>) {
        let mut shape = ModelShape::new(3, 2, 4);
        shape.agent_hidden = alloc::vec![5];
        shape.fusion_hidden = alloc::vec![5];
        let mut params = ModelParams::init(shape, &mut stream_rng(1, Stream::Init)).unwrap();
        let head = params.agent_heads[0].clone();
        for h in &mut params.agent_heads {
            *h = head.clone();
        }
        let x = alloc::vec![0.3, -0.2, 0.9, 0.1];
        let batch = (0..3)
            .map(|j| EmbeddedCase {
                id: format!("{j}"),
                partitions: alloc::vec![x.clone(); 3],
                global: alloc::vec![0.1 * j as f64, 0.0, 0.2, -0.4],
                labels: alloc::vec![(j % 2) as f64, 1.0],
            })
            .collect();
        (params, batch)
    }

    #[test]
    fn symmetric_agents_have_equal_rewards_and_zero_advantage() {
        let (params, batch) = symmetric_model();
        let (r, a) = rewards_and_advantage(&params, &batch).unwrap();
        for k in 0..2 {
            assert_eq!(r.0.get(0, k), r.0.get(1, k));
            assert_eq!(r.0.get(1, k), r.0.get(2, k));
        }
        assert!(a.advantage.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rewards_match_direct_coalition_predictions() {
        let mut shape = ModelShape::new(3, 2, 4);
        shape.agent_hidden = alloc::vec![4];
        shape.fusion_hidden = alloc::vec![4];
        let params = ModelParams::init(shape, &mut stream_rng(2, Stream::Init)).unwrap();
        let mut rng = stream_rng(2, Stream::Synth);
        let batch: Vec<EmbeddedCase> = (0..4)
            .map(|j| EmbeddedCase {
                id: format!("{j}"),
                partitions: (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                global: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                labels: alloc::vec![(j % 2) as f64, ((j / 2) % 2) as f64],
            })
            .collect();
        let (r, _) = rewards_and_advantage(&params, &batch).unwrap();
        let mean_loss = |mask: &CoalitionMask, k: usize| -> f64 {
            batch
                .iter()
                .map(|c| {
                    let y = crate::model::predict_coalition(&params, c, mask).unwrap();
                    crate::ops::bce_with_logits(&y, &c.labels).unwrap().0[k]
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        for i in 0..3 {
            for k in 0..2 {
                let expected = mean_loss(&CoalitionMask::without(3, i), k) - mean_loss(&CoalitionMask::full(3), k);
                assert!((r.0.get(i, k) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn policy_gradient_examples() {
        let w = crate::ops::softmax_flat(&Matrix::zeros(5, 8));
        let zero = Matrix::zeros(5, 8);
        assert_eq!(policy_gradient_loss(&w, &zero).unwrap(), 0.0);
        assert!(policy_gradient_weight_grad(&w, &zero).unwrap().as_slice().iter().all(|g| *g == 0.0));
        let mut a = Matrix::zeros(5, 8);
        a.set(2, 3, 1.0);
        let loss = policy_gradient_loss(&w, &a).unwrap();
        assert!((loss - 3.688_879_454_113_936).abs() < 1e-12);
    }

    #[test]
    fn negative_advantage_pushes_logit_down() {
        let logits = Matrix::from_vec(2, 2, alloc::vec![0.1, -0.3, 0.2, 0.0]).unwrap();
        let a = Matrix::from_vec(2, 2, alloc::vec![-0.5, 0.2, 0.1, 0.2]).unwrap();
        let loss = |z: &[f64]| {
            let w = crate::ops::softmax_flat(&Matrix::from_vec(2, 2, z.to_vec()).unwrap());
            policy_gradient_loss(&w, &a).unwrap()
        };
        let w = crate::ops::softmax_flat(&logits);
        let dw = policy_gradient_weight_grad(&w, &a).unwrap();
        let analytic = crate::ops::softmax_backward(w.as_slice(), dw.as_slice());
        let err = crate::fd::fd_check(loss, logits.as_slice(), &analytic, 1e-6).unwrap();
        assert!(err < 1e-6);
        // gradient descent on a positive derivative lowers the logit
        assert!(analytic[0] > 0.0);
    }

    #[test]
    fn budget_formula() {
        assert_eq!(sample_budget(2).unwrap(), 2);
        assert_eq!(sample_budget(4).unwrap(), 4);
        assert_eq!(sample_budget(5).unwrap(), 6);
        assert_eq!(sample_budget(8).unwrap(), 16);
        assert!(sample_budget(0).is_err());
    }

    #[test]
    fn ema_examples() {
        let mut state = ShapleyState::new(0.0, 4).unwrap();
        let p = Matrix::from_vec(1, 2, alloc::vec![0.3, 0.7]).unwrap();
        state.ema_update(Matrix::from_vec(1, 2, alloc::vec![0.9, 0.1]).unwrap()).unwrap();
        state.ema_update(p.clone()).unwrap();
        assert_eq!(state.ema.as_ref().unwrap(), &p);

        let mut state = ShapleyState::new(0.9, 4).unwrap();
        state.ema_update(Matrix::from_vec(1, 2, alloc::vec![1.0, 0.0]).unwrap()).unwrap();
        state.ema_update(Matrix::from_vec(1, 2, alloc::vec![0.0, 1.0]).unwrap()).unwrap();
        let ema = state.ema.unwrap();
        assert!((ema.get(0, 0) - 0.9).abs() < 1e-15);
        assert!((ema.get(0, 1) - 0.1).abs() < 1e-15);
        assert!(ShapleyState::new(1.0, 4).is_err());
    }

    #[test]
    fn ema_converges_geometrically() {
        let beta = 0.5;
        let mut state = ShapleyState::new(beta, 4).unwrap();
        let start = Matrix::from_vec(1, 2, alloc::vec![1.0, 0.0]).unwrap();
        let target = Matrix::from_vec(1, 2, alloc::vec![0.25, 0.75]).unwrap();
        state.ema_update(start).unwrap();
        for t in 1..=10 {
            state.ema_update(target.clone()).unwrap();
            let gap = (state.ema.as_ref().unwrap().get(0, 0) - 0.25).abs();
            assert!((gap - 0.75 * libm::pow(beta, t as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_examples() {
        let w = Matrix::from_vec(1, 2, alloc::vec![0.5, 0.5]).unwrap();
        let phi = Matrix::from_vec(1, 2, alloc::vec![0.25, 0.75]).unwrap();
        let expected = 0.5 * libm::log(2.0) + 0.5 * libm::log(2.0 / 3.0);
        assert!((kl_loss(&w, &phi).unwrap() - expected).abs() < 1e-7);
        assert!((kl_loss(&w, &phi).unwrap() - 0.1438).abs() < 1e-4);
        assert!(kl_loss(&phi, &phi).unwrap().abs() < 1e-6);
    }

    #[test]
    fn kl_gradient_matches_fd() {
        let logits = [0.4, -0.1, 0.0, 0.9, -1.0, 0.3];
        let phi = normalize_to_simplex(&Matrix::from_vec(2, 3, alloc::vec![0.0, 0.2, 0.1, 0.4, 0.05, 0.3]).unwrap());
        let loss = |z: &[f64]| {
            let w = crate::ops::softmax_flat(&Matrix::from_vec(2, 3, z.to_vec()).unwrap());
            kl_loss(&w, &phi).unwrap()
        };
        let w = crate::ops::softmax_flat(&Matrix::from_vec(2, 3, logits.to_vec()).unwrap());
        let analytic = crate::ops::softmax_backward(w.as_slice(), kl_weight_grad(&w, &phi).unwrap().as_slice());
        assert!(crate::fd::fd_check(loss, &logits, &analytic, 1e-6).unwrap() < 1e-6);
    }

    #[test]
    fn mc_normalizes_and_falls_back_to_uniform() {
        let flat = GameTable::from_fn(3, 2, |_| alloc::vec![0.5, 0.5]).unwrap();
        let phi = shapley_mc(&flat, 10, &mut stream_rng(0, Stream::Shapley)).unwrap();
        assert!(phi.as_slice().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
        let phi = shapley_mc(&two_agent_table(), 10, &mut stream_rng(0, Stream::Shapley)).unwrap();
        assert!((phi.sum() - 1.0).abs() < 1e-12);
        assert!(shapley_mc(&two_agent_table(), 0, &mut stream_rng(0, Stream::Shapley)).is_err());
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let (params, batch) = symmetric_model();
        let game = BatchGame::new(&params, &batch).unwrap();
        let a = shapley_mc(&game, 20, &mut stream_rng(3, Stream::Shapley)).unwrap();
        let b = shapley_mc(&game, 20, &mut stream_rng(3, Stream::Shapley)).unwrap();
        assert_eq!(a, b);
    }
}
