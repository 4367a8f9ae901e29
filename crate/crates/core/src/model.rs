//! Forward path: per-agent heads, masked decision-matrix aggregation and the
//! global mixture, plus the matching reverse pass.
//!
//! Coalition masks zero out excluded agents' aggregation terms without
//! renormalizing `W`. The global stream is never masked.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::ParamSet;
use crate::mlp::{Activation, MlpParams, MlpTape};
use crate::ops::{order_free_sum, softmax, softmax_backward, softmax_flat};
use crate::tensor::Shape;
use crate::{Error, Matrix, Result};

/// Sizes and hidden widths of every head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Number of partition agents `N`.
    pub agents: usize,
    /// Number of classes `C`.
    pub classes: usize,
    /// Embedding width `D`.
    pub dim: usize,
    /// Hidden widths of every agent head and the global head.
    pub agent_hidden: Vec<usize>,
    /// Hidden widths of the fusion head.
    pub fusion_hidden: Vec<usize>,
}

impl ModelShape {
    pub fn new(agents: usize, classes: usize, dim: usize) -> Self {
        ModelShape {
            agents,
            classes,
            dim,
            agent_hidden: alloc::vec![64],
            fusion_hidden: alloc::vec![32],
        }
    }

    fn head_widths(&self) -> Vec<usize> {
        let mut w = alloc::vec![self.dim];
        w.extend_from_slice(&self.agent_hidden);
        w.push(self.classes);
        w
    }

    fn fusion_widths(&self) -> Vec<usize> {
        let mut w = alloc::vec![self.classes];
        w.extend_from_slice(&self.fusion_hidden);
        w.push(self.classes);
        w
    }

    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::Config(format!(
                "model needs C > 0 and D > 0, got C = {}, D = {}",
                self.classes, self.dim
            )));
        }
        Ok(())
    }
}

/// Every learnable quantity of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: ModelShape,
    /// One head per partition, `R^D -> R^C`.
    pub agent_heads: Vec<MlpParams>,
    /// Head on the global payload, `R^D -> R^C`.
    pub global_head: MlpParams,
    /// Unconstrained `N x C` logits; `W = softmax_flat(decision_logits)`.
    pub decision_logits: Matrix,
    /// Logits of the `(aggregate, global)` mixture weights.
    pub mixture_logits: [f64; 2],
    /// Final projection `R^C -> R^C`.
    pub fusion_head: MlpParams,
}

impl ModelParams {
    /// Seeded initialization: heads in agent order, then the global head, then
    /// the fusion head. Decision and mixture logits start at zero (uniform).
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let head = shape.head_widths();
        let agent_heads = (0..shape.agents)
            .map(|_| MlpParams::glorot(&head, Activation::Relu, rng))
            .collect::<Result<Vec<_>>>()?;
        let global_head = MlpParams::glorot(&head, Activation::Relu, rng)?;
        let fusion_head = MlpParams::glorot(&shape.fusion_widths(), Activation::Relu, rng)?;
        Ok(ModelParams {
            decision_logits: Matrix::zeros(shape.agents, shape.classes),
            mixture_logits: [0.0, 0.0],
            agent_heads,
            global_head,
            fusion_head,
            shape,
        })
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let head = shape.head_widths();
        Ok(ModelParams {
            agent_heads: (0..shape.agents)
                .map(|_| MlpParams::zeros(&head, Activation::Relu))
                .collect::<Result<Vec<_>>>()?,
            global_head: MlpParams::zeros(&head, Activation::Relu)?,
            fusion_head: MlpParams::zeros(&shape.fusion_widths(), Activation::Relu)?,
            decision_logits: Matrix::zeros(shape.agents, shape.classes),
            mixture_logits: [0.0, 0.0],
            shape,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            shape: self.shape.clone(),
            agent_heads: self.agent_heads.iter().map(MlpParams::zeros_like).collect(),
            global_head: self.global_head.zeros_like(),
            decision_logits: Matrix::zeros(self.decision_logits.rows(), self.decision_logits.cols()),
            mixture_logits: [0.0, 0.0],
            fusion_head: self.fusion_head.zeros_like(),
        }
    }

    pub fn agents(&self) -> usize {
        self.shape.agents
    }

    pub fn classes(&self) -> usize {
        self.shape.classes
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    /// The agent-decision matrix `W` on the `N x C` simplex.
    pub fn decision_weights(&self) -> Matrix {
        softmax_flat(&self.decision_logits)
    }

    /// `(w_A, w_G)`, positive and summing to one.
    pub fn mixture_weights(&self) -> (f64, f64) {
        let p = softmax(&self.mixture_logits);
        (p[0], p[1])
    }

    /// Checks internal consistency, naming the first offending block.
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let head = self.shape.head_widths();
        if self.agent_heads.len() != self.shape.agents {
            return Err(Error::shape("agent heads", self.shape.agents, self.agent_heads.len()));
        }
        for (i, h) in self.agent_heads.iter().enumerate() {
            if h.widths() != head.as_slice() {
                return Err(Error::shape("agent head widths", format!("{head:?}"), format!("{:?} (agent {i})", h.widths())));
            }
        }
        if self.global_head.widths() != head.as_slice() {
            return Err(Error::shape("global head widths", format!("{head:?}"), format!("{:?}", self.global_head.widths())));
        }
        let fusion = self.shape.fusion_widths();
        if self.fusion_head.widths() != fusion.as_slice() {
            return Err(Error::shape("fusion head widths", format!("{fusion:?}"), format!("{:?}", self.fusion_head.widths())));
        }
        self.decision_logits
            .ensure_shape("decision logits", Shape(self.shape.agents, self.shape.classes))
    }

    /// Names of the parameter blocks in [`ParamSet`] order, for diagnostics.
    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut head = |prefix: String, mlp: &MlpParams| {
            for l in 0..mlp.layers().len() {
                names.push(format!("{prefix}.layer{l}.weights"));
                names.push(format!("{prefix}.layer{l}.bias"));
            }
        };
        for (i, h) in self.agent_heads.iter().enumerate() {
            head(format!("agent{i}"), h);
        }
        head("global".into(), &self.global_head);
        head("fusion".into(), &self.fusion_head);
        names.push("decision_logits".into());
        names.push("mixture_logits".into());
        names
    }
}

impl ParamSet for ModelParams {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for h in &self.agent_heads {
            out.extend(h.blocks());
        }
        out.extend(self.global_head.blocks());
        out.extend(self.fusion_head.blocks());
        out.push(self.decision_logits.as_slice());
        out.push(&self.mixture_logits[..]);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for h in &mut self.agent_heads {
            out.extend(h.blocks_mut());
        }
        out.extend(self.global_head.blocks_mut());
        out.extend(self.fusion_head.blocks_mut());
        out.push(self.decision_logits.as_mut_slice());
        out.push(&mut self.mixture_logits[..]);
        out
    }
}

/// Which agents take part in a coalition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoalitionMask(Vec<bool>);

impl CoalitionMask {
    pub fn full(agents: usize) -> Self {
        CoalitionMask(alloc::vec![true; agents])
    }

    pub fn empty(agents: usize) -> Self {
        CoalitionMask(alloc::vec![false; agents])
    }

    /// Every agent except `excluded`.
    pub fn without(agents: usize, excluded: usize) -> Self {
        let mut m = Self::full(agents);
        m.0[excluded] = false;
        m
    }

    /// Bit `i` of `bits` set means agent `i` is included.
    pub fn from_bits(agents: usize, bits: u64) -> Self {
        CoalitionMask((0..agents).map(|i| bits >> i & 1 == 1).collect())
    }

    pub fn from_vec(included: Vec<bool>) -> Self {
        CoalitionMask(included)
    }

    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &inc)| acc | (u64::from(inc) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn includes(&self, agent: usize) -> bool {
        self.0[agent]
    }

    pub fn insert(&mut self, agent: usize) {
        self.0[agent] = true;
    }

    pub fn remove(&mut self, agent: usize) {
        self.0[agent] = false;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// One case after embedding: `N` partition vectors, the global vector and
/// binary labels stored as `0.0`/`1.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedCase {
    pub id: String,
    pub partitions: Vec<Vec<f64>>,
    pub global: Vec<f64>,
    pub labels: Vec<f64>,
}

impl EmbeddedCase {
    fn check(&self, params: &ModelParams) -> Result<()> {
        // A centralized model (N = 0) ignores whatever partitions the case has.
        if params.agents() > 0 && self.partitions.len() != params.agents() {
            return Err(Error::shape("case partitions", params.agents(), self.partitions.len()));
        }
        if self.labels.len() != params.classes() {
            return Err(Error::shape("case labels", params.classes(), self.labels.len()));
        }
        Ok(())
    }
}

/// Agent logits `h` (`N x C`) and the global head output for one case. These
/// do not depend on the coalition, so coalition sweeps compute them once.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutputs {
    pub agent_logits: Matrix,
    pub global_logits: Vec<f64>,
}

/// `h_i = f_i(x_i)` for every agent, with tapes for the reverse pass.
pub fn agent_forward<'a>(
    params: &'a ModelParams,
    embeddings: &[Vec<f64>],
) -> Result<(Matrix, Vec<MlpTape<'a>>)> {
    if embeddings.len() != params.agents() {
        return Err(Error::shape("agent_forward embeddings", params.agents(), embeddings.len()));
    }
    let mut h = Matrix::zeros(params.agents(), params.classes());
    let mut tapes = Vec::with_capacity(params.agents());
    for (i, (head, x)) in params.agent_heads.iter().zip(embeddings).enumerate() {
        let (out, tape) = head.forward(x)?;
        h.row_mut(i).copy_from_slice(&out);
        tapes.push(tape);
    }
    Ok((h, tapes))
}

/// `z_k = sum_{i in mask} W_ik * h_ik`, summed with [`order_free_sum`] so
/// that relabeling agents leaves every coalition value bit-identical.
/// Excluded agents contribute exactly zero and `W` is not renormalized.
pub fn aggregate(h: &Matrix, w: &Matrix, mask: &CoalitionMask) -> Result<Vec<f64>> {
    w.ensure_shape("aggregate W", h.shape())?;
    if mask.len() != h.rows() {
        return Err(Error::shape("aggregate mask", h.rows(), mask.len()));
    }
    let members: Vec<usize> = (0..h.rows()).filter(|&i| mask.includes(i)).collect();
    let mut terms = Vec::with_capacity(members.len());
    let z = (0..h.cols())
        .map(|k| {
            terms.clear();
            terms.extend(members.iter().map(|&i| w.get(i, k) * h.get(i, k)));
            order_free_sum(&mut terms)
        })
        .collect();
    Ok(z)
}

/// `y = fusion(w_A * z_A + w_G * global_head(x_global))`.
pub fn global_mix(params: &ModelParams, z_a: &[f64], global_embedding: &[f64]) -> Result<Vec<f64>> {
    let g = params.global_head.predict(global_embedding)?;
    mix(params, params.mixture_weights(), z_a, &g)
}

fn mix(params: &ModelParams, (w_a, w_g): (f64, f64), z_a: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if z_a.len() != params.classes() {
        return Err(Error::shape("global_mix z_A", params.classes(), z_a.len()));
    }
    let u: Vec<f64> = z_a.iter().zip(g).map(|(z, g)| w_a * z + w_g * g).collect();
    params.fusion_head.predict(&u)
}

/// Agent and global head outputs for one case.
pub fn stream_outputs(params: &ModelParams, case: &EmbeddedCase) -> Result<StreamOutputs> {
    case.check(params)?;
    let mut agent_logits = Matrix::zeros(params.agents(), params.classes());
    for (i, head) in params.agent_heads.iter().enumerate() {
        agent_logits
            .row_mut(i)
            .copy_from_slice(&head.predict(&case.partitions[i])?);
    }
    Ok(StreamOutputs {
        agent_logits,
        global_logits: params.global_head.predict(&case.global)?,
    })
}

/// Prediction for a coalition from precomputed streams. `w` and `mixture`
/// are passed in so sweeps evaluate the softmaxes once.
pub fn predict_from_streams(
    params: &ModelParams,
    streams: &StreamOutputs,
    w: &Matrix,
    mixture: (f64, f64),
    mask: &CoalitionMask,
) -> Result<Vec<f64>> {
    let z = aggregate(&streams.agent_logits, w, mask)?;
    mix(params, mixture, &z, &streams.global_logits)
}

/// `agent_forward -> aggregate(mask) -> global_mix`. The global stream is
/// always present; the full mask gives the deployment prediction.
pub fn predict_coalition(params: &ModelParams, case: &EmbeddedCase, mask: &CoalitionMask) -> Result<Vec<f64>> {
    let streams = stream_outputs(params, case)?;
    predict_from_streams(params, &streams, &params.decision_weights(), params.mixture_weights(), mask)
}

/// Full-coalition prediction.
pub fn predict(params: &ModelParams, case: &EmbeddedCase) -> Result<Vec<f64>> {
    predict_coalition(params, case, &CoalitionMask::full(params.agents()))
}

/// Data-centralized baseline: a model configured with zero agents, reading
/// only the global (concatenated) embedding.
pub fn centralized_forward(params: &ModelParams, global_embedding: &[f64]) -> Result<Vec<f64>> {
    if params.agents() != 0 {
        return Err(Error::Config(format!(
            "centralized model must have zero agents, has {}",
            params.agents()
        )));
    }
    global_mix(params, &alloc::vec![0.0; params.classes()], global_embedding)
}

/// Gradient accumulator. Head gradients live in `params`; the decision and
/// mixture gradients are kept with respect to the *probabilities* `W` and
/// `(w_A, w_G)` until [`Gradients::finish`] maps them to logits.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub d_weights: Matrix,
    pub d_mixture: [f64; 2],
}

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Gradients {
            params: params.zeros_like(),
            d_weights: Matrix::zeros(params.agents(), params.classes()),
            d_mixture: [0.0, 0.0],
        }
    }

    /// Pulls the probability-space gradients back through both softmaxes and
    /// returns a gradient shaped like the parameters.
    pub fn finish(mut self, w: &Matrix, mixture: (f64, f64)) -> ModelParams {
        let d_logits = softmax_backward(w.as_slice(), self.d_weights.as_slice());
        self.params
            .decision_logits
            .as_mut_slice()
            .iter_mut()
            .zip(&d_logits)
            .for_each(|(g, d)| *g += d);
        let d_mix = softmax_backward(&[mixture.0, mixture.1], &self.d_mixture);
        self.params.mixture_logits[0] += d_mix[0];
        self.params.mixture_logits[1] += d_mix[1];
        self.params
    }
}

/// Everything recorded by a full-coalition forward pass over one case.
pub struct CaseForward<'a> {
    pub logits: Vec<f64>,
    pub agent_logits: Matrix,
    agent_tapes: Vec<MlpTape<'a>>,
    global_logits: Vec<f64>,
    global_tape: MlpTape<'a>,
    aggregated: Vec<f64>,
    fusion_tape: MlpTape<'a>,
}

/// Full-coalition forward pass with tapes. `w` and `mixture` must be the
/// current `decision_weights()` and `mixture_weights()`.
pub fn forward_case<'a>(
    params: &'a ModelParams,
    case: &EmbeddedCase,
    w: &Matrix,
    mixture: (f64, f64),
) -> Result<CaseForward<'a>> {
    case.check(params)?;
    let partitions: &[Vec<f64>] = if params.agents() == 0 { &[] } else { &case.partitions };
    let (agent_logits, agent_tapes) = agent_forward(params, partitions)?;
    let aggregated = aggregate(&agent_logits, w, &CoalitionMask::full(params.agents()))?;
    let (global_logits, global_tape) = params.global_head.forward(&case.global)?;
    let u: Vec<f64> = aggregated
        .iter()
        .zip(&global_logits)
        .map(|(z, g)| mixture.0 * z + mixture.1 * g)
        .collect();
    let (logits, fusion_tape) = params.fusion_head.forward(&u)?;
    Ok(CaseForward {
        logits,
        agent_logits,
        agent_tapes,
        global_logits,
        global_tape,
        aggregated,
        fusion_tape,
    })
}

impl CaseForward<'_> {
    /// Accumulates `d loss / d params` given `d loss / d logits`.
    pub fn backward(
        &self,
        grad_logits: &[f64],
        w: &Matrix,
        mixture: (f64, f64),
        acc: &mut Gradients,
    ) -> Result<()> {
        let du = self.fusion_tape.backward_into(grad_logits, &mut acc.params.fusion_head)?;
        let mut dz = Vec::with_capacity(du.len());
        let mut dg = Vec::with_capacity(du.len());
        for k in 0..du.len() {
            acc.d_mixture[0] += du[k] * self.aggregated[k];
            acc.d_mixture[1] += du[k] * self.global_logits[k];
            dz.push(mixture.0 * du[k]);
            dg.push(mixture.1 * du[k]);
        }
        self.global_tape.backward_into(&dg, &mut acc.params.global_head)?;
        let classes = dz.len();
        for (i, tape) in self.agent_tapes.iter().enumerate() {
            let mut dh = Vec::with_capacity(classes);
            for (k, &dzk) in dz.iter().enumerate() {
                acc.d_weights.add_at(i, k, dzk * self.agent_logits.get(i, k));
                dh.push(dzk * w.get(i, k));
            }
            tape.backward_into(&dh, &mut acc.params.agent_heads[i])?;
        }
        Ok(())
    }
}
