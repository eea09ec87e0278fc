//! Conditional clean-state predictor over joint action tensors.
//!
//! Tokens are one per (agent, timestep). Each block applies, with adaptive
//! layer norm from the agent condition and a residual around every step:
//! temporal attention, sparse social attention, environment sensing and a
//! feed-forward layer. A layer norm and linear head give per-row logits.

pub mod attention;
pub mod condition;
pub mod env;
pub mod heuristic;
pub mod ops;
pub mod params;

use rayon::prelude::*;

pub use attention::{build_social_graph, neighbor_count, sparse_social_attention, temporal_attention};
pub use condition::{action_entropy, encode_condition, inferred_trajectory, Condition, EncodedCondition};
pub use env::{build_pyramid, env_sense, FeatureMap};
pub use heuristic::HeuristicPredictor;
pub use params::{DenoiserParams, Dims};

use crate::d3pm::{ActionTensor, DiffusionSchedule, Predictor};
use crate::error::{Error, Result};
use crate::grid::{Instance, NUM_ACTIONS};
use ops::{add_assign, gelu, layer_norm, silu, softmax_in_place};

/// `(1 + gamma) * LN(x) + beta` per token with the agent's modulation.
fn ada_norm(tokens: &[f64], horizon: usize, modulation: &[Vec<f64>], slot: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; tokens.len()];
    out.par_chunks_mut(dim)
        .zip(tokens.par_chunks(dim))
        .enumerate()
        .for_each(|(row, (dst, x))| {
            let m = &modulation[row / horizon];
            let gamma = &m[2 * slot * dim..(2 * slot + 1) * dim];
            let beta = &m[(2 * slot + 1) * dim..(2 * slot + 2) * dim];
            for (i, v) in layer_norm(x).into_iter().enumerate() {
                dst[i] = (1.0 + gamma[i]) * v + beta[i];
            }
        });
    out
}

/// Full forward pass. Returns per-row clean-action probabilities.
pub fn denoiser_forward(
    xk: &ActionTensor,
    instance: &Instance,
    step: usize,
    steps: usize,
    params: &DenoiserParams,
) -> Result<ActionTensor> {
    params.validate()?;
    let (n, horizon) = (xk.agents(), xk.horizon());
    if n != instance.num_agents() {
        return Err(Error::Shape(format!(
            "tensor has {n} agents, instance has {}",
            instance.num_agents()
        )));
    }
    if n == 0 || horizon == 0 {
        return Ok(ActionTensor::zeros(n, horizon));
    }
    let dims = *params.dims();
    let d = dims.hidden;
    let cond = Condition::from_instance(instance);
    let enc = encode_condition(&cond, step, params)?;

    let mut tokens = params.linear("embed.action")?.apply_rows(xk.data());
    for (row, tok) in tokens.chunks_mut(d).enumerate() {
        add_assign(tok, &enc.agent_residual(row / horizon));
    }

    let trajectory = inferred_trajectory(xk, &cond);
    let entropy = action_entropy(xk);
    let graph = build_social_graph(&trajectory, n, horizon, step, steps);
    let pyramid = build_pyramid(&cond, &enc.global, params)?;
    let agent_act: Vec<Vec<f64>> = enc.agents.iter().map(|c| c.iter().map(|&v| silu(v)).collect()).collect();

    for b in 0..dims.blocks {
        let prefix = format!("block{b}");
        let ada = params.linear(&format!("{prefix}.ada"))?;
        let modulation: Vec<Vec<f64>> = agent_act.iter().map(|c| ada.apply(c)).collect();

        let h = ada_norm(&tokens, horizon, &modulation, 0, d);
        add_assign(&mut tokens, &temporal_attention(&h, n, horizon, params, &format!("{prefix}.temporal"))?);

        let h = ada_norm(&tokens, horizon, &modulation, 1, d);
        let social = sparse_social_attention(&h, n, horizon, &trajectory, &graph, params, &format!("{prefix}.social"))?;
        add_assign(&mut tokens, &social);

        let h = ada_norm(&tokens, horizon, &modulation, 2, d);
        let sensed = env_sense(&h, &trajectory, &entropy, &pyramid, &enc.scale_gate, params, &format!("{prefix}.env"))?;
        add_assign(&mut tokens, &sensed);

        let h = ada_norm(&tokens, horizon, &modulation, 3, d);
        let hidden: Vec<f64> = params
            .linear(&format!("{prefix}.ffn.0"))?
            .apply_rows(&h)
            .into_iter()
            .map(gelu)
            .collect();
        add_assign(&mut tokens, &params.linear(&format!("{prefix}.ffn.1"))?.apply_rows(&hidden));
    }

    let normed: Vec<f64> = tokens.chunks(d).flat_map(layer_norm).collect();
    let mut logits = params.linear("head")?.apply_rows(&normed);
    for row in logits.chunks_mut(NUM_ACTIONS) {
        softmax_in_place(row);
    }
    ops::ensure_finite(&logits, "denoiser output")?;
    ActionTensor::from_data(n, horizon, logits)
}

/// Parameterized network usable as a diffusion predictor.
#[derive(Clone, Debug)]
pub struct Denoiser {
    params: DenoiserParams,
}

impl Denoiser {
    pub fn new(params: DenoiserParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &DenoiserParams {
        &self.params
    }
}

impl Predictor for Denoiser {
    fn predict(
        &self,
        instance: &Instance,
        xk: &ActionTensor,
        step: usize,
        schedule: &DiffusionSchedule,
    ) -> Result<ActionTensor> {
        denoiser_forward(xk, instance, step, schedule.steps(), &self.params)
    }
}
