//! Discrete diffusion over joint action tensors with a uniform corruption
//! kernel: schedules, forward marginals, posteriors, reverse sampling and
//! the generative losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seed::derive_seed;
use crate::error::{Error, Result};
use crate::grid::{Action, Instance, NUM_ACTIONS};

const C: usize = NUM_ACTIONS;
const PROB_FLOOR: f64 = 1e-12;
const ALPHA_FLOOR: f64 = 0.001;

/// Weight of the KL term in the generative loss.
pub const LAMBDA_KL: f64 = 0.02;

pub type Kernel = [[f64; C]; C];
pub type Row = [f64; C];

/// `N x T x C` tensor of per-(agent, timestep) action distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionTensor {
    agents: usize,
    horizon: usize,
    data: Vec<f64>,
}

impl ActionTensor {
    pub fn zeros(agents: usize, horizon: usize) -> Self {
        Self {
            agents,
            horizon,
            data: vec![0.0; agents * horizon * C],
        }
    }

    pub fn uniform(agents: usize, horizon: usize) -> Self {
        Self {
            agents,
            horizon,
            data: vec![1.0 / C as f64; agents * horizon * C],
        }
    }

    pub fn from_data(agents: usize, horizon: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != agents * horizon * C {
            return Err(Error::Shape(format!(
                "expected {} values for {agents}x{horizon}x{C}, got {}",
                agents * horizon * C,
                data.len()
            )));
        }
        Ok(Self { agents, horizon, data })
    }

    /// One-hot tensor from per-agent action index sequences of equal length.
    pub fn one_hot(indices: &[Vec<usize>]) -> Result<Self> {
        let horizon = indices.first().map_or(0, Vec::len);
        let mut out = Self::zeros(indices.len(), horizon);
        for (a, seq) in indices.iter().enumerate() {
            if seq.len() != horizon {
                return Err(Error::Shape("ragged action sequences".into()));
            }
            for (t, &i) in seq.iter().enumerate() {
                if i >= C {
                    return Err(Error::Shape(format!("action index {i} out of range")));
                }
                out.row_mut(a, t)[i] = 1.0;
            }
        }
        Ok(out)
    }

    pub fn from_actions(actions: &[Vec<Action>]) -> Result<Self> {
        let indices: Vec<Vec<usize>> = actions
            .iter()
            .map(|seq| seq.iter().map(|a| a.index()).collect())
            .collect();
        Self::one_hot(&indices)
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, agent: usize, t: usize) -> &[f64] {
        let o = (agent * self.horizon + t) * C;
        &self.data[o..o + C]
    }

    pub fn row_mut(&mut self, agent: usize, t: usize) -> &mut [f64] {
        let o = (agent * self.horizon + t) * C;
        &mut self.data[o..o + C]
    }

    pub fn row_array(&self, agent: usize, t: usize) -> Row {
        let mut r = [0.0; C];
        r.copy_from_slice(self.row(agent, t));
        r
    }

    /// Index of the largest entry per row, ties to the lowest index.
    pub fn argmax_indices(&self) -> Vec<Vec<usize>> {
        (0..self.agents)
            .map(|a| (0..self.horizon).map(|t| argmax(self.row(a, t))).collect())
            .collect()
    }

    pub fn argmax_actions(&self) -> Vec<Vec<Action>> {
        self.argmax_indices()
            .into_iter()
            .map(|seq| {
                seq.into_iter()
                    .map(|i| Action::from_index(i).expect("index below C"))
                    .collect()
            })
            .collect()
    }

    /// Reorders agents so that output agent `i` is input agent `perm[i]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(perm.len(), self.horizon);
        let block = self.horizon * C;
        for (i, &src) in perm.iter().enumerate() {
            out.data[i * block..(i + 1) * block].copy_from_slice(&self.data[src * block..(src + 1) * block]);
        }
        out
    }

    /// Every row is non-negative and sums to one within `1e-9`.
    pub fn check_distribution(&self) -> Result<()> {
        for (i, row) in self.data.chunks(C).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Diffusion(format!(
                    "row {i} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

/// Per-step retention `alpha_k` and cumulative `alpha_bar_k` for
/// `k = 0..=K` (with `alpha_bar_0 = 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Cosine schedule with offset `s = 0.008`; per-step ratios are clipped
    /// to `[0.001, 1]` and the cumulative products recomputed from them.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Diffusion("schedule needs at least one step".into()));
        }
        let s = 0.008;
        let f = |k: usize| {
            let x = ((k as f64 / steps as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let bars: Vec<f64> = (0..=steps).map(|k| f(k) / f0).collect();
        let alphas = (1..=steps)
            .map(|k| (bars[k] / bars[k - 1]).clamp(ALPHA_FLOOR, 1.0))
            .collect();
        Self::from_alphas(alphas)
    }

    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Diffusion("schedule needs at least one step".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::Diffusion(format!("alpha {a} outside (0, 1]")));
        }
        let mut alpha_bars = Vec::with_capacity(alphas.len() + 1);
        alpha_bars.push(1.0);
        for a in &alphas {
            alpha_bars.push(alpha_bars.last().unwrap() * a);
        }
        Ok(Self { alphas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    /// `alpha_k` for `1 <= k <= K`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k]
    }

    fn check_step(&self, k: usize, min: usize) -> Result<()> {
        if k < min || k > self.steps() {
            return Err(Error::Diffusion(format!(
                "step {k} outside {min}..={}",
                self.steps()
            )));
        }
        Ok(())
    }
}

/// `alpha * I + (1 - alpha) / C * J`.
pub fn transition_matrix(alpha: f64) -> Kernel {
    let off = (1.0 - alpha) / C as f64;
    let mut q = [[off; C]; C];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] += alpha;
    }
    q
}

/// Closed-form `k`-step kernel.
pub fn cumulative_matrix(schedule: &DiffusionSchedule, k: usize) -> Result<Kernel> {
    schedule.check_step(k, 0)?;
    Ok(transition_matrix(schedule.alpha_bar(k)))
}

pub fn matmul(a: &Kernel, b: &Kernel) -> Kernel {
    let mut out = [[0.0; C]; C];
    for i in 0..C {
        for j in 0..C {
            out[i][j] = (0..C).map(|m| a[i][m] * b[m][j]).sum();
        }
    }
    out
}

/// Distribution of `x_k` given clean action `x0`.
pub fn forward_marginal(x0: usize, k: usize, schedule: &DiffusionSchedule) -> Result<Row> {
    Ok(cumulative_matrix(schedule, k)?[x0])
}

/// `q(x_{k-1} | x_k, x_0)`.
pub fn posterior(xk: usize, x0: usize, k: usize, schedule: &DiffusionSchedule) -> Result<Row> {
    schedule.check_step(k, 1)?;
    let step = transition_matrix(schedule.alpha(k));
    let prev = transition_matrix(schedule.alpha_bar(k - 1));
    let mut row = [0.0; C];
    for c in 0..C {
        row[c] = step[c][xk] * prev[x0][c];
    }
    normalize(row)
}

/// Reverse kernel `p(x_{k-1} | x_k)` proportional to
/// `sum_x0 q(x_{k-1}, x_k | x0) * x0_probs[x0]`.
pub fn reverse_distribution(xk: usize, x0_probs: &[f64], k: usize, schedule: &DiffusionSchedule) -> Result<Row> {
    schedule.check_step(k, 1)?;
    let step = transition_matrix(schedule.alpha(k));
    let prev = transition_matrix(schedule.alpha_bar(k - 1));
    let mut row = [0.0; C];
    for c in 0..C {
        let from_clean: f64 = (0..C).map(|x0| prev[x0][c] * x0_probs[x0]).sum();
        row[c] = step[c][xk] * from_clean;
    }
    normalize(row)
}

fn normalize(mut row: Row) -> Result<Row> {
    let z: f64 = row.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Diffusion("zero normalizer".into()));
    }
    for p in &mut row {
        *p /= z;
    }
    Ok(row)
}

/// Independent random stream for one tensor row at one diffusion step.
pub fn row_rng(seed: u64, agent: usize, t: usize, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[agent as u64, t as u64, k as u64]))
}

pub fn sample_categorical<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * row.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples `x_k ~ q(x_k | x_0)` row by row.
pub fn forward_sample(x0: &ActionTensor, k: usize, schedule: &DiffusionSchedule, seed: u64) -> Result<ActionTensor> {
    schedule.check_step(k, 0)?;
    let kernel = cumulative_matrix(schedule, k)?;
    let mut out = ActionTensor::zeros(x0.agents, x0.horizon);
    for a in 0..x0.agents {
        for t in 0..x0.horizon {
            let clean = argmax(x0.row(a, t));
            let pick = if k == 0 {
                clean
            } else {
                sample_categorical(&kernel[clean], &mut row_rng(seed, a, t, k))
            };
            out.row_mut(a, t)[pick] = 1.0;
        }
    }
    Ok(out)
}

/// Samples `x_{k-1}` from the reverse kernel built from `x0_probs`.
pub fn reverse_step(
    xk: &ActionTensor,
    x0_probs: &ActionTensor,
    k: usize,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<ActionTensor> {
    if (xk.agents, xk.horizon) != (x0_probs.agents, x0_probs.horizon) {
        return Err(Error::Shape("x_k and x0 prediction differ in shape".into()));
    }
    let mut out = ActionTensor::zeros(xk.agents, xk.horizon);
    for a in 0..xk.agents {
        for t in 0..xk.horizon {
            let dist = reverse_distribution(argmax(xk.row(a, t)), x0_probs.row(a, t), k, schedule)?;
            let pick = sample_categorical(&dist, &mut row_rng(seed, a, t, k));
            out.row_mut(a, t)[pick] = 1.0;
        }
    }
    Ok(out)
}

/// Predicts clean-action distributions from a noisy tensor.
pub trait Predictor {
    fn predict(
        &self,
        instance: &Instance,
        xk: &ActionTensor,
        k: usize,
        schedule: &DiffusionSchedule,
    ) -> Result<ActionTensor>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(
        &self,
        instance: &Instance,
        xk: &ActionTensor,
        k: usize,
        schedule: &DiffusionSchedule,
    ) -> Result<ActionTensor> {
        (**self).predict(instance, xk, k, schedule)
    }
}

/// Runs the reverse chain from uniform noise and returns the argmax of the
/// final clean-state prediction as a one-hot draft.
pub fn sample<P: Predictor + ?Sized>(
    predictor: &P,
    instance: &Instance,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<ActionTensor> {
    let (n, horizon) = (instance.num_agents(), instance.horizon());
    let top = schedule.steps();
    let mut xk = ActionTensor::zeros(n, horizon);
    for a in 0..n {
        for t in 0..horizon {
            let pick = row_rng(seed, a, t, top + 1).random_range(0..C);
            xk.row_mut(a, t)[pick] = 1.0;
        }
    }
    let mut last = None;
    for k in (1..=top).rev() {
        let x0_probs = predictor.predict(instance, &xk, k, schedule)?;
        if (x0_probs.agents, x0_probs.horizon) != (n, horizon) {
            return Err(Error::Shape("predictor output has the wrong shape".into()));
        }
        if k > 1 {
            xk = reverse_step(&xk, &x0_probs, k, schedule, seed)?;
        }
        last = Some(x0_probs);
    }
    let last = last.expect("at least one step");
    ActionTensor::one_hot(&last.argmax_indices())
}

/// Mean KL between analytic posteriors and the reverse kernel induced by
/// `x0_probs`, over all rows.
pub fn kl_divergence_rows(
    x0: &ActionTensor,
    xk: &ActionTensor,
    x0_probs: &ActionTensor,
    k: usize,
    schedule: &DiffusionSchedule,
) -> Result<f64> {
    let rows = x0.agents * x0.horizon;
    if rows == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for a in 0..x0.agents {
        for t in 0..x0.horizon {
            let xk_i = argmax(xk.row(a, t));
            let q = posterior(xk_i, argmax(x0.row(a, t)), k, schedule)?;
            let p = reverse_distribution(xk_i, x0_probs.row(a, t), k, schedule)?;
            total += kl(&q, &p);
        }
    }
    Ok(total / rows as f64)
}

pub fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * (qi / pi.max(PROB_FLOOR)).ln())
        .sum()
}

/// Samples `x_k` from `x0` and scores the predictor's induced reverse kernel.
pub fn kl_loss<P: Predictor + ?Sized>(
    x0: &ActionTensor,
    k: usize,
    predictor: &P,
    instance: &Instance,
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<f64> {
    schedule.check_step(k, 1)?;
    let xk = forward_sample(x0, k, schedule, seed)?;
    let probs = predictor.predict(instance, &xk, k, schedule)?;
    kl_divergence_rows(x0, &xk, &probs, k, schedule)
}

/// Mean token cross-entropy of clean-action predictions.
pub fn aux_loss(x0: &ActionTensor, x0_probs: &ActionTensor) -> Result<f64> {
    if (x0.agents, x0.horizon) != (x0_probs.agents, x0_probs.horizon) {
        return Err(Error::Shape("target and prediction differ in shape".into()));
    }
    let rows = x0.agents * x0.horizon;
    if rows == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for a in 0..x0.agents {
        for t in 0..x0.horizon {
            let truth = argmax(x0.row(a, t));
            total -= x0_probs.row(a, t)[truth].max(PROB_FLOOR).ln();
        }
    }
    Ok(total / rows as f64)
}

pub fn generative_loss(aux: f64, kl: f64) -> f64 {
    aux + LAMBDA_KL * kl
}
