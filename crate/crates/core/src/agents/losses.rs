//! Bootstrap targets and the per-minibatch losses for critics and policies.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{PolicyHead, TwinCritic};
use crate::cem::QFunction;
use crate::config::AgentConfig;
use crate::envs::EndKind;
use crate::error::{Error, Result};
use crate::nn::{concat_columns, Adam, DenseNet, Gradients};
use crate::replay::Batch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSettings {
    pub discount: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub smoothing: bool,
    pub twin: bool,
    pub bootstrap_time_limit: bool,
}

impl From<&AgentConfig> for BootstrapSettings {
    fn from(c: &AgentConfig) -> Self {
        BootstrapSettings {
            discount: c.discount,
            policy_noise: c.policy_noise,
            noise_clip: c.noise_clip,
            smoothing: c.target_smoothing,
            twin: c.twin_critics,
            bootstrap_time_limit: c.bootstrap_time_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub q1: f64,
    /// `None` when the second critic is disabled.
    pub q2: Option<f64>,
}

/// `q* = r + γ·v′` except after terminal transitions, where `q* = r`.
/// Time-limit cuts bootstrap unless `bootstrap_time_limit` is off.
pub fn bootstrap_targets(
    rewards: ArrayView1<f64>,
    ends: &[EndKind],
    next_values: ArrayView1<f64>,
    discount: f64,
    bootstrap_time_limit: bool,
) -> Array1<f64> {
    rewards
        .iter()
        .zip(ends)
        .zip(next_values)
        .map(|((&r, &end), &v)| {
            let bootstraps = match end {
                EndKind::NotDone => true,
                EndKind::TimeLimit => bootstrap_time_limit,
                EndKind::Terminal => false,
            };
            if bootstraps {
                r + discount * v
            } else {
                r
            }
        })
        .collect()
}

/// Adds `clip(N(0, noise²), ±clip)` to every entry, then clips to `[-1, 1]`.
pub fn smooth_actions<R: Rng + ?Sized>(actions: &mut Array2<f64>, noise: f64, clip: f64, rng: &mut R) {
    if noise <= 0.0 {
        return;
    }
    let dist = Normal::new(0.0, noise).expect("noise scale is finite");
    actions.mapv_inplace(|a| {
        let eps: f64 = dist.sample(rng);
        (a + eps.clamp(-clip, clip)).clamp(-1.0, 1.0)
    });
}

/// `min(Q1′, Q2′)` at the given actions, or `Q1′` alone without twins.
pub fn target_values(
    critic: &TwinCritic,
    next_states: ArrayView2<f64>,
    next_actions: ArrayView2<f64>,
    twin: bool,
) -> Result<Array1<f64>> {
    let v1 = critic.q1_target.q_values(next_states, next_actions)?;
    if !twin {
        return Ok(v1);
    }
    let v2 = critic.q2_target.q_values(next_states, next_actions)?;
    // f64::min would hide a NaN from one critic
    Ok(v1
        .iter()
        .zip(&v2)
        .map(|(&a, &b)| if a.is_nan() || b.is_nan() { f64::NAN } else { a.min(b) })
        .collect())
}

/// Bootstrap regression targets for a minibatch. `target_action_fn` picks
/// the next-state actions (CEM over `Q1′` or a target policy network);
/// smoothing noise is applied on top when enabled.
pub fn bellman_target<F, R>(
    batch: &Batch,
    critic: &TwinCritic,
    mut target_action_fn: F,
    settings: &BootstrapSettings,
    rng: &mut R,
) -> Result<Array1<f64>>
where
    F: FnMut(&TwinCritic, ArrayView2<f64>) -> Result<Array2<f64>>,
    R: Rng + ?Sized,
{
    let mut next_actions = target_action_fn(critic, batch.next_states.view())?;
    if settings.smoothing {
        smooth_actions(&mut next_actions, settings.policy_noise, settings.noise_clip, rng);
    }
    let values = target_values(
        critic,
        batch.next_states.view(),
        next_actions.view(),
        settings.twin,
    )?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "target Q value {} for next state {} at action {}",
            values[i],
            batch.next_states.row(i),
            next_actions.row(i)
        )));
    }
    Ok(bootstrap_targets(
        batch.rewards.view(),
        &batch.ends,
        values.view(),
        settings.discount,
        settings.bootstrap_time_limit,
    ))
}

/// Gradient of `mean((Q(s, a) − q*)²)` and the loss itself.
pub fn critic_loss_gradients(
    net: &DenseNet,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    q_star: ArrayView1<f64>,
) -> Result<(Gradients, f64)> {
    let input = concat_columns(states, actions)?;
    let tape = net.forward_tape(input.view())?;
    let pred = tape.output().column(0);
    let b = pred.len() as f64;
    let diff = &pred - &q_star;
    let loss = diff.mapv(|d| d * d).sum() / b;
    let upstream = (diff * (2.0 / b)).insert_axis(Axis(1));
    let back = net.backward(&tape, upstream.view())?;
    Ok((back.grads, loss))
}

/// One Adam step on `mean((Q(s, a) − q*)²)`; returns the pre-update loss.
pub fn fit_critic(
    net: &mut DenseNet,
    opt: &mut Adam,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    q_star: ArrayView1<f64>,
) -> Result<f64> {
    let (grads, loss) = critic_loss_gradients(net, states, actions, q_star)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("critic loss {loss}")));
    }
    opt.step(net, &grads)?;
    Ok(loss)
}

/// Computes shared targets and regresses each live critic onto them.
pub fn critic_update<F, R>(
    batch: &Batch,
    critic: &mut TwinCritic,
    target_action_fn: F,
    settings: &BootstrapSettings,
    rng: &mut R,
) -> Result<CriticLosses>
where
    F: FnMut(&TwinCritic, ArrayView2<f64>) -> Result<Array2<f64>>,
    R: Rng + ?Sized,
{
    let q_star = bellman_target(batch, critic, target_action_fn, settings, rng)?;
    let (s, a) = (batch.states.view(), batch.actions.view());
    let q1 = fit_critic(&mut critic.q1, &mut critic.opt1, s, a, q_star.view())?;
    let q2 = if settings.twin {
        Some(fit_critic(&mut critic.q2, &mut critic.opt2, s, a, q_star.view())?)
    } else {
        None
    };
    Ok(CriticLosses { q1, q2 })
}

/// L2 regression of the policy onto fixed CEM actions:
/// `mean_i ‖π(s_i) − a_i‖²`.
pub fn cgp_policy_update(
    states: ArrayView2<f64>,
    policy: &mut PolicyHead,
    cem_actions: ArrayView2<f64>,
) -> Result<f64> {
    let tape = policy.net.forward_tape(states)?;
    if tape.output().dim() != cem_actions.dim() {
        return Err(Error::Shape(format!(
            "policy emits {:?}, targets are {:?}",
            tape.output().dim(),
            cem_actions.dim()
        )));
    }
    let b = states.nrows() as f64;
    let diff = tape.output() - &cem_actions;
    let loss = diff.mapv(|d| d * d).sum() / b;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("policy loss {loss}")));
    }
    let upstream = diff * (2.0 / b);
    let back = policy.net.backward(&tape, upstream.view())?;
    policy.opt.step(&mut policy.net, &back.grads)?;
    Ok(loss)
}

/// A critic that can report `∂Q/∂a` alongside `Q`.
pub trait ActionGradient {
    /// Values `[B]` and action gradients `[B × d]` at row-aligned inputs.
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)>;
}

impl ActionGradient for DenseNet {
    fn value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        let input = concat_columns(states, actions)?;
        let tape = self.forward_tape(input.view())?;
        let ones = Array2::ones((states.nrows(), 1));
        let back = self.backward(&tape, ones.view())?;
        let grad = back.input_grad.slice(s![.., states.ncols()..]).to_owned();
        Ok((tape.output().column(0).to_owned(), grad))
    }
}

/// Deterministic policy gradient: one step on `−mean_i Q(s_i, π(s_i))`,
/// backpropagating through the critic's action input. The critic is only
/// read.
pub fn qgp_policy_update<C: ActionGradient + ?Sized>(
    states: ArrayView2<f64>,
    policy: &mut PolicyHead,
    critic: &C,
) -> Result<f64> {
    let (grads, loss) = qgp_gradients(states, &policy.net, critic)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("policy loss {loss}")));
    }
    policy.opt.step(&mut policy.net, &grads)?;
    Ok(loss)
}

/// Gradient of `−mean_i Q(s_i, π(s_i))` with respect to the policy
/// parameters, and the loss itself.
pub fn qgp_gradients<C: ActionGradient + ?Sized>(
    states: ArrayView2<f64>,
    policy: &DenseNet,
    critic: &C,
) -> Result<(Gradients, f64)> {
    let b = states.nrows() as f64;
    let pi_tape = policy.forward_tape(states)?;
    let (values, action_grad) = critic.value_and_action_grad(states, pi_tape.output().view())?;
    let loss = -values.sum() / b;
    let upstream = action_grad * (-1.0 / b);
    let pi_back = policy.backward(&pi_tape, upstream.view())?;
    Ok((pi_back.grads, loss))
}
