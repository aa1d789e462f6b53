//! Differentiable objectives. Each function records onto a caller-owned
//! [`Graph`], so gradients flow only into networks bound with
//! [`Mlp::bind`]; networks bound with [`Mlp::bind_frozen`] act as constants.

use mireg_nn::{BoundMlp, Graph, Mlp, Sample, SquashedGaussian, Tensor, Var};

use crate::error::{AgentError, Result};

/// Minibatch of transitions stacked row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    /// `B x 1`, unscaled environment rewards.
    pub rewards: Tensor,
    pub next_states: Tensor,
    /// `B x 1`, 1.0 where the episode ended.
    pub dones: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }
}

/// Reference density inside the regularizer.
#[derive(Clone, Copy, Debug)]
pub enum Prior<'a> {
    /// Uniform on the head's action box.
    Uniform,
    /// Latent-mixture marginal evaluated with the given `N x d` latent draws.
    Marginal { net: &'a BoundMlp, latent: &'a Tensor },
}

/// Regression targets `beta r + gamma (1 - done) V_target(s')`.
pub fn q_targets(v_target: &Mlp, batch: &Batch, beta: f64, gamma: f64) -> Result<Tensor> {
    let next_v = v_target.forward_values(&batch.next_states)?;
    Ok(Tensor::from_fn(batch.len(), 1, |i, _| {
        beta * batch.rewards.get(i, 0) + gamma * (1.0 - batch.dones.get(i, 0)) * next_v.get(i, 0)
    }))
}

fn mse(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let sq = g.square(d);
    Ok(g.mean_all(sq))
}

fn q_value(g: &mut Graph, q: &BoundMlp, states: Var, actions: Var) -> Result<Var> {
    let sa = g.concat_cols(states, actions)?;
    Ok(q.forward(g, sa)?)
}

/// Twin-critic loss, averaged over the batch and over both critics.
pub fn critic_q_loss(
    g: &mut Graph,
    q1: &BoundMlp,
    q2: &BoundMlp,
    v_target: &Mlp,
    batch: &Batch,
    beta: f64,
    gamma: f64,
) -> Result<Var> {
    let y = q_targets(v_target, batch, beta, gamma)?;
    let s = g.constant(batch.states.clone());
    let a = g.constant(batch.actions.clone());
    let y = g.constant(y);
    let p1 = q_value(g, q1, s, a)?;
    let p2 = q_value(g, q2, s, a)?;
    let l1 = mse(g, p1, y)?;
    let l2 = mse(g, p2, y)?;
    let sum = g.add(l1, l2)?;
    Ok(g.scale(sum, 0.5))
}

/// Log-density (`B x 1`) of the squashed actions `head.bound * tanh(pre)`
/// under the latent mixture `(1/N) sum_n pi(a | u_n)`.
pub fn marginal_log_density(
    g: &mut Graph,
    net: &BoundMlp,
    head: &SquashedGaussian,
    pre: Var,
    latent: Var,
) -> Result<Var> {
    let n = g.value(latent).rows();
    let out = net.forward(g, latent)?;
    let (mean, log_std) = head.split(g, out)?;
    let pair = g.gauss_pair(pre, mean, log_std)?;
    let mix = g.lse_rows(pair);
    let mix = g.add_scalar(mix, -(n as f64).ln());
    let jac = head.log_abs_jacobian(g, pre);
    let jac = g.sum_cols(jac);
    Ok(g.sub(mix, jac)?)
}

/// Prior log-density (`B x 1`) at the actions produced from `pre`.
pub fn prior_log_density(
    g: &mut Graph,
    prior: Prior<'_>,
    head: &SquashedGaussian,
    pre: Var,
) -> Result<Var> {
    match prior {
        Prior::Uniform => {
            let (rows, d) = g.value(pre).shape();
            let c = -(d as f64) * (2.0 * head.bound).ln();
            Ok(g.constant(Tensor::full(rows, 1, c)))
        }
        Prior::Marginal { net, latent } => {
            let latent = g.constant(latent.clone());
            marginal_log_density(g, net, head, pre, latent)
        }
    }
}

/// Reparameterized policy sample for every state row.
pub fn sample_policy(
    g: &mut Graph,
    policy: &BoundMlp,
    head: &SquashedGaussian,
    states: Var,
    noise: &Tensor,
) -> Result<Sample> {
    let out = policy.forward(g, states)?;
    let (mean, log_std) = head.split(g, out)?;
    if g.value(mean).shape() != noise.shape() {
        return Err(AgentError::Shape(format!(
            "noise {:?} for policy output {:?}",
            noise.shape(),
            g.value(mean).shape()
        )));
    }
    let eps = g.constant(noise.clone());
    Ok(head.rsample(g, mean, log_std, eps)?)
}

/// Options shared by the value and actor objectives.
#[derive(Clone, Copy, Debug)]
pub struct SoftValueOptions {
    /// Weight on `log pi - log prior`; 1 when rewards carry the scale.
    pub penalty: f64,
    /// Differentiate the prior density through the sampled action.
    pub prior_gradient: bool,
}

impl Default for SoftValueOptions {
    fn default() -> Self {
        SoftValueOptions {
            penalty: 1.0,
            prior_gradient: true,
        }
    }
}

/// Per-state soft value `min(Q1, Q2)(s, a) - penalty (log pi(a|s) - log prior(a))`
/// at fresh policy actions (`B x 1`).
#[allow(clippy::too_many_arguments)]
pub fn soft_value(
    g: &mut Graph,
    policy: &BoundMlp,
    q1: &BoundMlp,
    q2: &BoundMlp,
    prior: Prior<'_>,
    head: &SquashedGaussian,
    states: &Tensor,
    noise: &Tensor,
    opts: SoftValueOptions,
) -> Result<Var> {
    let s = g.constant(states.clone());
    let sample = sample_policy(g, policy, head, s, noise)?;
    let qa = q_value(g, q1, s, sample.action)?;
    let qb = q_value(g, q2, s, sample.action)?;
    let q = g.min(qa, qb)?;
    let mut log_prior = prior_log_density(g, prior, head, sample.pre)?;
    if !opts.prior_gradient {
        log_prior = g.constant(g.value(log_prior).clone());
    }
    let ratio = g.sub(sample.log_prob, log_prior)?;
    let ratio = g.scale(ratio, opts.penalty);
    Ok(g.sub(q, ratio)?)
}

/// Negated mean soft value; minimized over the policy parameters.
#[allow(clippy::too_many_arguments)]
pub fn actor_loss(
    g: &mut Graph,
    policy: &BoundMlp,
    q1: &BoundMlp,
    q2: &BoundMlp,
    prior: Prior<'_>,
    head: &SquashedGaussian,
    states: &Tensor,
    noise: &Tensor,
    opts: SoftValueOptions,
) -> Result<Var> {
    let sv = soft_value(g, policy, q1, q2, prior, head, states, noise, opts)?;
    let m = g.mean_all(sv);
    Ok(g.neg(m))
}

/// Squared error of `V(s)` against precomputed soft-value targets.
pub fn critic_v_loss_from_targets(
    g: &mut Graph,
    v: &BoundMlp,
    states: &Tensor,
    targets: &Tensor,
) -> Result<Var> {
    let s = g.constant(states.clone());
    let pred = v.forward(g, s)?;
    let t = g.constant(targets.clone());
    mse(g, pred, t)
}

/// Value-critic loss with targets built from the soft value (held constant).
#[allow(clippy::too_many_arguments)]
pub fn critic_v_loss(
    g: &mut Graph,
    v: &BoundMlp,
    policy: &BoundMlp,
    q1: &BoundMlp,
    q2: &BoundMlp,
    prior: Prior<'_>,
    head: &SquashedGaussian,
    states: &Tensor,
    noise: &Tensor,
    opts: SoftValueOptions,
) -> Result<Var> {
    let sv = soft_value(g, policy, q1, q2, prior, head, states, noise, opts)?;
    let targets = g.value(sv).clone();
    critic_v_loss_from_targets(g, v, states, &targets)
}

/// Pre-squash coordinates of stored actions.
pub fn unsquash_actions(head: &SquashedGaussian, actions: &Tensor) -> Tensor {
    actions.map(|a| head.unsquash(a))
}

/// Negative mean log-likelihood of `actions` under the latent mixture.
pub fn marginal_nll(
    g: &mut Graph,
    net: &BoundMlp,
    head: &SquashedGaussian,
    actions: &Tensor,
    latent: &Tensor,
) -> Result<Var> {
    let pre = g.constant(unsquash_actions(head, actions));
    let latent = g.constant(latent.clone());
    let lp = marginal_log_density(g, net, head, pre, latent)?;
    let m = g.mean_all(lp);
    Ok(g.neg(m))
}

/// Mixture log-density estimates for each action row, without recording gradients.
pub fn estimate_marginal_log_density(
    net: &Mlp,
    head: &SquashedGaussian,
    actions: &Tensor,
    latent: &Tensor,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = net.bind_frozen(&mut g);
    let pre = g.constant(unsquash_actions(head, actions));
    let latent = g.constant(latent.clone());
    let lp = marginal_log_density(&mut g, &bound, head, pre, latent)?;
    Ok(g.value(lp).data().to_vec())
}
