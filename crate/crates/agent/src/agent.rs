use std::path::Path;

use mireg_nn::{checkpoint, Adam, Graph, Mlp, SquashedGaussian, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{MiracleConfig, PriorMode};
use crate::env::Transition;
use crate::error::{AgentError, Result};
use crate::losses::{self, Batch, Prior, SoftValueOptions};
use crate::replay::ReplayBuffer;

/// `target <- (1 - tau) target + tau source`, parameter by parameter.
pub fn target_update(target: &mut Mlp, source: &Mlp, tau: f64) {
    for (t, s) in target.params_mut().iter_mut().zip(source.params()) {
        for (x, y) in t.data_mut().iter_mut().zip(s.data()) {
            *x = (1.0 - tau) * *x + tau * y;
        }
    }
}

/// Standard-normal matrix.
pub fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Network with its optimizer.
#[derive(Clone, Debug)]
pub struct Trained {
    pub net: Mlp,
    pub opt: Adam,
}

impl Trained {
    fn new<R: Rng>(sizes: &[usize], lr: f64, rng: &mut R) -> Result<Self> {
        let net = Mlp::new(sizes, rng)?;
        let opt = Adam::new(net.params(), lr);
        Ok(Trained { net, opt })
    }

    fn apply(&mut self, grads: &[Tensor]) -> Result<()> {
        self.opt.step(self.net.params_mut(), grads)?;
        Ok(())
    }
}

/// Policy, twin Q-critics, value critic and its averaged target.
#[derive(Clone, Debug)]
pub struct AgentNetworks {
    pub policy: Trained,
    pub q1: Trained,
    pub q2: Trained,
    pub v: Trained,
    pub v_target: Mlp,
    pub head: SquashedGaussian,
}

impl AgentNetworks {
    pub fn new<R: Rng>(cfg: &MiracleConfig, state_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let lr = cfg.learning_rate;
        let policy = Trained::new(&layer_sizes(state_dim, &cfg.hidden, 2 * action_dim), lr, rng)?;
        let q_sizes = layer_sizes(state_dim + action_dim, &cfg.hidden, 1);
        let q1 = Trained::new(&q_sizes, lr, rng)?;
        let q2 = Trained::new(&q_sizes, lr, rng)?;
        let v = Trained::new(&layer_sizes(state_dim, &cfg.hidden, 1), lr, rng)?;
        let v_target = v.net.clone();
        let head = SquashedGaussian {
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
            bound: 1.0,
        };
        Ok(AgentNetworks {
            policy,
            q1,
            q2,
            v,
            v_target,
            head,
        })
    }

    /// Samples one action for `state` using the given standard-normal noise.
    pub fn act(&self, state: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let out = self.policy.net.forward_values(&Tensor::new(1, state.len(), state.to_vec()))?;
        let d = out.cols() / 2;
        Ok((0..d)
            .map(|j| {
                let ls = out.get(0, d + j).clamp(self.head.log_std_min, self.head.log_std_max);
                self.head.bound * (out.get(0, j) + ls.exp() * noise[j]).tanh()
            })
            .collect())
    }

    /// Deterministic action `bound * tanh(mean)`.
    pub fn act_mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.policy.net.forward_values(&Tensor::new(1, state.len(), state.to_vec()))?;
        let d = out.cols() / 2;
        Ok((0..d).map(|j| self.head.bound * out.get(0, j).tanh()).collect())
    }

    pub fn target_update(&mut self, tau: f64) {
        target_update(&mut self.v_target, &self.v.net, tau);
    }
}

/// State-independent action model `pi_chi(a | u)` with its own action buffer.
#[derive(Clone, Debug)]
pub struct MarginalPolicyModel {
    pub model: Trained,
    pub head: SquashedGaussian,
    pub buffer: ReplayBuffer<Vec<f64>>,
}

impl MarginalPolicyModel {
    pub fn new<R: Rng>(
        action_dim: usize,
        hidden: &[usize],
        head: SquashedGaussian,
        capacity: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(MarginalPolicyModel {
            model: Trained::new(&layer_sizes(action_dim, hidden, 2 * action_dim), lr, rng)?,
            head,
            buffer: ReplayBuffer::new(capacity),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.model.net.input_width()
    }

    /// Mixture log-density at each row of `actions`.
    pub fn log_density(&self, actions: &Tensor, latent: &Tensor) -> Result<Vec<f64>> {
        losses::estimate_marginal_log_density(&self.model.net, &self.head, actions, latent)
    }

    /// One maximum-likelihood step; returns the pre-step negative log-likelihood.
    pub fn fit_step(&mut self, actions: &Tensor, latent: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.model.net.bind(&mut g);
        let loss = losses::marginal_nll(&mut g, &bound, &self.head, actions, latent)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(AgentError::NonFinite { step: 0, loss: "marginal_nll" });
        }
        let grads = g.backward(loss)?;
        self.model.apply(&bound.grads(&g, &grads))?;
        Ok(value)
    }
}

/// Loss values recorded by one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub q_loss: f64,
    pub v_loss: f64,
    pub actor_loss: f64,
    pub marginal_nll: f64,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, cols: usize) -> Tensor {
    let data: Vec<f64> = rows.flatten().collect();
    Tensor::new(data.len() / cols.max(1), cols, data)
}

/// Independent random streams so that optional work never shifts the others.
#[derive(Clone, Debug)]
pub struct Streams {
    pub action: ChaCha8Rng,
    pub replay: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub marginal: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Streams {
            action: stream(2),
            replay: stream(3),
            noise: stream(4),
            marginal: stream(5),
        }
    }
}

/// Learner state: networks, buffers and random streams.
#[derive(Clone, Debug)]
pub struct Agent {
    pub cfg: MiracleConfig,
    pub nets: AgentNetworks,
    pub marginal: MarginalPolicyModel,
    pub replay: ReplayBuffer<Transition>,
    pub streams: Streams,
    state_dim: usize,
    action_dim: usize,
}

impl Agent {
    pub fn new(cfg: &MiracleConfig, state_dim: usize, action_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        init.set_stream(1);
        let nets = AgentNetworks::new(cfg, state_dim, action_dim, &mut init)?;
        let marginal = MarginalPolicyModel::new(
            action_dim,
            &cfg.marginal_hidden,
            nets.head,
            cfg.marginal_capacity(),
            cfg.learning_rate,
            &mut init,
        )?;
        Ok(Agent {
            cfg: cfg.clone(),
            nets,
            marginal,
            replay: ReplayBuffer::new(cfg.buffer_capacity),
            streams: Streams::new(cfg.seed),
            state_dim,
            action_dim,
        })
    }

    /// Uniform action during warm-up, policy sample afterwards.
    pub fn select_action(&mut self, state: &[f64], step: usize) -> Result<Vec<f64>> {
        if step < self.cfg.warmup_steps {
            Ok((0..self.action_dim)
                .map(|_| self.streams.action.random_range(-1.0..=1.0))
                .collect())
        } else {
            let noise: Vec<f64> = (0..self.action_dim)
                .map(|_| self.streams.action.sample(StandardNormal))
                .collect();
            self.nets.act(state, &noise)
        }
    }

    pub fn observe(&mut self, t: Transition) {
        self.marginal.buffer.push(t.action.clone());
        self.replay.push(t);
    }

    pub fn sample_batch(&mut self) -> Batch {
        let picks = self.replay.sample(&mut self.streams.replay, self.cfg.minibatch);
        let (sd, ad) = (self.state_dim, self.action_dim);
        Batch {
            states: stack(picks.iter().map(|t| t.state.clone()), sd),
            actions: stack(picks.iter().map(|t| t.action.clone()), ad),
            rewards: stack(picks.iter().map(|t| vec![t.reward]), 1),
            next_states: stack(picks.iter().map(|t| t.next_state.clone()), sd),
            dones: stack(picks.iter().map(|t| vec![f64::from(u8::from(t.done))]), 1),
        }
    }

    fn check(step: usize, loss: &'static str, value: f64) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(AgentError::NonFinite { step, loss })
        }
    }

    /// One gradient step on each objective followed by the target blend.
    pub fn update(&mut self, step: usize) -> Result<UpdateStats> {
        let cfg = self.cfg.clone();
        let batch = self.sample_batch();
        let mut stats = UpdateStats::default();

        // twin critics
        {
            let mut g = Graph::new();
            let b1 = self.nets.q1.net.bind(&mut g);
            let b2 = self.nets.q2.net.bind(&mut g);
            let loss = losses::critic_q_loss(
                &mut g,
                &b1,
                &b2,
                &self.nets.v_target,
                &batch,
                cfg.reward_scale,
                cfg.discount,
            )?;
            stats.q_loss = Self::check(step, "critic_q_loss", g.value(loss).item())?;
            let grads = g.backward(loss)?;
            let (g1, g2) = (b1.grads(&g, &grads), b2.grads(&g, &grads));
            self.apply(step, "critic_q_loss", |n| {
                n.q1.apply(&g1)?;
                n.q2.apply(&g2)
            })?;
        }

        // soft value at fresh actions drives both the value critic and the actor
        let noise = normal_tensor(&mut self.streams.noise, batch.len(), self.action_dim);
        let latent = normal_tensor(&mut self.streams.noise, cfg.marginal_samples, self.action_dim);
        let opts = SoftValueOptions {
            penalty: 1.0,
            prior_gradient: cfg.prior_gradient,
        };
        let mut g = Graph::new();
        let bp = self.nets.policy.net.bind(&mut g);
        let b1 = self.nets.q1.net.bind_frozen(&mut g);
        let b2 = self.nets.q2.net.bind_frozen(&mut g);
        let bm = self.marginal.model.net.bind_frozen(&mut g);
        let prior = match cfg.prior_mode {
            PriorMode::LearnedMarginal => Prior::Marginal {
                net: &bm,
                latent: &latent,
            },
            PriorMode::FixedUniform => Prior::Uniform,
        };
        let sv = losses::soft_value(
            &mut g,
            &bp,
            &b1,
            &b2,
            prior,
            &self.nets.head,
            &batch.states,
            &noise,
            opts,
        )?;
        let targets = g.value(sv).clone();
        let mean = g.mean_all(sv);
        let actor = g.neg(mean);
        stats.actor_loss = Self::check(step, "actor_loss", g.value(actor).item())?;
        let actor_grads = g.backward(actor)?;
        let pg = bp.grads(&g, &actor_grads);

        {
            let mut gv = Graph::new();
            let bv = self.nets.v.net.bind(&mut gv);
            let loss = losses::critic_v_loss_from_targets(&mut gv, &bv, &batch.states, &targets)?;
            stats.v_loss = Self::check(step, "critic_v_loss", gv.value(loss).item())?;
            let grads = gv.backward(loss)?;
            let vg = bv.grads(&gv, &grads);
            self.apply(step, "critic_v_loss", |n| n.v.apply(&vg))?;
        }
        self.apply(step, "actor_loss", |n| n.policy.apply(&pg))?;

        if cfg.prior_mode == PriorMode::LearnedMarginal {
            let n = cfg.minibatch.min(self.marginal.buffer.len());
            let picks = self.marginal.buffer.sample(&mut self.streams.marginal, n);
            let actions = stack(picks.into_iter().cloned(), self.action_dim);
            let latent = normal_tensor(&mut self.streams.marginal, cfg.marginal_samples, self.action_dim);
            stats.marginal_nll = self.marginal.fit_step(&actions, &latent).map_err(|e| match e {
                AgentError::NonFinite { loss, .. } => AgentError::NonFinite { step, loss },
                other => other,
            })?;
        }

        self.nets.target_update(cfg.target_rate);
        Ok(stats)
    }

    fn apply(
        &mut self,
        step: usize,
        loss: &'static str,
        f: impl FnOnce(&mut AgentNetworks) -> Result<()>,
    ) -> Result<()> {
        f(&mut self.nets).map_err(|e| match e {
            AgentError::Nn(mireg_nn::NnError::NonFinite { .. }) => AgentError::NonFinite { step, loss },
            other => other,
        })
    }

    /// Tensors in a fixed order: policy, q1, q2, v, v_target, marginal.
    pub fn checkpoint_tensors(&self) -> Vec<Tensor> {
        let n = &self.nets;
        [
            n.policy.net.params(),
            n.q1.net.params(),
            n.q2.net.params(),
            n.v.net.params(),
            n.v_target.params(),
            self.marginal.model.net.params(),
        ]
        .concat()
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.checkpoint_tensors())?;
        Ok(())
    }
}
