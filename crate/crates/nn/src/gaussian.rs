use crate::error::{NnError, Result};
use crate::graph::{log1m_tanh2, Graph, Var};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian squashed through `bound * tanh`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquashedGaussian {
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub bound: f64,
}

impl Default for SquashedGaussian {
    fn default() -> Self {
        SquashedGaussian {
            log_std_min: -20.0,
            log_std_max: 2.0,
            bound: 1.0,
        }
    }
}

/// Output of [`SquashedGaussian::rsample`]. `log_prob` is `B x 1`.
#[derive(Clone, Copy, Debug)]
pub struct Sample {
    pub action: Var,
    pub pre: Var,
    pub log_prob: Var,
}

impl SquashedGaussian {
    pub fn with_bound(bound: f64) -> Self {
        SquashedGaussian {
            bound,
            ..Self::default()
        }
    }

    /// Splits a `B x 2d` network output into mean and clamped log-std.
    pub fn split(&self, g: &mut Graph, out: Var) -> Result<(Var, Var)> {
        let cols = g.value(out).cols();
        if cols % 2 != 0 {
            return Err(NnError::Shape {
                op: "squashed gaussian",
                detail: format!("head needs an even width, got {cols}"),
            });
        }
        let d = cols / 2;
        let mean = g.slice_cols(out, 0, d)?;
        let raw = g.slice_cols(out, d, cols)?;
        let log_std = g.clamp(raw, self.log_std_min, self.log_std_max);
        Ok((mean, log_std))
    }

    /// Reparameterized sample: `pre = mean + exp(log_std) * noise`,
    /// `action = bound * tanh(pre)`.
    pub fn rsample(&self, g: &mut Graph, mean: Var, log_std: Var, noise: Var) -> Result<Sample> {
        let std = g.exp(log_std);
        let scaled = g.mul(std, noise)?;
        let pre = g.add(mean, scaled)?;
        let t = g.tanh(pre);
        let action = g.scale(t, self.bound);

        let eps_sq = g.square(noise);
        let half = g.scale(eps_sq, -0.5);
        let base = g.sub(half, log_std)?;
        let base = g.add_scalar(base, -HALF_LN_2PI);
        let correction = self.log_abs_jacobian(g, pre);
        let per_dim = g.sub(base, correction)?;
        let log_prob = g.sum_cols(per_dim);
        Ok(Sample {
            action,
            pre,
            log_prob,
        })
    }

    /// Elementwise `log(bound * (1 - tanh(pre)^2))`.
    pub fn log_abs_jacobian(&self, g: &mut Graph, pre: Var) -> Var {
        let l = g.log1m_tanh2(pre);
        g.add_scalar(l, self.bound.ln())
    }

    /// Inverse of the squashing map, with the argument pulled inside the open box.
    pub fn unsquash(&self, action: f64) -> f64 {
        let u = (action / self.bound).clamp(-1.0 + 1e-9, 1.0 - 1e-9);
        u.atanh()
    }

    /// Log-density of `action` under the head with the given parameters.
    pub fn log_density(&self, mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
        let mut total = 0.0;
        for ((m, ls), a) in mean.iter().zip(log_std).zip(action) {
            let ls = ls.clamp(self.log_std_min, self.log_std_max);
            let pre = self.unsquash(*a);
            let z = (pre - m) * (-ls).exp();
            total += -0.5 * z * z - ls - HALF_LN_2PI - (self.bound.ln() + log1m_tanh2(pre));
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn mode_sample_closed_form() {
        let head = SquashedGaussian::with_bound(2.0);
        let mut g = Graph::new();
        let mean = g.param(Tensor::zeros(1, 2));
        let log_std = g.param(Tensor::from_rows(&[vec![-0.3, 0.4]]));
        let noise = g.constant(Tensor::zeros(1, 2));
        let s = head.rsample(&mut g, mean, log_std, noise).unwrap();
        assert!(g.value(s.action).data().iter().all(|a| *a == 0.0));
        let expected = 2.0 * (-HALF_LN_2PI) - (-0.3 + 0.4) - 2.0 * 2f64.ln();
        assert!((g.value(s.log_prob).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn split_clamps_log_std() {
        let head = SquashedGaussian::default();
        let mut g = Graph::new();
        let out = g.param(Tensor::from_rows(&[vec![0.5, 7.0], vec![-0.5, -40.0]]));
        let (m, ls) = head.split(&mut g, out).unwrap();
        assert_eq!(g.value(m).data(), &[0.5, -0.5]);
        assert_eq!(g.value(ls).data(), &[2.0, -20.0]);
    }

    #[test]
    fn graph_and_scalar_densities_agree() {
        let head = SquashedGaussian::with_bound(1.5);
        let mut g = Graph::new();
        let mean = g.param(Tensor::from_rows(&[vec![0.2, -0.7]]));
        let log_std = g.param(Tensor::from_rows(&[vec![-0.5, 0.1]]));
        let noise = g.constant(Tensor::from_rows(&[vec![0.3, -1.1]]));
        let s = head.rsample(&mut g, mean, log_std, noise).unwrap();
        let a = g.value(s.action).row(0).to_vec();
        let direct = head.log_density(&[0.2, -0.7], &[-0.5, 0.1], &a);
        assert!((direct - g.value(s.log_prob).item()).abs() < 1e-7);
    }
}
