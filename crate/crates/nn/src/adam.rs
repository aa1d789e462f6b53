use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 3e-4;

    pub fn new(params: &[Tensor], lr: f64) -> Self {
        let zeros = |p: &Tensor| Tensor::zeros(p.rows(), p.cols());
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Applies one update. Non-finite or mis-shaped gradients leave both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape {
                op: "adam",
                detail: format!(
                    "{} params, {} grads, {} slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[k].shape() || g.shape() != p.shape() {
                return Err(NnError::Shape {
                    op: "adam",
                    detail: format!("slot {k}: param {:?}, grad {:?}", p.shape(), g.shape()),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NonFinite {
                    what: format!("gradient in parameter slot {k}"),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            for i in 0..gd.len() {
                let gi = gd[i];
                let mi = &mut m.data_mut()[i];
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = m.data()[i] / c1;
                let v_hat = v.data()[i] / c2;
                pd[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![Tensor::from_rows(&[vec![1.0, -2.0]])];
        let before = p.clone();
        let mut opt = Adam::new(&p, 1e-2);
        for _ in 0..10 {
            opt.step(&mut p, &[Tensor::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(opt.steps(), 10);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = vec![Tensor::scalar(0.0), Tensor::scalar(0.0)];
        let mut opt = Adam::new(&p, Adam::DEFAULT_LR);
        let g = [Tensor::scalar(0.5), Tensor::scalar(-2.0)];
        for _ in 0..100 {
            opt.step(&mut p, &g).unwrap();
        }
        assert!(p[0].item() < 0.0);
        assert!(p[1].item() > 0.0);
        // bias correction makes each early step close to lr in magnitude
        assert!((p[0].item() + 100.0 * Adam::DEFAULT_LR).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut opt = Adam::new(&p, 0.1);
        let err = opt.step(&mut p, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(matches!(err, NnError::NonFinite { .. }));
        assert_eq!(p[0].item(), 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
