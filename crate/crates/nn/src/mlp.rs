use rand::Rng;

use crate::error::{NnError, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Fully connected network with rectified-linear hidden layers and a linear
/// output layer. Parameters are stored as `[W0, b0, W1, b1, ...]` with
/// `Wk` of shape `in x out` and `bk` of shape `1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<Tensor>,
}

impl Mlp {
    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::build(sizes, |fan_in, _| {
            let r = 1.0 / (fan_in as f64).sqrt();
            rng.random_range(-r..r)
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, |_, _| 0.0)
    }

    fn build(sizes: &[usize], mut init: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape {
                op: "mlp",
                detail: format!("invalid layer sizes {sizes:?}"),
            });
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            params.push(Tensor::from_fn(fan_in, fan_out, |_, _| init(fan_in, fan_out)));
            params.push(Tensor::from_fn(1, fan_out, |_, _| init(fan_in, fan_out)));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    /// Rebuilds a network from checkpointed parameters.
    pub fn from_params(sizes: &[usize], params: Vec<Tensor>) -> Result<Self> {
        let template = Self::zeros(sizes)?;
        let ok = params.len() == template.params.len()
            && params.iter().zip(&template.params).all(|(a, b)| a.shape() == b.shape());
        if !ok {
            return Err(NnError::Shape {
                op: "mlp",
                detail: format!("parameters do not match layer sizes {sizes:?}"),
            });
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Places parameters on the tape as differentiable leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        BoundMlp {
            vars: self.params.iter().map(|p| g.param(p.clone())).collect(),
        }
    }

    /// Places parameters on the tape as constants.
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundMlp {
        BoundMlp {
            vars: self.params.iter().map(|p| g.constant(p.clone())).collect(),
        }
    }

    /// Forward pass without recording a tape.
    pub fn forward_values(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_width() {
            return Err(NnError::Shape {
                op: "mlp forward",
                detail: format!("input width {} != {}", x.cols(), self.input_width()),
            });
        }
        let n_layers = self.params.len() / 2;
        let mut h = x.clone();
        for k in 0..n_layers {
            let (w, b) = (&self.params[2 * k], &self.params[2 * k + 1]);
            let mut z = h.matmul(w);
            let cols = z.cols();
            for (i, v) in z.data_mut().iter_mut().enumerate() {
                *v += b.data()[i % cols];
                if k + 1 < n_layers && *v < 0.0 {
                    *v = 0.0;
                }
            }
            h = z;
        }
        Ok(h)
    }
}

/// An [`Mlp`] whose parameters live on a particular graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    vars: Vec<Var>,
}

impl BoundMlp {
    /// Wraps parameter variables laid out as `[W0, b0, W1, b1, ...]`.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        BoundMlp { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let n_layers = self.vars.len() / 2;
        let expected = g.value(self.vars[0]).rows();
        if g.value(x).cols() != expected {
            return Err(NnError::Shape {
                op: "mlp forward",
                detail: format!("input width {} != {expected}", g.value(x).cols()),
            });
        }
        let mut h = x;
        for k in 0..n_layers {
            let z = g.matmul(h, self.vars[2 * k])?;
            let z = g.add_row(z, self.vars[2 * k + 1])?;
            h = if k + 1 < n_layers { g.relu(z) } else { z };
        }
        Ok(h)
    }

    /// Parameter gradients in storage order; zeros where the loss did not reach.
    pub fn grads(&self, g: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|v| grads.get_or_zeros(*v, g.value(*v)))
            .collect()
    }
}
