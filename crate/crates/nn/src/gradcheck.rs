use crate::error::NnError;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Finite-difference settings.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// Denominator floor in the relative error, so entries near zero are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(tensor, flat index)` of the worst entry.
    pub worst: (usize, usize),
}

impl GradCheck {
    /// Compares tape gradients of `loss` against central differences for every
    /// entry of every tensor in `params`. `loss` must rebuild the whole
    /// computation from the parameter variables it is given.
    pub fn run<F, E>(&self, params: &[Tensor], mut loss: F) -> std::result::Result<GradCheckReport, E>
    where
        F: FnMut(&mut Graph, &[Var]) -> std::result::Result<Var, E>,
        E: From<NnError>,
    {
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
        let out = loss(&mut g, &vars)?;
        let grads = g.backward(out)?;
        let analytic: Vec<Tensor> = vars
            .iter()
            .zip(params)
            .map(|(v, p)| grads.get_or_zeros(*v, p))
            .collect();

        let mut eval = |ps: &[Tensor]| -> std::result::Result<f64, E> {
            let mut g = Graph::new();
            let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
            let out = loss(&mut g, &vars)?;
            Ok(g.value(out).item())
        };

        let mut work = params.to_vec();
        let mut report = GradCheckReport {
            entries: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: (0, 0),
        };
        for k in 0..work.len() {
            for i in 0..work[k].len() {
                let orig = work[k].data()[i];
                work[k].data_mut()[i] = orig + self.step;
                let up = eval(&work)?;
                work[k].data_mut()[i] = orig - self.step;
                let down = eval(&work)?;
                work[k].data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * self.step);
                let a = analytic[k].data()[i];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(self.floor);
                report.entries += 1;
                report.max_abs_error = report.max_abs_error.max(abs);
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = (k, i);
                }
            }
        }
        Ok(report)
    }
}
