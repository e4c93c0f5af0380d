//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;

use crate::{Graph, Result, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Largest admissible relative error.
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
    /// Check at most this many elements per input (chosen uniformly, seeded).
    pub max_elements: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-6, tolerance: 1e-4, floor: 1e-6, max_elements: None, seed: 0 }
    }
}

/// Worst disagreement found for one input.
#[derive(Clone, Debug)]
pub struct InputReport {
    pub input: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.inputs.iter().map(|r| r.checked).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

/// Compares the reverse-mode gradient of `f` with central differences for
/// every input tensor. `f` must map the inputs to a scalar.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let analytic: Vec<Tensor<f64>> = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let loss = f(&g, &vars)?;
        let grads = g.backward(&loss)?;
        vars.iter().map(|v| grads.wrt(v)).collect()
    };

    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::no_grad();
        let vars: Vec<_> = vals.iter().map(|t| g.constant(t.clone())).collect();
        Ok(f(&g, &vars)?.value().item())
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let numel = input.numel();
        let indices: Vec<usize> = match cfg.max_elements {
            Some(m) if m < numel => {
                let mut v = sample(&mut rng, numel, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..numel).collect(),
        };
        let mut rep = InputReport { input: i, checked: 0, max_rel_err: 0.0, max_abs_err: 0.0, worst_index: 0 };
        for &j in &indices {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + cfg.step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - cfg.step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[i].data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(cfg.floor);
            if rel > rep.max_rel_err {
                rep.max_rel_err = rel;
                rep.worst_index = j;
            }
            rep.max_abs_err = rep.max_abs_err.max(abs);
            rep.checked += 1;
        }
        reports.push(rep);
    }
    Ok(GradCheckReport { inputs: reports, tolerance: cfg.tolerance })
}
