//! Finite-difference verification of the differentiable building blocks.
//!
//! Each [`GradCase`] draws its own random inputs from a seed and compares
//! reverse-mode gradients with central differences in 64-bit arithmetic.
//! Deformable offsets are drawn as an integer part in {-1, 0, 1} plus a
//! fractional part in [0.2, 0.8], so no sampling point sits on the pixel
//! lattice where bilinear interpolation has a kink. ReLU inputs are kept
//! away from zero in the same spirit.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdan_tensor::deform::{deformable_conv2d, OFFSET_CHANNELS};
use tdan_tensor::gradcheck::{check_gradients, GradCheckConfig, GradCheckReport, InputReport};
use tdan_tensor::ops::{concat_channels, conv2d, pixel_shuffle};
use tdan_tensor::{Graph, ParamStore, Scope, Shape, Tensor, Var};

use crate::layers::{residual_block, ResBlock};
use crate::losses::{l_align, l_sr};
use crate::{Error, Result};

/// Range of the fractional part of every tested offset.
pub const OFFSET_FRACTION: (f64, f64) = (0.2, 0.8);

/// Like [`check_gradients`], but the closure also reads parameters from
/// `store` through a [`Scope`]. Reports list the inputs first, then the
/// parameters in registry order.
pub fn check_scope_gradients<F>(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    cfg: &GradCheckConfig,
    f: F,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(Scope<'g, f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let mut analytic: Vec<Tensor<f64>> = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let loss = f(Scope::new(&g, store), &vars)?;
        let grads = g.backward(&loss)?;
        let out = vars.iter().map(|v| grads.wrt(v)).collect();
        let mut with_grads = store.clone();
        grads.write_params(&mut with_grads);
        let mut out: Vec<_> = out;
        out.extend(with_grads.ids().map(|id| with_grads.grad(id).cloned().expect("written above")));
        out
    };

    let mut work_inputs = inputs.to_vec();
    let mut work_store = store.clone();
    let ids: Vec<_> = store.ids().collect();
    let eval = |ins: &[Tensor<f64>], ps: &ParamStore<f64>| -> Result<f64> {
        let g = Graph::no_grad();
        let vars: Vec<_> = ins.iter().map(|t| g.constant(t.clone())).collect();
        Ok(f(Scope::new(&g, ps), &vars)?.value().item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(analytic.len());
    for (i, grad) in analytic.iter_mut().enumerate() {
        let numel = grad.numel();
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
            let mut probe = |delta: f64| -> Result<f64> {
                if i < inputs.len() {
                    let orig = inputs[i].data()[j];
                    work_inputs[i].data_mut()[j] = orig + delta;
                    let v = eval(&work_inputs, &work_store);
                    work_inputs[i].data_mut()[j] = orig;
                    v
                } else {
                    let id = ids[i - inputs.len()];
                    let orig = store.value(id).data()[j];
                    work_store.value_mut(id).data_mut()[j] = orig + delta;
                    let v = eval(&work_inputs, &work_store);
                    work_store.value_mut(id).data_mut()[j] = orig;
                    v
                }
            };
            let numeric = (probe(cfg.step)? - probe(-cfg.step)?) / (2.0 * cfg.step);
            let a = grad.data()[j];
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

/// Uniform values in `[-1, 1]`.
pub fn random_tensor(shape: impl Into<Shape>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(shape, -1.0, 1.0, rng)
}

/// Values with magnitude in `[0.1, 1]` and random sign.
pub fn away_from_zero(shape: impl Into<Shape>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let shape = shape.into();
    let data = (0..shape.numel())
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Offset field whose entries are `k + f`, `k` in {-1, 0, 1} and `f` in
/// [`OFFSET_FRACTION`].
pub fn fractional_offsets(n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let shape = Shape::new(n, OFFSET_CHANNELS, h, w);
    let (lo, hi) = OFFSET_FRACTION;
    let data = (0..shape.numel()).map(|_| rng.gen_range(-1i32..=1) as f64 + rng.gen_range(lo..=hi)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// A named finite-difference check over one operation.
pub trait GradCase: Send + Sync {
    fn name(&self) -> &str;
    /// Group used by module selection, `deform` or `tensor`.
    fn module(&self) -> &str;
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport>;
}

fn probe_of<'g>(y: &Var<'g, f64>, rng: &mut ChaCha8Rng) -> tdan_tensor::Result<Var<'g, f64>> {
    y.dot(&random_tensor(y.shape(), rng))
}

fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    let salt = name.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Seeded random scalar probe of the op output, recreated identically on
/// every evaluation.
fn probed<'g>(y: Var<'g, f64>, seed: u64) -> tdan_tensor::Result<Var<'g, f64>> {
    probe_of(&y, &mut ChaCha8Rng::seed_from_u64(seed))
}

struct DeformCase;

impl GradCase for DeformCase {
    fn name(&self) -> &str {
        "deformable_conv2d"
    }
    fn module(&self) -> &str {
        "deform"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let inputs = vec![
            random_tensor([2, 3, 5, 6], &mut r),
            fractional_offsets(2, 5, 6, &mut r),
            random_tensor([4, 3, 3, 3], &mut r),
            random_tensor([4, 1, 1, 1], &mut r),
        ];
        Ok(check_gradients(&inputs, cfg, |_, v| probed(deformable_conv2d(&v[0], &v[1], &v[2], Some(&v[3]))?, seed))?)
    }
}

struct Conv2dCase;

impl GradCase for Conv2dCase {
    fn name(&self) -> &str {
        "conv2d"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let inputs =
            vec![random_tensor([2, 3, 6, 5], &mut r), random_tensor([4, 3, 3, 3], &mut r), random_tensor([4, 1, 1, 1], &mut r)];
        Ok(check_gradients(&inputs, cfg, |_, v| probed(conv2d(&v[0], &v[1], Some(&v[2]), 1, 1)?, seed))?)
    }
}

struct ResidualBlockCase;

impl GradCase for ResidualBlockCase {
    fn name(&self) -> &str {
        "residual_block"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let mut store = ParamStore::new();
        let block = ResBlock::register(&mut store, "block", 4, &mut r)?;
        let x = random_tensor([2, 4, 5, 5], &mut r);
        check_scope_gradients(&store, &[x], cfg, |s, v| Ok(probed(residual_block(s, &v[0], &block)?, seed)?))
    }
}

struct ReluCase;

impl GradCase for ReluCase {
    fn name(&self) -> &str {
        "relu"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let x = away_from_zero([2, 3, 4, 4], &mut r);
        Ok(check_gradients(&[x], cfg, |_, v| probed(v[0].relu()?, seed))?)
    }
}

struct ConcatCase;

impl GradCase for ConcatCase {
    fn name(&self) -> &str {
        "concat_channels"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let inputs = vec![random_tensor([2, 2, 3, 4], &mut r), random_tensor([2, 3, 3, 4], &mut r)];
        Ok(check_gradients(&inputs, cfg, |_, v| probed(concat_channels(&[&v[0], &v[1]])?, seed))?)
    }
}

struct PixelShuffleCase;

impl GradCase for PixelShuffleCase {
    fn name(&self) -> &str {
        "pixel_shuffle"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let x = random_tensor([2, 8, 3, 4], &mut r);
        Ok(check_gradients(&[x], cfg, |_, v| probed(pixel_shuffle(&v[0], 2)?, seed))?)
    }
}

/// Pairs whose elementwise differences stay at least 0.1 away from the
/// absolute-value kink.
fn separated_pair(shape: [usize; 4], rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let a = random_tensor(shape, rng);
    let d = away_from_zero(shape, rng);
    let b = a.zip_map(&d, |x, y| x + y).expect("same shape");
    (a, b)
}

struct LAlignCase;

impl GradCase for LAlignCase {
    fn name(&self) -> &str {
        "l_align"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let (reference, a0) = separated_pair([2, 3, 4, 4], &mut r);
        let d = away_from_zero([2, 3, 4, 4], &mut r);
        let a1 = reference.zip_map(&d, |x, y| x + y)?;
        check_scope_gradients(&ParamStore::new(), &[reference, a0, a1], cfg, |_, v| {
            l_align(&[v[1].clone(), v[2].clone()], &v[0])
        })
    }
}

struct LSrCase;

impl GradCase for LSrCase {
    fn name(&self) -> &str {
        "l_sr"
    }
    fn module(&self) -> &str {
        "tensor"
    }
    fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
        let mut r = rng_for(seed, self.name());
        let (pred, gt) = separated_pair([2, 3, 6, 6], &mut r);
        check_scope_gradients(&ParamStore::new(), &[pred, gt], cfg, |_, v| l_sr(&v[0], &v[1]))
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: String,
    pub module: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub seconds: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub seed: u64,
    pub tolerance: f64,
    pub step: f64,
    pub cases: Vec<CaseResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.cases.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "gradient check: 64-bit central differences, h = {:e}, tolerance {:e}, seed {}",
            self.step, self.tolerance, self.seed
        );
        let _ = writeln!(s, "offset fractional parts drawn from [{}, {}]", OFFSET_FRACTION.0, OFFSET_FRACTION.1);
        let _ = writeln!(s, "{:<20} {:<7} {:>8} {:>13} {:>8}  result", "op", "module", "checked", "max rel err", "time");
        for c in &self.cases {
            let _ = writeln!(
                s,
                "{:<20} {:<7} {:>8} {:>13.3e} {:>7.2}s  {}",
                c.name,
                c.module,
                c.checked,
                c.max_rel_err,
                c.seconds,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        let _ = write!(s, "{}", if self.passed() { "all passed" } else { "FAILED" });
        s
    }
}

/// Gradient cases by name.
pub struct GradCheckRegistry {
    cases: Vec<Box<dyn GradCase>>,
}

impl Default for GradCheckRegistry {
    fn default() -> Self {
        Self {
            cases: vec![
                Box::new(DeformCase),
                Box::new(Conv2dCase),
                Box::new(ResidualBlockCase),
                Box::new(ReluCase),
                Box::new(ConcatCase),
                Box::new(PixelShuffleCase),
                Box::new(LAlignCase),
                Box::new(LSrCase),
            ],
        }
    }
}

impl GradCheckRegistry {
    pub const MODULES: [&'static str; 3] = ["deform", "tensor", "all"];

    pub fn register(&mut self, case: Box<dyn GradCase>) {
        self.cases.retain(|c| c.name() != case.name());
        self.cases.push(case);
    }

    pub fn names(&self) -> Vec<&str> {
        self.cases.iter().map(|c| c.name()).collect()
    }

    /// Runs every case of `module` (`all` selects everything). A case that
    /// errors counts as failed.
    pub fn run(&self, module: &str, seed: u64) -> Result<VerifyReport> {
        if !Self::MODULES.contains(&module) {
            return Err(Error::Config(format!("unknown gradcheck module `{module}` (expected deform, tensor or all)")));
        }
        let cfg = GradCheckConfig { seed, ..Default::default() };
        let cases = self
            .cases
            .iter()
            .filter(|c| module == "all" || c.module() == module)
            .map(|c| {
                let t = Instant::now();
                let (max_rel_err, checked, passed) = match c.run(seed, &cfg) {
                    Ok(r) => (r.max_rel_err(), r.checked(), r.passed()),
                    Err(_) => (f64::INFINITY, 0, false),
                };
                CaseResult {
                    name: c.name().to_string(),
                    module: c.module().to_string(),
                    max_rel_err,
                    checked,
                    seconds: t.elapsed().as_secs_f64(),
                    passed,
                }
            })
            .collect();
        Ok(VerifyReport { seed, tolerance: cfg.tolerance, step: cfg.step, cases })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tdan_tensor::{Backward, BackwardCtx};

    #[test]
    fn default_cases_pass() {
        let rep = GradCheckRegistry::default().run("all", 0).unwrap();
        assert!(rep.passed(), "{}", rep.to_table());
        for name in ["deformable_conv2d", "conv2d", "residual_block", "pixel_shuffle", "l_align", "l_sr"] {
            assert!(rep.cases.iter().any(|c| c.name == name), "{name}");
        }
        assert!(rep.to_table().contains("[0.2, 0.8]"));
    }

    #[test]
    fn module_selection() {
        let reg = GradCheckRegistry::default();
        let rep = reg.run("deform", 1).unwrap();
        assert_eq!(rep.cases.len(), 1);
        assert!(reg.run("bogus", 1).is_err());
    }

    #[test]
    fn offsets_avoid_lattice() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for &v in fractional_offsets(1, 4, 4, &mut r).data() {
            let f = v - v.floor();
            assert!((0.2..=0.8).contains(&f), "{v}");
        }
    }

    /// Doubles the value but reports the gradient of the identity.
    struct BrokenDouble;

    impl Backward<f64> for BrokenDouble {
        fn name(&self) -> &'static str {
            "broken_double"
        }
        fn backward(&self, ctx: &BackwardCtx<'_, f64>) -> Vec<Option<Tensor<f64>>> {
            vec![Some(ctx.grad.clone())]
        }
    }

    struct BrokenCase;

    impl GradCase for BrokenCase {
        fn name(&self) -> &str {
            "broken_double"
        }
        fn module(&self) -> &str {
            "tensor"
        }
        fn run(&self, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
            let x = random_tensor([1, 2, 3, 3], &mut ChaCha8Rng::seed_from_u64(seed));
            Ok(check_gradients(&[x], cfg, |g, v| {
                let y = g.apply(Box::new(BrokenDouble), &[&v[0]], v[0].value().map(|a| 2.0 * a))?;
                probed(y, seed)
            })?)
        }
    }

    #[test]
    fn corrupted_backward_is_named() {
        let mut reg = GradCheckRegistry::default();
        reg.register(Box::new(BrokenCase));
        let rep = reg.run("tensor", 0).unwrap();
        assert!(!rep.passed());
        assert_eq!(rep.failures(), ["broken_double"]);
        assert!(rep.to_table().contains("FAIL"));
    }

    #[test]
    fn scope_check_covers_params() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let block = ResBlock::register(&mut store, "b", 2, &mut r).unwrap();
        let x = random_tensor([1, 2, 4, 4], &mut r);
        let rep = check_scope_gradients(&store, &[x], &GradCheckConfig::default(), |s, v| {
            Ok(probed(residual_block(s, &v[0], &block)?, 3)?)
        })
        .unwrap();
        assert_eq!(rep.inputs.len(), 1 + store.len());
        assert!(rep.passed(), "{:?}", rep.inputs);
    }
}
