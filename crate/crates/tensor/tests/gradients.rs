//! Finite-difference checks of every differentiable op (64-bit).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdan_tensor::deform::deformable_conv2d;
use tdan_tensor::gradcheck::{check_gradients, GradCheckConfig};
use tdan_tensor::ops::{concat_channels, conv2d, l1_loss, pixel_shuffle};
use tdan_tensor::{Graph, Result, Tensor, Var};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum(y * r)` for a fixed random `r`: a smooth scalar probe of every output element.
fn project<'g>(y: &Var<'g, f64>, seed: u64) -> Result<Var<'g, f64>> {
    let mut r = rng(seed);
    let probe = Tensor::random_uniform(y.shape(), -1.0, 1.0, &mut r);
    let p = y.graph().constant(probe);
    mul_const(y, &p)?.sum()
}

struct MulConst;

impl tdan_tensor::Backward<f64> for MulConst {
    fn name(&self) -> &'static str {
        "mul_const"
    }

    fn backward(&self, ctx: &tdan_tensor::BackwardCtx<'_, f64>) -> Vec<Option<Tensor<f64>>> {
        vec![Some(ctx.grad.zip_map(&ctx.inputs[1], |g, r| g * r).unwrap()), None]
    }
}

fn mul_const<'g>(y: &Var<'g, f64>, r: &Var<'g, f64>) -> Result<Var<'g, f64>> {
    let v = y.value().zip_map(r.value(), |a, b| a * b)?;
    y.graph().apply(Box::new(MulConst), &[y, r], v)
}

fn assert_pass(name: &str, report: tdan_tensor::gradcheck::GradCheckReport) {
    assert!(report.passed(), "{name}: max rel err {:.3e} ({:?})", report.max_rel_err(), report.inputs);
}

#[test]
fn conv2d_gradients() {
    let mut r = rng(1);
    for &(stride, pad) in &[(1, 1), (2, 1), (1, 0)] {
        let inputs = vec![
            Tensor::random_uniform([2, 3, 6, 5], -1.0, 1.0, &mut r),
            Tensor::random_uniform([4, 3, 3, 3], -1.0, 1.0, &mut r),
            Tensor::random_uniform([4, 1, 1, 1], -1.0, 1.0, &mut r),
        ];
        let rep = check_gradients(&inputs, &GradCheckConfig::default(), |_, v| {
            project(&conv2d(&v[0], &v[1], Some(&v[2]), stride, pad)?, 7)
        })
        .unwrap();
        assert_pass("conv2d", rep);
    }
}

#[test]
fn relu_gradients_away_from_kink() {
    let mut r = rng(2);
    let x = Tensor::from_fn([1, 2, 4, 4], |_, _, _, _| {
        let v: f64 = r.gen_range(0.1..1.0);
        if r.gen_bool(0.5) { v } else { -v }
    });
    let rep = check_gradients(&[x], &GradCheckConfig::default(), |_, v| project(&v[0].relu()?, 3)).unwrap();
    assert_pass("relu", rep);
}

#[test]
fn concat_and_shuffle_gradients() {
    let mut r = rng(3);
    let inputs = vec![
        Tensor::random_uniform([2, 4, 3, 2], -1.0, 1.0, &mut r),
        Tensor::random_uniform([2, 4, 3, 2], -1.0, 1.0, &mut r),
    ];
    let rep = check_gradients(&inputs, &GradCheckConfig::default(), |_, v| {
        let c = concat_channels(&[&v[0], &v[1]])?;
        project(&pixel_shuffle(&c, 2)?, 5)
    })
    .unwrap();
    assert_pass("concat+pixel_shuffle", rep);
}

#[test]
fn l1_gradients_off_zero_residual() {
    let mut r = rng(4);
    let a = Tensor::random_uniform([1, 3, 4, 4], 0.0, 1.0, &mut r);
    let b = a.map(|v| if (v * 1000.0) as i64 % 2 == 0 { v + 0.3 } else { v - 0.3 });
    let rep = check_gradients(&[a, b], &GradCheckConfig::default(), |_, v| l1_loss(&v[0], &v[1])).unwrap();
    assert_pass("l1", rep);
}

/// Offsets whose sampling positions all have fractional parts in [0.2, 0.8].
fn lattice_safe_offsets(shape: [usize; 4], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| {
        let whole: i32 = r.gen_range(-2..=2);
        whole as f64 + r.gen_range(0.2..0.8)
    })
}

#[test]
fn deformable_conv_gradients() {
    let mut r = rng(5);
    for trial in 0..3 {
        let inputs = vec![
            Tensor::random_uniform([2, 3, 5, 6], -1.0, 1.0, &mut r),
            lattice_safe_offsets([2, 18, 5, 6], &mut r),
            Tensor::random_uniform([4, 3, 3, 3], -1.0, 1.0, &mut r),
            Tensor::random_uniform([4, 1, 1, 1], -1.0, 1.0, &mut r),
        ];
        let rep = check_gradients(&inputs, &GradCheckConfig::default(), |_, v| {
            project(&deformable_conv2d(&v[0], &v[1], &v[2], Some(&v[3]))?, 11 + trial)
        })
        .unwrap();
        assert_pass("deformable_conv2d", rep);
    }
}

#[test]
fn deformable_chain_gradients() {
    // Offsets produced by a conv of the input itself, the way the alignment
    // network wires them; the chain exercises offset -> conv backprop.
    let mut r = rng(6);
    let x = Tensor::random_uniform([1, 2, 5, 5], -1.0, 1.0, &mut r);
    let w_off = Tensor::random_uniform([18, 2, 3, 3], -0.3, 0.3, &mut r);
    let b_off = Tensor::from_fn([18, 1, 1, 1], |_, _, _, _| r.gen_range(0.3..0.7));
    let w = Tensor::random_uniform([2, 2, 3, 3], -1.0, 1.0, &mut r);
    let cfg = GradCheckConfig { floor: 1e-5, ..Default::default() };
    let rep = check_gradients(&[x, w_off, b_off, w], &cfg, |_, v| {
        let off = conv2d(&v[0], &v[1], Some(&v[2]), 1, 1)?;
        project(&deformable_conv2d(&v[0], &off, &v[3], None)?, 13)
    })
    .unwrap();
    // Offsets derived from data can land near lattice points; report rather than hide.
    assert!(rep.max_rel_err() < 1e-3, "{:?}", rep.inputs);
}

#[test]
fn corrupted_backward_is_detected() {
    struct WrongDouble;
    impl tdan_tensor::Backward<f64> for WrongDouble {
        fn name(&self) -> &'static str {
            "wrong_double"
        }
        fn backward(&self, ctx: &tdan_tensor::BackwardCtx<'_, f64>) -> Vec<Option<Tensor<f64>>> {
            vec![Some(ctx.grad.map(|g| 3.0 * g))]
        }
    }
    let x = Tensor::from_vec([1, 1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
    let rep = check_gradients(&[x], &GradCheckConfig::default(), |g: &Graph<f64>, v| {
        let y = v[0].value().map(|a| 2.0 * a);
        g.apply(Box::new(WrongDouble), &[&v[0]], y)?.sum()
    })
    .unwrap();
    assert!(!rep.passed());
}
