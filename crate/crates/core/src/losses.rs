//! Training objective: alignment L1 plus reconstruction L1.

use tdan_tensor::ops::l1_loss;
use tdan_tensor::{Float, Var};

use crate::model::ModelOutput;
use crate::{Error, Result};

/// Loss values of one step, on [0, 1]-scaled pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub l_align: f64,
    pub l_sr: f64,
    /// Always `l_align + l_sr`.
    pub total: f64,
}

impl LossReport {
    pub fn new(l_align: f64, l_sr: f64) -> Self {
        Self { l_align, l_sr, total: l_align + l_sr }
    }
}

/// Mean over the aligned frames of each frame's mean absolute error to the
/// reference.
pub fn l_align<'g, T: Float>(aligned: &[Var<'g, T>], reference: &Var<'g, T>) -> Result<Var<'g, T>> {
    let Some((first, rest)) = aligned.split_first() else {
        return Err(Error::Data("alignment loss needs at least one aligned frame".into()));
    };
    let mut acc = l1_loss(first, reference)?;
    for a in rest {
        acc = acc.add(&l1_loss(a, reference)?)?;
    }
    Ok(acc.scale(1.0 / aligned.len() as f64)?)
}

/// Mean absolute error between the estimate and the ground truth.
pub fn l_sr<'g, T: Float>(pred: &Var<'g, T>, gt: &Var<'g, T>) -> Result<Var<'g, T>> {
    Ok(l1_loss(pred, gt)?)
}

/// Joint objective for a forward pass. Variants that do not align
/// contribute no alignment term.
pub fn joint_loss<'g, T: Float>(
    out: &ModelOutput<'g, T>,
    reference: &Var<'g, T>,
    gt: &Var<'g, T>,
) -> Result<(Var<'g, T>, LossReport)> {
    let sr = l_sr(&out.hr, gt)?;
    let sr_value = sr.value().item().to_f64();
    if out.aligned.is_empty() {
        return Ok((sr, LossReport::new(0.0, sr_value)));
    }
    let align = l_align(&out.aligned, reference)?;
    let report = LossReport::new(align.value().item().to_f64(), sr_value);
    Ok((align.add(&sr)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tdan_tensor::{Graph, Tensor};

    fn rand(seed: u64) -> Tensor<f64> {
        Tensor::random_uniform([1, 3, 4, 5], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn exact_alignment_is_zero() {
        let g = Graph::new();
        let r = g.constant(rand(0));
        let al: Vec<_> = (0..4).map(|_| g.variable(rand(0))).collect();
        assert_eq!(l_align(&al, &r).unwrap().value().item(), 0.0);
    }

    #[test]
    fn one_frame_off_by_half() {
        let g = Graph::new();
        let r = g.constant(rand(1));
        let mut al: Vec<_> = (0..4).map(|_| g.constant(rand(1))).collect();
        al[2] = g.constant(rand(1).map(|v| v + 0.5));
        assert!((l_align(&al, &r).unwrap().value().item() - 0.125).abs() < 1e-15);
        assert!(l_align::<f64>(&[], &r).is_err());
    }

    #[test]
    fn align_gradient_is_scaled_sign() {
        let g = Graph::new();
        let r = g.constant(rand(2));
        let al: Vec<_> = (3..7).map(|s| g.variable(rand(s))).collect();
        let loss = l_align(&al, &r).unwrap();
        let grads = g.backward(&loss).unwrap();
        let k = 1.0 / (4.0 * 60.0);
        for a in &al {
            let want = a.value().zip_map(r.value(), |x, y| k * (x - y).signum()).unwrap();
            assert!(grads.wrt(a).max_abs_diff(&want) < 1e-15);
        }
    }

    #[test]
    fn sr_loss_values() {
        let g = Graph::<f64>::new();
        let a = g.constant(rand(3));
        let b = g.constant(rand(3).map(|v| v + 0.1));
        assert_eq!(l_sr(&a, &a).unwrap().value().item(), 0.0);
        assert!((l_sr(&a, &b).unwrap().value().item() - 0.1).abs() < 1e-12);
        let c = g.constant(rand(4));
        assert_eq!(l_sr(&a, &c).unwrap().value().item(), l_sr(&c, &a).unwrap().value().item());
        assert!(l_sr(&a, &g.constant(Tensor::zeros([1, 3, 4, 4]))).is_err());
    }

    #[test]
    fn total_is_sum_and_gradients_add() {
        let g = Graph::new();
        let r = g.constant(rand(5));
        let gt = g.constant(rand(6));
        let hr = g.variable(rand(7));
        let al = vec![g.variable(rand(8)), g.variable(rand(9))];
        let out = ModelOutput { hr: hr.clone(), aligned: al.clone() };
        let (total, report) = joint_loss(&out, &r, &gt).unwrap();
        assert_eq!(report.total, report.l_align + report.l_sr);
        assert!((total.value().item() - report.total).abs() < 1e-15);

        let grads = g.backward(&total).unwrap();
        let g_sr = g.backward(&l_sr(&hr, &gt).unwrap()).unwrap();
        let g_al = g.backward(&l_align(&al, &r).unwrap()).unwrap();
        assert_eq!(grads.wrt(&hr), g_sr.wrt(&hr));
        assert_eq!(grads.wrt(&al[0]), g_al.wrt(&al[0]));
    }

    #[test]
    fn no_alignment_term_without_aligned_frames() {
        let g = Graph::<f64>::new();
        let r = g.constant(rand(5));
        let out = ModelOutput { hr: g.variable(rand(1)), aligned: Vec::new() };
        let (_, report) = joint_loss(&out, &r, &g.constant(rand(2))).unwrap();
        assert_eq!(report.l_align, 0.0);
        assert_eq!(report.total, report.l_sr);
    }
}
