//! LR frame synthesis: bicubic (BI) and blur-then-decimate (BD).

use serde::{Deserialize, Serialize};
use tdan_tensor::{Float, Tensor};

use super::frames::Frame;
use crate::{Error, Result};

/// Keys cubic with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        1.5 * ax.powi(3) - 2.5 * ax * ax + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax.powi(3) + 2.5 * ax * ax - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Maps any integer index onto `[0, n)` by half-sample symmetric reflection
/// (`.. 1 0 | 0 1 .. n-1 | n-1 n-2 ..`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Input taps and normalized weights for each output position of a 1-D
/// bicubic resize from `n_in` to `n_out` samples. Downscaling widens the
/// kernel by the scale factor (antialiasing).
pub fn resize_contributions(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_out as f64 / n_in as f64;
    let (kscale, width) = if scale < 1.0 { (scale, 4.0 / scale) } else { (1.0, 4.0) };
    (1..=n_out)
        .map(|i| {
            // 1-based source coordinate of output sample i.
            let u = i as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - width / 2.0).floor() as isize;
            let taps = width.ceil() as isize + 2;
            let mut w: Vec<(usize, f64)> = (0..taps)
                .map(|k| {
                    let idx = left + k;
                    let wt = kscale * cubic(kscale * (u - idx as f64));
                    (reflect_index(idx - 1, n_in), wt)
                })
                .filter(|&(_, wt)| wt != 0.0)
                .collect();
            let sum: f64 = w.iter().map(|&(_, wt)| wt).sum();
            for e in &mut w {
                e.1 /= sum;
            }
            w
        })
        .collect()
}

fn resize_axis(src: &[f64], h: usize, w: usize, along_rows: bool, taps: &[Vec<(usize, f64)>]) -> Vec<f64> {
    if along_rows {
        let oh = taps.len();
        let mut out = vec![0.0; oh * w];
        for (y, t) in taps.iter().enumerate() {
            for &(iy, wt) in t {
                for x in 0..w {
                    out[y * w + x] += wt * src[iy * w + x];
                }
            }
        }
        out
    } else {
        let ow = taps.len();
        let mut out = vec![0.0; h * ow];
        for y in 0..h {
            for (x, t) in taps.iter().enumerate() {
                out[y * ow + x] = t.iter().map(|&(ix, wt)| wt * src[y * w + ix]).sum();
            }
        }
        out
    }
}

/// Separable bicubic resize of every plane; rows first, then columns. No clamping.
pub fn imresize<T: Float>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let s = img.shape();
    if out_h == 0 || out_w == 0 || s.h == 0 || s.w == 0 {
        return Err(Error::Data(format!("cannot resize {}x{} to {out_h}x{out_w}", s.h, s.w)));
    }
    let rows = resize_contributions(s.h, out_h);
    let cols = resize_contributions(s.w, out_w);
    let mut out = Tensor::zeros([s.n, s.c, out_h, out_w]);
    for n in 0..s.n {
        for c in 0..s.c {
            let p: Vec<f64> = img.plane(n, c).iter().map(|&v| v.to_f64()).collect();
            let r = resize_axis(&p, s.h, s.w, true, &rows);
            let q = resize_axis(&r, out_h, s.w, false, &cols);
            let base = (n * s.c + c) * out_h * out_w;
            for (d, v) in out.data_mut()[base..base + out_h * out_w].iter_mut().zip(q) {
                *d = T::from_f64(v);
            }
        }
    }
    Ok(out)
}

fn check_divisible(shape: tdan_tensor::Shape, s: usize) -> Result<()> {
    if s < 2 {
        return Err(Error::Config(format!("downscale factor must be at least 2, got {s}")));
    }
    if shape.h % s != 0 || shape.w % s != 0 {
        return Err(Error::Data(format!("frame size {}x{} is not divisible by the scale {s}", shape.h, shape.w)));
    }
    Ok(())
}

/// Bicubic antialiased downscale by `s`, clamped to [0, 1].
pub fn degrade_bi<T: Float>(hr: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    check_divisible(hr.shape(), s)?;
    let out = imresize(hr, hr.shape().h / s, hr.shape().w / s)?;
    Ok(out.map(|v| v.max(T::zero()).min(T::one())))
}

/// Bicubic upscale by `s`, clamped to [0, 1]; the interpolation baseline.
pub fn upscale_bicubic<T: Float>(lr: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let out = imresize(lr, lr.shape().h * s, lr.shape().w * s)?;
    Ok(out.map(|v| v.max(T::zero()).min(T::one())))
}

/// Normalized Gaussian taps over `[-ceil(4 sigma), ceil(4 sigma)]`; a single
/// unit tap when `sigma <= 0`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Gaussian blur (reflective borders), then keeps pixels
/// `phase, phase + s, phase + 2s, ..` along both axes.
pub fn degrade_bd<T: Float>(hr: &Tensor<T>, s: usize, sigma: f64, phase: usize) -> Result<Tensor<T>> {
    check_divisible(hr.shape(), s)?;
    if phase >= s {
        return Err(Error::Config(format!("decimation phase must be below the scale ({s}), got {phase}")));
    }
    let sh = hr.shape();
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (oh, ow) = (sh.h / s, sh.w / s);
    let mut out = Tensor::zeros([sh.n, sh.c, oh, ow]);
    for n in 0..sh.n {
        for c in 0..sh.c {
            let p = hr.plane(n, c);
            // Horizontal pass only at the kept columns, on every row.
            let mut rows = vec![0.0; sh.h * ow];
            for y in 0..sh.h {
                for ox in 0..ow {
                    let x = (phase + ox * s) as isize;
                    rows[y * ow + ox] = k
                        .iter()
                        .enumerate()
                        .map(|(i, wt)| wt * p[y * sh.w + reflect_index(x + i as isize - r, sh.w)].to_f64())
                        .sum();
                }
            }
            for oy in 0..oh {
                let y = (phase + oy * s) as isize;
                for ox in 0..ow {
                    let v: f64 = k
                        .iter()
                        .enumerate()
                        .map(|(i, wt)| wt * rows[reflect_index(y + i as isize - r, sh.h) * ow + ox])
                        .sum();
                    out.set(n, c, oy, ox, T::from_f64(v));
                }
            }
        }
    }
    Ok(out)
}

fn default_mode() -> String {
    "bi".into()
}

fn default_scale() -> usize {
    4
}

fn default_sigma() -> f64 {
    1.6
}

/// Exact description of a degradation, as recorded in dataset manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_scale")]
    pub scale: usize,
    /// Gaussian standard deviation in HR pixels (BD only).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Decimation offset (BD only).
    #[serde(default)]
    pub phase: usize,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self { mode: default_mode(), scale: default_scale(), sigma: default_sigma(), phase: 0 }
    }
}

impl DegradationSpec {
    pub fn bi(scale: usize) -> Self {
        Self { mode: "bi".into(), scale, ..Default::default() }
    }

    pub fn bd(scale: usize, sigma: f64, phase: usize) -> Self {
        Self { mode: "bd".into(), scale, sigma, phase }
    }
}

/// HR -> LR frame operator.
pub trait Degradation: Send + Sync {
    fn spec(&self) -> DegradationSpec;
    fn apply(&self, hr: &Frame) -> Result<Frame>;
}

struct Bicubic {
    scale: usize,
}

impl Degradation for Bicubic {
    fn spec(&self) -> DegradationSpec {
        DegradationSpec::bi(self.scale)
    }

    fn apply(&self, hr: &Frame) -> Result<Frame> {
        degrade_bi(hr, self.scale)
    }
}

struct BlurDecimate {
    scale: usize,
    sigma: f64,
    phase: usize,
}

impl Degradation for BlurDecimate {
    fn spec(&self) -> DegradationSpec {
        DegradationSpec::bd(self.scale, self.sigma, self.phase)
    }

    fn apply(&self, hr: &Frame) -> Result<Frame> {
        degrade_bd(hr, self.scale, self.sigma, self.phase)
    }
}

type DegradationFactory = fn(&DegradationSpec) -> Result<Box<dyn Degradation>>;

/// Degradation modes by name.
pub struct DegradationRegistry {
    entries: Vec<(&'static str, DegradationFactory)>,
}

impl Default for DegradationRegistry {
    /// `bi` and `bd`.
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("bi", |s| Ok(Box::new(Bicubic { scale: s.scale })));
        r.register("bd", |s| {
            if s.phase >= s.scale {
                return Err(Error::Config(format!("phase {} must be below the scale {}", s.phase, s.scale)));
            }
            Ok(Box::new(BlurDecimate { scale: s.scale, sigma: s.sigma, phase: s.phase }))
        });
        r
    }
}

impl DegradationRegistry {
    pub fn register(&mut self, name: &'static str, factory: DegradationFactory) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, factory));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(&self, spec: &DegradationSpec) -> Result<Box<dyn Degradation>> {
        if spec.scale < 2 {
            return Err(Error::Config(format!("scale must be at least 2, got {}", spec.scale)));
        }
        let (_, f) = self.entries.iter().find(|(n, _)| *n == spec.mode).ok_or_else(|| {
            Error::Config(format!("unknown degradation `{}` (known: {})", spec.mode, self.names().join(", ")))
        })?;
        f(spec)
    }
}
