//! PSNR, SSIM and the sequence evaluation protocol.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tdan_tensor::{Float, Tensor};

use crate::{Error, Result};

/// Which signal the metrics read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Full-range BT.601 luma, `0.299 R + 0.587 G + 0.114 B`.
    Luma,
    /// Every colour channel; SSIM averages the per-channel scores.
    Rgb,
}

impl std::str::FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luma" | "y" => Ok(ChannelMode::Luma),
            "rgb" => Ok(ChannelMode::Rgb),
            _ => Err(Error::Config(format!("unknown channel mode `{s}` (expected luma or rgb)"))),
        }
    }
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChannelMode::Luma => "luma",
            ChannelMode::Rgb => "rgb",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    /// Pixels ignored along every edge.
    pub border: usize,
    pub skip_head: usize,
    pub skip_tail: usize,
    pub channel: ChannelMode,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self { border: 4, skip_head: 2, skip_tail: 2, channel: ChannelMode::Luma }
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// A single-channel image in f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }
}

/// Channel planes of a `(1, C, H, W)` frame after removing `border` pixels
/// per edge.
pub fn metric_planes<T: Float>(frame: &Tensor<T>, mode: ChannelMode, border: usize) -> Result<Vec<Plane>> {
    let s = frame.shape();
    if s.n != 1 {
        return Err(Error::Data(format!("metrics take one frame at a time, got {s}")));
    }
    if 2 * border >= s.h || 2 * border >= s.w {
        return Err(Error::Data(format!("border crop of {border} px leaves nothing of a {}x{} frame", s.h, s.w)));
    }
    let (h, w) = (s.h - 2 * border, s.w - 2 * border);
    let crop = |c: usize| -> Vec<f64> {
        let p = frame.plane(0, c);
        (0..h).flat_map(|y| (0..w).map(move |x| p[(y + border) * s.w + x + border].to_f64())).collect()
    };
    match mode {
        ChannelMode::Rgb => Ok((0..s.c).map(|c| Plane { h, w, data: crop(c) }).collect()),
        ChannelMode::Luma => {
            if s.c != 3 {
                return Err(Error::Data(format!("luma needs an RGB frame, got {} channels", s.c)));
            }
            let (r, g, b) = (crop(0), crop(1), crop(2));
            let data = (0..h * w).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect();
            Ok(vec![Plane { h, w, data }])
        }
    }
}

fn check_pair<T: Float>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::Data(format!("metric inputs differ in shape: {} vs {}", pred.shape(), gt.shape())));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` over the cropped region, `+inf` for identical frames.
pub fn psnr<T: Float>(pred: &Tensor<T>, gt: &Tensor<T>, protocol: &EvalProtocol) -> Result<f64> {
    check_pair(pred, gt)?;
    let a = metric_planes(pred, protocol.channel, protocol.border)?;
    let b = metric_planes(gt, protocol.channel, protocol.border)?;
    let (mut se, mut n) = (0.0, 0usize);
    for (pa, pb) in a.iter().zip(&b) {
        se += pa.data.iter().zip(&pb.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        n += pa.data.len();
    }
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// 'valid' separable filtering.
fn filter_valid(p: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean of the SSIM map of two planes (dynamic range 1).
pub fn ssim_plane(a: &Plane, b: &Plane) -> Result<f64> {
    if a.h < SSIM_WINDOW || a.w < SSIM_WINDOW {
        return Err(Error::Data(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}", a.h, a.w)));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let f = |v: Vec<f64>| filter_valid(&v, a.h, a.w, &taps).0;
    let mu_a = f(a.data.clone());
    let mu_b = f(b.data.clone());
    let aa = f(a.data.iter().map(|v| v * v).collect());
    let bb = f(b.data.iter().map(|v| v * v).collect());
    let ab = f(a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect());
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn ssim<T: Float>(pred: &Tensor<T>, gt: &Tensor<T>, protocol: &EvalProtocol) -> Result<f64> {
    check_pair(pred, gt)?;
    let a = metric_planes(pred, protocol.channel, protocol.border)?;
    let b = metric_planes(gt, protocol.channel, protocol.border)?;
    let mut total = 0.0;
    for (pa, pb) in a.iter().zip(&b) {
        total += ssim_plane(pa, pb)?;
    }
    Ok(total / a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceReport {
    pub protocol: EvalProtocol,
    pub total_frames: usize,
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// `inf` for infinite PSNR, fixed precision otherwise.
pub fn format_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl SequenceReport {
    pub fn skipped(&self) -> usize {
        self.total_frames - self.frames.len()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6}  {:>12}  {:>10}", "frame", "psnr_db", "ssim");
        for f in &self.frames {
            let _ = writeln!(s, "{:>6}  {:>12}  {:>10.6}", f.index, format_metric(f.psnr), f.ssim);
        }
        let _ = writeln!(s, "{:>6}  {:>12}  {:>10.6}", "mean", format_metric(self.mean_psnr), self.mean_ssim);
        let p = &self.protocol;
        let _ = writeln!(
            s,
            "evaluated {} of {} frames (skipped {} head, {} tail), border {} px, channel {}",
            self.frames.len(),
            self.total_frames,
            p.skip_head,
            p.skip_tail,
            p.border,
            p.channel
        );
        s
    }

    /// One `frame_index psnr ssim` line per evaluated frame.
    pub fn to_key_value(&self) -> String {
        self.frames.iter().map(|f| format!("{} {} {:.6}\n", f.index, format_metric(f.psnr), f.ssim)).collect()
    }
}

/// Metrics over the frames the protocol retains.
pub fn evaluate_sequence<T: Float>(pred: &[Tensor<T>], gt: &[Tensor<T>], protocol: &EvalProtocol) -> Result<SequenceReport> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!("sequence length mismatch: {} predicted vs {} reference frames", pred.len(), gt.len())));
    }
    let keep = protocol.skip_head + protocol.skip_tail;
    if pred.len() <= keep {
        return Err(Error::Data(format!(
            "sequence of {} frames is too short to skip {} head and {} tail frames",
            pred.len(),
            protocol.skip_head,
            protocol.skip_tail
        )));
    }
    let mut frames = Vec::new();
    for index in protocol.skip_head..pred.len() - protocol.skip_tail {
        frames.push(FrameMetrics {
            index,
            psnr: psnr(&pred[index], &gt[index], protocol)?,
            ssim: ssim(&pred[index], &gt[index], protocol)?,
        });
    }
    let n = frames.len() as f64;
    let mean_psnr = frames.iter().map(|f| f.psnr).sum::<f64>() / n;
    let mean_ssim = frames.iter().map(|f| f.ssim).sum::<f64>() / n;
    Ok(SequenceReport { protocol: *protocol, total_frames: pred.len(), frames, mean_psnr, mean_ssim })
}
