//! Brute-force reference implementations, written directly from the
//! definitions and sharing no code with the library kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdan_core::data::{degrade_bd, degrade_bi};
use tdan_core::metrics::EvalProtocol;
use tdan_tensor::deform::deformable_conv2d_forward;
use tdan_tensor::ops::{conv2d_forward, ConvGeometry};
use tdan_tensor::Tensor;

/// Direct nested-loop convolution with zero padding.
pub fn conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    let mut out = Tensor::zeros([xs.n, ws.n, oh, ow]);
    for n in 0..xs.n {
        for co in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[co];
                    for ci in 0..xs.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                    continue;
                                }
                                acc += w.get(co, ci, ky, kx) * x.get(n, ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.set(n, co, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Zero-padded bilinear read.
pub fn bilinear(x: &Tensor<f64>, n: usize, c: usize, py: f64, px: f64) -> f64 {
    let s = x.shape();
    let read = |y: f64, xx: f64| -> f64 {
        if y < 0.0 || xx < 0.0 || y >= s.h as f64 || xx >= s.w as f64 {
            0.0
        } else {
            x.get(n, c, y as usize, xx as usize)
        }
    };
    let (y0, x0) = (py.floor(), px.floor());
    let (dy, dx) = (py - y0, px - x0);
    read(y0, x0) * (1.0 - dy) * (1.0 - dx)
        + read(y0, x0 + 1.0) * (1.0 - dy) * dx
        + read(y0 + 1.0, x0) * dy * (1.0 - dx)
        + read(y0 + 1.0, x0 + 1.0) * dy * dx
}

/// 3x3 deformable convolution: tap `k` sits at `(k / 3 - 1, k % 3 - 1)` and
/// reads its horizontal shift from channel `2k`, vertical from `2k + 1`.
pub fn deform_conv(x: &Tensor<f64>, off: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let mut out = Tensor::zeros([xs.n, ws.n, xs.h, xs.w]);
    for n in 0..xs.n {
        for co in 0..ws.n {
            for y in 0..xs.h {
                for xx in 0..xs.w {
                    let mut acc = b.data()[co];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let k = ky * 3 + kx;
                            let py = y as f64 + ky as f64 - 1.0 + off.get(n, 2 * k + 1, y, xx);
                            let px = xx as f64 + kx as f64 - 1.0 + off.get(n, 2 * k, y, xx);
                            for ci in 0..xs.c {
                                acc += w.get(co, ci, ky, kx) * bilinear(x, n, ci, py, px);
                            }
                        }
                    }
                    out.set(n, co, y, xx, acc);
                }
            }
        }
    }
    out
}

/// Keys cubic with a = -0.5.
pub fn keys(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t < 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Mirror index with the edge sample repeated (`-1 -> 0`, `n -> n - 1`).
pub fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Per output sample: (mirrored input index, normalized weight) of an
/// antialiased bicubic resize from `n_in` to `n_out` samples.
fn resize_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = n_out as f64 / n_in as f64;
    let k = ratio.min(1.0);
    (0..n_out)
        .map(|o| {
            // Output sample centre in input coordinates (0-based, pixel centres at integers).
            let centre = (o as f64 + 0.5) / ratio - 0.5;
            let reach = (2.0 / k).ceil() as i64 + 1;
            let c = centre.floor() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for j in c - reach..=c + reach {
                let wgt = k * keys(k * (centre - j as f64));
                if wgt != 0.0 {
                    taps.push((mirror(j, n_in), wgt));
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(i, w)| (i, w / total)).collect()
        })
        .collect()
}

/// Antialiased bicubic resize as a full 2-D weighted sum, clamped to [0, 1].
pub fn bicubic_resize(img: &Tensor<f64>, oh: usize, ow: usize) -> Tensor<f64> {
    let s = img.shape();
    let (ry, rx) = (resize_weights(s.h, oh), resize_weights(s.w, ow));
    let mut out = Tensor::zeros([s.n, s.c, oh, ow]);
    for n in 0..s.n {
        for c in 0..s.c {
            for (y, ty) in ry.iter().enumerate() {
                for (x, tx) in rx.iter().enumerate() {
                    let mut acc = 0.0;
                    for &(iy, wy) in ty {
                        for &(ix, wx) in tx {
                            acc += wy * wx * img.get(n, c, iy, ix);
                        }
                    }
                    out.set(n, c, y, x, acc.clamp(0.0, 1.0));
                }
            }
        }
    }
    out
}

/// Full-resolution 2-D Gaussian blur with mirrored borders, then every
/// `s`-th sample starting at `phase`.
pub fn blur_decimate(img: &Tensor<f64>, s: usize, sigma: f64, phase: usize) -> Tensor<f64> {
    let sh = img.shape();
    let r = (4.0 * sigma).ceil() as i64;
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push((dy, dx, (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let norm: f64 = kernel.iter().map(|k| k.2).sum();
    let mut blurred = Tensor::zeros(sh);
    for n in 0..sh.n {
        for c in 0..sh.c {
            for y in 0..sh.h {
                for x in 0..sh.w {
                    let mut acc = 0.0;
                    for &(dy, dx, w) in &kernel {
                        acc += w * img.get(n, c, mirror(y as i64 + dy, sh.h), mirror(x as i64 + dx, sh.w));
                    }
                    blurred.set(n, c, y, x, acc / norm);
                }
            }
        }
    }
    Tensor::from_fn([sh.n, sh.c, sh.h / s, sh.w / s], |n, c, y, x| blurred.get(n, c, phase + y * s, phase + x * s))
}

/// BT.601 luma of a `(1, 3, H, W)` frame, `border` pixels removed per edge.
pub fn luma(img: &Tensor<f64>, border: usize) -> Vec<Vec<f64>> {
    let s = img.shape();
    (border..s.h - border)
        .map(|y| {
            (border..s.w - border)
                .map(|x| 0.299 * img.get(0, 0, y, x) + 0.587 * img.get(0, 1, y, x) + 0.114 * img.get(0, 2, y, x))
                .collect()
        })
        .collect()
}

pub fn psnr(a: &Tensor<f64>, b: &Tensor<f64>, border: usize) -> f64 {
    let (la, lb) = (luma(a, border), luma(b, border));
    let mut se = 0.0;
    let mut count = 0.0;
    for (ra, rb) in la.iter().zip(&lb) {
        for (x, y) in ra.iter().zip(rb) {
            se += (x - y).powi(2);
            count += 1.0;
        }
    }
    -10.0 * (se / count).log10()
}

/// Mean SSIM over every 11x11 window fully inside the image, each window
/// weighted by a 2-D Gaussian (sigma 1.5), dynamic range 1.
pub fn ssim(a: &Tensor<f64>, b: &Tensor<f64>, border: usize) -> f64 {
    let (la, lb) = (luma(a, border), luma(b, border));
    let (h, w) = (la.len(), la[0].len());
    let mut win = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-(((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / 4.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0.0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = win[i][j] / total;
                    let (p, q) = (la[y + i][x + j], lb[y + i][x + j]);
                    ma += g * p;
                    mb += g * q;
                    saa += g * p * p;
                    sbb += g * q * q;
                    sab += g * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    sum / count
}

/// Largest `|a - b| / max(|a|, |b|, 1)`.
pub fn max_rel(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0)).fold(0.0, f64::max)
}

// Random instances: each returns the library-vs-reference error for one seed.

fn uniform(shape: [usize; 4], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(shape, lo, hi, r)
}

fn max_abs(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative error of `conv2d_forward` on a random shape, kernel, stride and padding.
pub fn conv_case(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (n, ci, co) = (r.gen_range(1..3), r.gen_range(1..4), r.gen_range(1..4));
    let k = [1, 3, 5][r.gen_range(0..3)];
    let (h, w) = (r.gen_range(k..k + 7), r.gen_range(k..k + 7));
    let stride = r.gen_range(1..3);
    let pad = r.gen_range(0..=k / 2);
    let x = uniform([n, ci, h, w], -1.0, 1.0, &mut r);
    let wt = uniform([co, ci, k, k], -1.0, 1.0, &mut r);
    let b = uniform([1, co, 1, 1], -1.0, 1.0, &mut r);
    let got = conv2d_forward(&x, &wt, Some(&b), ConvGeometry { stride, padding: pad }).unwrap();
    max_rel(&got, &conv2d(&x, &wt, &b, stride, pad))
}

/// Relative error of the deformable forward pass; offsets reach far enough
/// that some taps leave the frame entirely.
pub fn deform_case(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (n, ci, co) = (r.gen_range(1..3), r.gen_range(1..4), r.gen_range(1..4));
    let (h, w) = (r.gen_range(3..9), r.gen_range(3..9));
    let x = uniform([n, ci, h, w], -1.0, 1.0, &mut r);
    let off = uniform([n, 18, h, w], -3.0, 3.0, &mut r);
    let wt = uniform([co, ci, 3, 3], -1.0, 1.0, &mut r);
    let b = uniform([1, co, 1, 1], -1.0, 1.0, &mut r);
    let got = deformable_conv2d_forward(&x, &off, &wt, Some(&b)).unwrap();
    max_rel(&got, &deform_conv(&x, &off, &wt, &b))
}

pub fn bi_case(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let s = [2, 3, 4][r.gen_range(0..3)];
    let (h, w) = (s * r.gen_range(2..7), s * r.gen_range(2..7));
    let hr = uniform([1, 3, h, w], 0.0, 1.0, &mut r);
    max_abs(&degrade_bi(&hr, s).unwrap(), &bicubic_resize(&hr, h / s, w / s))
}

pub fn bd_case(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let s = [2, 3, 4][r.gen_range(0..3)];
    let (h, w) = (s * r.gen_range(2..6), s * r.gen_range(2..6));
    let sigma = r.gen_range(0.5..2.0);
    let phase = r.gen_range(0..s);
    let hr = uniform([1, 3, h, w], 0.0, 1.0, &mut r);
    max_abs(&degrade_bd(&hr, s, sigma, phase).unwrap(), &blur_decimate(&hr, s, sigma, phase))
}

fn noisy_pair(seed: u64) -> (Tensor<f64>, Tensor<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (r.gen_range(20..32), r.gen_range(20..32));
    let gt = uniform([1, 3, h, w], 0.0, 1.0, &mut r);
    let amp = r.gen_range(0.01..0.3);
    let noise = uniform([1, 3, h, w], -amp, amp, &mut r);
    (gt.zip_map(&noise, |a, b| (a + b).clamp(0.0, 1.0)).unwrap(), gt)
}

/// Absolute PSNR difference (dB) under the default protocol.
pub fn psnr_case(seed: u64) -> f64 {
    let (pred, gt) = noisy_pair(seed);
    (tdan_core::metrics::psnr(&pred, &gt, &EvalProtocol::default()).unwrap() - psnr(&pred, &gt, 4)).abs()
}

pub fn ssim_case(seed: u64) -> f64 {
    let (pred, gt) = noisy_pair(seed);
    (tdan_core::metrics::ssim(&pred, &gt, &EvalProtocol::default()).unwrap() - ssim(&pred, &gt, 4)).abs()
}

/// Every oracle family: name, per-seed check and tolerance.
pub const ORACLES: [(&str, fn(u64) -> f64, f64); 6] = [
    ("conv2d", conv_case, 1e-5),
    ("deformable_conv2d", deform_case, 1e-5),
    ("degrade_bi", bi_case, 1e-6),
    ("degrade_bd", bd_case, 1e-6),
    ("psnr", psnr_case, 1e-7),
    ("ssim", ssim_case, 1e-7),
];
