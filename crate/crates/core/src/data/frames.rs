//! 8-bit PNG frames <-> `(1, 3, H, W)` tensors in [0, 1].

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};
use tdan_tensor::Tensor;

use crate::{Error, Result};

/// One RGB frame, shape `(1, 3, H, W)`, values nominally in [0, 1].
pub type Frame = Tensor<f32>;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0))
}

/// Quantizes with round-half-up after clamping to [0, 1]; NaN saves as 0.
pub fn quantize(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { (v as f64).clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    let s = frame.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Data(format!("can only save a single RGB frame, got {s}")));
    }
    let img: RgbImage = ImageBuffer::from_fn(s.w as u32, s.h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([0, 1, 2].map(|c| quantize(frame.get(0, c, y, x))))
    });
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Image files of a directory in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// All frames of a sequence directory; every frame must share one size.
pub fn load_sequence(dir: &Path) -> Result<Vec<Frame>> {
    let files = list_frames(dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no PNG frames found", dir.display())));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for f in &files {
        let frame = load_frame(f)?;
        if let Some(first) = frames.first() {
            if first.shape() != frame.shape() {
                return Err(Error::Data(format!(
                    "{}: frame is {}x{}, sequence frames are {}x{}",
                    f.display(),
                    frame.shape().h,
                    frame.shape().w,
                    first.shape().h,
                    first.shape().w
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes `frame_00000.png`, `frame_00001.png`, ... into `dir`.
pub fn save_sequence(frames: &[Frame], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        save_frame(f, &dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

/// Sequence directories under a dataset root, sorted by name.
pub fn list_sequences(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !root.is_dir() {
        return Err(Error::Data(format!("{}: dataset root is not a directory", root.display())));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            out.push((name, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no sequence directories found", root.display())));
    }
    Ok(out)
}
