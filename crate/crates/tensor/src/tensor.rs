use std::fmt;

use crate::{Float, Result, TensorError};

/// Extent of a rank-4 `(batch, channels, height, width)` tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { n: 1, c: 1, h: 1, w: 1 };

    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements in one `(h, w)` plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements in one batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    #[inline]
    pub const fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub const fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub const fn with_c(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Shape {
    fn from(d: [usize; 4]) -> Self {
        Shape::new(d[0], d[1], d[2], d[3])
    }
}

/// Dense row-major NCHW array.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: impl Into<Shape>, value: T) -> Self {
        let shape = shape.into();
        Self { shape, data: vec![value; shape.numel()] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: Shape::SCALAR, data: vec![value] }
    }

    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength { shape, len: data.len(), expected: shape.numel() });
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every position.
    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut impl rand::Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel()).map(|_| T::from_f64(rng.gen_range(lo..hi))).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.shape.offset(n, c, h, w);
        self.data[i] = v;
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert!(self.shape.is_scalar(), "item() on non-scalar tensor {}", self.shape);
        self.data[0]
    }

    /// Slice holding batch item `n`.
    pub fn batch_item(&self, n: usize) -> &[T] {
        let sz = self.shape.item();
        &self.data[n * sz..(n + 1) * sz]
    }

    pub fn batch_item_mut(&mut self, n: usize) -> &mut [T] {
        let sz = self.shape.item();
        &mut self.data[n * sz..(n + 1) * sz]
    }

    /// Slice holding plane `(n, c)`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let sz = self.shape.plane();
        let start = (n * self.shape.c + c) * sz;
        &self.data[start..start + sz]
    }

    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape, data })
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_inplace(&mut self, k: T) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_f64(self.numel() as f64)
    }

    pub fn sq_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// First non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Converts element type.
    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect() }
    }

    /// Selects batch items `[start, start + len)`.
    pub fn narrow_batch(&self, start: usize, len: usize) -> Self {
        let sz = self.shape.item();
        Self { shape: self.shape.with_n(len), data: self.data[start * sz..(start + len) * sz].to_vec() }
    }

    /// Stacks tensors of equal `(c, h, w)` along the batch dimension.
    pub fn stack_batch(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| TensorError::InvalidArgument {
            op: "stack_batch",
            detail: "empty list".into(),
        })?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.item() * items.len());
        let mut n = 0;
        for t in items {
            if t.shape.with_n(1) != s.with_n(1) {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_batch",
                    detail: format!("{} vs {}", t.shape, s),
                });
            }
            data.extend_from_slice(&t.data);
            n += t.shape.n;
        }
        Ok(Self { shape: s.with_n(n), data })
    }

    /// Crops the spatial window `[y, y + h) x [x, x + w)` from every plane.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Self> {
        let s = self.shape;
        if y + h > s.h || x + w > s.w {
            return Err(TensorError::InvalidArgument {
                op: "crop",
                detail: format!("window {h}x{w} at ({y}, {x}) exceeds {}x{}", s.h, s.w),
            });
        }
        let out_shape = Shape::new(s.n, s.c, h, w);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s.n {
            for c in 0..s.c {
                for r in y..y + h {
                    let start = s.offset(n, c, r, x);
                    data.extend_from_slice(&self.data[start..start + w]);
                }
            }
        }
        Ok(Self { shape: out_shape, data })
    }

    /// Mirrors every plane left-to-right.
    pub fn flip_horizontal(&self) -> Self {
        let s = self.shape;
        let mut out = self.clone();
        for row in out.data.chunks_mut(s.w) {
            row.reverse();
        }
        debug_assert_eq!(out.shape, s);
        out
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch { op, detail: format!("{} vs {}", self.shape, other.shape) });
        }
        Ok(())
    }
}

impl<T: Float> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{} [", self.shape)?;
        for (i, v) in self.data.iter().take(PREVIEW).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > PREVIEW {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        let t = Tensor::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(0, 0, 1, 0), 3.0);
    }

    #[test]
    fn crop_and_flip() {
        let t = Tensor::<f64>::from_fn([1, 2, 4, 4], |_, c, h, w| (c * 100 + h * 10 + w) as f64);
        let c = t.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 2, 2, 2));
        assert_eq!(c.data(), &[12.0, 13.0, 22.0, 23.0, 112.0, 113.0, 122.0, 123.0]);
        let f = t.flip_horizontal();
        assert_eq!(f.get(0, 1, 3, 0), 133.0);
        assert!(t.crop(3, 0, 2, 1).is_err());
    }

    #[test]
    fn stack_and_narrow() {
        let a = Tensor::<f32>::full([1, 2, 2, 2], 1.0);
        let b = Tensor::<f32>::full([1, 2, 2, 2], 2.0);
        let s = Tensor::stack_batch(&[&a, &b]).unwrap();
        assert_eq!(s.shape().n, 2);
        assert_eq!(s.narrow_batch(1, 1), b);
    }
}
