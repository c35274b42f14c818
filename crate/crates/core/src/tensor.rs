//! Dense row-major matrices and 4-D video tensors with the handful of
//! primitives the interpolation search needs: linear interpolation, the
//! Frobenius inner product and the row-averaged cosine similarity.
//!
//! Storage is always `f64`; interchange files narrow to `f32`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense `rows x cols` real matrix in row-major order.
///
/// All values are finite. Used for text embeddings (`n x d`) as well as the
/// intermediate matrices of the toy model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// A text embedding `E_t` of shape `n x d`.
pub type EmbeddingMatrix = Matrix;

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(
                "matrix needs at least one row and one column",
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(
                "data length does not match rows * cols",
            ));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(size: usize) -> Result<Self> {
        let mut m = Self::zeros(size, size)?;
        for i in 0..size {
            m.data[i * size + i] = 1.0;
        }
        Ok(m)
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::InvalidShape("ragged rows"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data)
    }

    /// Internal constructor for results of arithmetic on valid matrices.
    /// Overflow to a non-finite value is reported rather than stored.
    pub(crate) fn from_computed(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(data.len(), rows * cols);
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// The leading `count` rows (`E[:count, :]`).
    pub fn leading_rows(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.rows {
            return Err(Error::InvalidIdsLength {
                ids_length: count,
                rows: self.rows,
            });
        }
        Ok(Self {
            rows: count,
            cols: self.cols,
            data: self.data[..count * self.cols].to_vec(),
        })
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `a * self + b * other`, elementwise.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::from_computed(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Self::from_computed(self.rows, self.cols, data)
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Self::from_computed(self.rows, rhs.cols, out)
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Stack `self` on top of `below`.
    pub fn vstack(&self, below: &Self) -> Result<Self> {
        if self.cols != below.cols {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: below.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + below.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&below.data);
        Ok(Self {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    /// Split into the first `at` rows and the rest.
    pub fn split_rows(&self, at: usize) -> Result<(Self, Self)> {
        if at == 0 || at >= self.rows {
            return Err(Error::InvalidShape(
                "row split point must leave both halves non-empty",
            ));
        }
        let (top, bottom) = self.data.split_at(at * self.cols);
        Ok((
            Self {
                rows: at,
                cols: self.cols,
                data: top.to_vec(),
            },
            Self {
                rows: self.rows - at,
                cols: self.cols,
                data: bottom.to_vec(),
            },
        ))
    }

    /// Reinterpret the buffer with a new shape of the same size.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() || rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(
                "reshape must preserve the element count",
            ));
        }
        Ok(Self {
            rows,
            cols,
            data: self.data,
        })
    }
}

/// Video latent `n_f x h x w x c`, stored frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoTensor {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidShape("video dimensions must be at least 1"));
        }
        if data.len() != frames * height * width * channels {
            return Err(Error::InvalidShape(
                "data length does not match video shape",
            ));
        }
        check_finite(&data)?;
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(
            frames,
            height,
            width,
            channels,
            vec![0.0; frames * height * width * channels],
        )
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// One frame as an `h x w x c` feature map.
    pub fn frame(&self, index: usize) -> FeatureMap {
        let len = self.frame_len();
        FeatureMap {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data[index * len..(index + 1) * len].to_vec(),
        }
    }
}

/// Single `h x w x c` feature map (one video frame or its patch embedding).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidShape(
                "feature map dimensions must be at least 1",
            ));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidShape(
                "data length does not match feature map shape",
            ));
        }
        check_finite(&data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub(crate) fn from_computed(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// The `i`-th of `k` interpolation points: `(i/k) x + ((k-i)/k) y`.
///
/// `i = k` returns `x` and `i = 0` returns `y`, both exactly.
pub fn lerp(x: &Matrix, y: &Matrix, i: usize, k: usize) -> Result<Matrix> {
    x.ensure_same_shape(y)?;
    if k == 0 {
        return Err(Error::ZeroSteps);
    }
    if i > k {
        return Err(Error::InvalidIndex { index: i, steps: k });
    }
    let kf = k as f64;
    x.combine(i as f64 / kf, y, (k - i) as f64 / kf)
}

/// Frobenius inner product `sum_ij X_ij Y_ij`.
pub fn frob_inner(x: &Matrix, y: &Matrix) -> Result<f64> {
    x.ensure_same_shape(y)?;
    Ok(dot(&x.data, &y.data))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Rows whose L2 norm falls below `1e-12 * sqrt(d)` are treated as zero.
pub fn zero_row_threshold(cols: usize) -> f64 {
    1e-12 * libm::sqrt(cols as f64)
}

/// Mean over rows of the cosine similarity between matching rows of `x` and `y`.
pub fn row_cosine_mean(x: &Matrix, y: &Matrix) -> Result<f64> {
    x.ensure_same_shape(y)?;
    let threshold = zero_row_threshold(x.cols);
    let mut total = 0.0;
    for row in 0..x.rows {
        let (a, b) = (x.row(row), y.row(row));
        let na = libm::sqrt(dot(a, a));
        let nb = libm::sqrt(dot(b, b));
        if na < threshold || nb < threshold {
            return Err(Error::ZeroRow { row });
        }
        total += dot(a, b) / (na * nb);
    }
    Ok(total / x.rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn lerp_endpoints_are_exact() {
        let x = m(&[&[1.5, -2.0], &[0.1, 3.0]]);
        let y = m(&[&[4.0, 0.3], &[-7.0, 2.5]]);
        assert_eq!(lerp(&x, &y, 7, 7).unwrap(), x);
        assert_eq!(lerp(&x, &y, 0, 7).unwrap(), y);
    }

    #[test]
    fn lerp_scalar_quarter() {
        let z = lerp(&m(&[&[2.0]]), &m(&[&[0.0]]), 1, 4).unwrap();
        assert_eq!(z.as_slice(), &[0.5]);
    }

    #[test]
    fn lerp_rejects_bad_arguments() {
        let x = m(&[&[1.0, 2.0]]);
        let y = m(&[&[1.0], &[2.0]]);
        assert!(matches!(
            lerp(&x, &y, 0, 1),
            Err(Error::ShapeMismatch { .. })
        ));
        assert_eq!(
            lerp(&x, &x, 5, 4),
            Err(Error::InvalidIndex { index: 5, steps: 4 })
        );
        assert_eq!(lerp(&x, &x, 0, 0), Err(Error::ZeroSteps));
    }

    #[test]
    fn frob_inner_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let y = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        // 5 + 12 + 21 + 32
        assert_eq!(frob_inner(&x, &y).unwrap(), 70.0);
        assert_eq!(frob_inner(&x, &Matrix::zeros(2, 2).unwrap()).unwrap(), 0.0);
        let eye = Matrix::identity(2).unwrap();
        assert_eq!(frob_inner(&eye, &eye).unwrap(), 2.0);
        assert!(frob_inner(&x, &m(&[&[1.0]])).is_err());
    }

    #[test]
    fn row_cosine_examples() {
        let x = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let y = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let expected = (1.0 / 2f64.sqrt() + 1.0) / 2.0;
        assert_relative_eq!(row_cosine_mean(&x, &y).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(row_cosine_mean(&x, &x).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(
            row_cosine_mean(&m(&[&[1.0, 0.0]]), &m(&[&[0.0, 1.0]])).unwrap(),
            0.0
        );
    }

    #[test]
    fn row_cosine_flags_zero_rows() {
        let x = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let y = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(row_cosine_mean(&x, &y), Err(Error::ZeroRow { row: 1 }));
        assert_eq!(row_cosine_mean(&y, &x), Err(Error::ZeroRow { row: 1 }));
    }

    #[test]
    fn constructors_validate() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
        assert_eq!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        );
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(VideoTensor::new(1, 1, 1, 0, vec![]).is_err());
        assert!(VideoTensor::new(1, 1, 1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_transpose_stack() {
        let x = m(&[&[1.0, 2.0]]);
        let w = m(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert_eq!(x.matmul(&w).unwrap().as_slice(), &[1.0, 4.0]);
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.transpose().as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let s = a.vstack(&m(&[&[7.0, 8.0, 9.0]])).unwrap();
        let (top, bottom) = s.split_rows(2).unwrap();
        assert_eq!(top, a);
        assert_eq!(bottom.as_slice(), &[7.0, 8.0, 9.0]);
        assert!(a.leading_rows(3).is_err());
        assert_eq!(a.leading_rows(1).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
    }
}
