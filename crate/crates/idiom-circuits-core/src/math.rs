// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small dense-matrix and numeric helpers. All arithmetic is f32.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Row-major dense f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, CoreError> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                name: String::from("Mat::from_vec"),
                expected: format!("{}x{} = {}", rows, cols, rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `row_vec @ self` for a row vector of length `self.rows`.
    pub fn vec_mul(&self, x: &[f32]) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0f32; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (o, &w) in out.iter_mut().zip(row.iter()) {
                *o += xr * w;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f32]) -> f32 {
    libm::sqrtf(dot(a, a))
}

/// Cosine similarity; errors when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32], what: &str) -> Result<f32, CoreError> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::ZeroNorm(String::from(what)));
    }
    Ok(dot(a, b) / (na * nb))
}

/// In-place softmax over a slice (numerically stabilized by the max).
pub fn softmax_inplace(row: &mut [f32]) {
    let mut max = f32::NEG_INFINITY;
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = libm::expf(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub const NORM_EPS: f32 = 1e-5;

/// RMS norm with a learned scale vector.
pub fn rms_norm(x: &[f32], scale: &[f32]) -> Vec<f32> {
    let d = x.len() as f32;
    let ms = dot(x, x) / d;
    let inv = 1.0 / libm::sqrtf(ms + NORM_EPS);
    x.iter().zip(scale).map(|(&v, &s)| v * inv * s).collect()
}

/// Layer norm (zero-mean, unit-variance) with a learned scale vector.
pub fn layer_norm(x: &[f32], scale: &[f32]) -> Vec<f32> {
    let d = x.len() as f32;
    let mean = x.iter().sum::<f32>() / d;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / d;
    let inv = 1.0 / libm::sqrtf(var + NORM_EPS);
    x.iter()
        .zip(scale)
        .map(|(&v, &s)| (v - mean) * inv * s)
        .collect()
}

/// Exact GELU via the error function.
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x / core::f32::consts::SQRT_2))
}

/// Rotary position embedding applied in-place to one head vector.
///
/// Pairs (2i, 2i+1) are rotated by `pos / 10000^(2i/d)`.
pub fn rotary_inplace(v: &mut [f32], pos: usize) {
    let d = v.len();
    debug_assert!(d % 2 == 0, "rotary requires even d_head");
    for i in 0..d / 2 {
        let theta = pos as f32 / libm::powf(10000.0, (2 * i) as f32 / d as f32);
        let (sin, cos) = (libm::sinf(theta), libm::cosf(theta));
        let (a, b) = (v[2 * i], v[2 * i + 1]);
        v[2 * i] = a * cos - b * sin;
        v[2 * i + 1] = a * sin + b * cos;
    }
}
