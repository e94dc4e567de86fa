//! Dense vectors and the similarity arithmetic shared by every stage.
//!
//! Components are stored as `f32` (the wire and snapshot format); all
//! accumulation happens in `f64` in index order so that two code paths summing
//! the same vectors produce bit-identical results.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::BackendError;

/// Tolerance on the L2 norm of a vector flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f32>,
    normalized: bool,
}

impl Embedding {
    /// Wraps raw values, rejecting non-finite components.
    pub fn new(values: Vec<f32>) -> Result<Self, BackendError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::NonFinite);
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Wraps values and scales them to unit L2 norm. A zero vector stays zero
    /// and is not flagged as normalized.
    pub fn normalized(values: Vec<f32>) -> Result<Self, BackendError> {
        let mut e = Self::new(values)?;
        e.normalize();
        Ok(e)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v = (f64::from(*v) / n) as f32;
            }
            self.normalized = true;
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = f64::from(*x) - f64::from(*y);
        acc += d * d;
    }
    acc
}

pub fn l2(a: &[f32], b: &[f32]) -> f64 {
    libm::sqrt(squared_l2(a, b))
}

/// In-place unit scaling of an `f64` buffer; returns the original norm.
pub(crate) fn normalize_f64(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}
