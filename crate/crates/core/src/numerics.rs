//! Dense f32 linear algebra and probability kernels.
//!
//! Storage is 32-bit, accumulation is 64-bit, layout is row-major. These
//! three conventions hold everywhere in the crate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Probabilities below this floor are clamped before forming KL ratios.
pub const KL_FLOOR: f64 = 1e-12;

/// Row-major dense matrix of finite f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Build a matrix, checking the length invariant and that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "matrix entry at flat index {i} is not finite"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Fill from a function of (row, col). The caller must produce finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Column `c` copied into a new vector.
    pub fn column(&self, c: usize) -> Vector {
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            out.push(self.data[r * self.cols + c]);
        }
        Vector::from_raw(out)
    }
}

/// Dense vector of finite f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f32>,
}

impl Vector {
    /// Build a vector, checking that every entry is finite.
    pub fn new(data: Vec<f32>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("vector entry {i} is not finite")));
        }
        Ok(Self { data })
    }

    /// Internal constructor for values produced by the crate itself.
    pub(crate) fn from_raw(data: Vec<f32>) -> Self {
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, i: usize) -> f32 {
        self.data[i]
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

/// A probability distribution over a vocabulary: entries >= 0, sum within 1e-5 of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    probs: Vector,
}

impl ProbDist {
    pub fn new(probs: Vector) -> Result<Self> {
        if probs.as_slice().iter().any(|&p| p < 0.0) {
            return Err(Error::Data("probability entries must be >= 0".into()));
        }
        let sum: f64 = probs.as_slice().iter().map(|&p| p as f64).sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Data(format!(
                "probabilities sum to {sum}, expected 1 within 1e-5"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Vector {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.dim()
    }
}

/// `y = W x`, accumulated in f64, rounded to f32.
pub fn matvec(w: &Matrix, x: &Vector) -> Result<Vector> {
    if w.cols() != x.dim() {
        return Err(Error::Shape(format!(
            "matvec: matrix is {}x{}, vector has dim {}",
            w.rows(),
            w.cols(),
            x.dim()
        )));
    }
    let mut out = Vec::with_capacity(w.rows());
    for r in 0..w.rows() {
        out.push(dot_f64(w.row(r), x.as_slice()) as f32);
    }
    Ok(Vector::from_raw(out))
}

/// Dot product of two equal-length slices, accumulated in f64.
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&ai, &bi) in a.iter().zip(b.iter()) {
        acc += ai as f64 * bi as f64;
    }
    acc
}

/// Max-subtracted softmax. Cannot overflow for finite input.
pub fn softmax(logits: &Vector) -> ProbDist {
    let probs = softmax_slice(logits.as_slice());
    ProbDist {
        probs: Vector::from_raw(probs),
    }
}

pub(crate) fn softmax_slice(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut exps = Vec::with_capacity(logits.len());
    let mut sum = 0.0f64;
    for &l in logits {
        let e = libm::exp(l as f64 - max);
        sum += e;
        exps.push(e);
    }
    exps.into_iter().map(|e| (e / sum) as f32).collect()
}

/// `KL(p || q)` in nats.
///
/// Both sides of each ratio are floored at [`KL_FLOOR`] so that zero bins
/// stay finite and `KL(p || p)` is exactly zero. Terms with `p_i == 0` are
/// skipped (the usual `0 ln 0 = 0` convention).
pub fn kl_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "kl_divergence: p has dim {}, q has dim {}",
            p.dim(),
            q.dim()
        )));
    }
    let mut kl = 0.0f64;
    for (&pi, &qi) in p.probs.as_slice().iter().zip(q.probs.as_slice().iter()) {
        if pi > 0.0 {
            let pf = (pi as f64).max(KL_FLOOR);
            let qf = (qi as f64).max(KL_FLOOR);
            kl += pi as f64 * libm::log(pf / qf);
        }
    }
    Ok(kl)
}

/// `result[i] = gain[i] * x[i] / sqrt(mean(x^2) + eps)`.
pub fn rmsnorm(x: &Vector, gain: &Vector, eps: f32) -> Result<Vector> {
    if x.dim() != gain.dim() {
        return Err(Error::Shape(format!(
            "rmsnorm: x has dim {}, gain has dim {}",
            x.dim(),
            gain.dim()
        )));
    }
    let out = rmsnorm_slice(x.as_slice(), gain.as_slice(), eps);
    Ok(Vector::from_raw(out))
}

pub(crate) fn rmsnorm_slice(x: &[f32], gain: &[f32], eps: f32) -> Vec<f32> {
    let mut mean_sq = 0.0f64;
    for &v in x {
        mean_sq += v as f64 * v as f64;
    }
    mean_sq /= x.len() as f64;
    let denom = libm::sqrt(mean_sq + eps as f64);
    x.iter()
        .zip(gain.iter())
        .map(|(&xi, &gi)| (gi as f64 * xi as f64 / denom) as f32)
        .collect()
}

/// Tanh-approximated GELU, computed in f64.
pub(crate) fn gelu(x: f32) -> f32 {
    let x = x as f64;
    let inner = 0.797_884_560_802_865_4 * (x + 0.044715 * x * x * x);
    (0.5 * x * (1.0 + libm::tanh(inner))) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec2(a: f32, b: f32) -> Vector {
        Vector::new(vec![a, b]).unwrap()
    }

    #[test]
    fn matvec_identity() {
        let w = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = vec2(3.0, -1.0);
        let y = matvec(&w, &x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn matvec_zero_matrix() {
        let w = Matrix::zeros(3, 2);
        let x = vec2(5.0, -7.0);
        let y = matvec(&w, &x).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn matvec_hand_case() {
        let w = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = vec2(1.0, 1.0);
        let y = matvec(&w, &x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let w = Matrix::zeros(2, 3);
        let x = vec2(1.0, 1.0);
        let err = matvec(&w, &x).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("2x3") && msg.contains("dim 2"), "{msg}");
    }

    #[test]
    fn matrix_rejects_bad_length_and_nonfinite() {
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(Vector::new(vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&vec2(0.0, 0.0));
        assert_eq!(p.probs().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_shift_invariance_large() {
        let p = softmax(&Vector::new(vec![1000.0, 1000.0, 1000.0]).unwrap());
        for &v in p.probs().as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&vec2(1.0f32.ln(), 3.0f32.ln()));
        assert!((p.probs().get(0) - 0.25).abs() < 1e-6);
        assert!((p.probs().get(1) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn kl_identical_is_exactly_zero() {
        let p = ProbDist::new(vec2(0.5, 0.5)).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_closed_form_onehot() {
        let p = ProbDist::new(vec2(1.0, 0.0)).unwrap();
        let q = ProbDist::new(vec2(0.5, 0.5)).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - core::f64::consts::LN_2).abs() < 1e-9, "{kl}");
    }

    #[test]
    fn kl_closed_form_skewed() {
        let p = ProbDist::new(vec2(0.9, 0.1)).unwrap();
        let q = ProbDist::new(vec2(0.1, 0.9)).unwrap();
        let expected = 0.9 * (9.0f64).ln() + 0.1 * (1.0f64 / 9.0).ln();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - expected).abs() < 1e-6, "{kl} vs {expected}");
    }

    #[test]
    fn kl_dim_mismatch() {
        let p = ProbDist::new(vec2(0.5, 0.5)).unwrap();
        let q = ProbDist::new(Vector::new(vec![1.0]).unwrap()).unwrap();
        assert!(kl_divergence(&p, &q).is_err());
    }

    #[test]
    fn rmsnorm_unit_rms() {
        let x = Vector::new(vec![1.0; 4]).unwrap();
        let g = Vector::new(vec![1.0; 4]).unwrap();
        let y = rmsnorm(&x, &g, 1e-12).unwrap();
        for &v in y.as_slice() {
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rmsnorm_zero_input() {
        let x = Vector::zeros(3);
        let g = Vector::new(vec![2.0; 3]).unwrap();
        let y = rmsnorm(&x, &g, 1e-5).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rmsnorm_hand_case() {
        let x = vec2(3.0, 4.0);
        let g = vec2(1.0, 1.0);
        let y = rmsnorm(&x, &g, 0.0).unwrap();
        let denom = 12.5f64.sqrt();
        assert!((y.get(0) as f64 - 3.0 / denom).abs() < 1e-6);
        assert!((y.get(1) as f64 - 4.0 / denom).abs() < 1e-6);
    }

    fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(-10.0f32..10.0, len)
    }

    proptest! {
        #[test]
        fn matvec_linearity(
            wd in finite_vec(12),
            xd in finite_vec(4),
            zd in finite_vec(4),
            a in -3.0f32..3.0,
            b in -3.0f32..3.0,
        ) {
            let w = Matrix::new(3, 4, wd).unwrap();
            let x = Vector::new(xd).unwrap();
            let z = Vector::new(zd).unwrap();
            let combo = Vector::new(
                x.as_slice().iter().zip(z.as_slice()).map(|(&xi, &zi)| a * xi + b * zi).collect(),
            ).unwrap();
            let lhs = matvec(&w, &combo).unwrap();
            let wx = matvec(&w, &x).unwrap();
            let wz = matvec(&w, &z).unwrap();
            let norm: f64 = lhs.as_slice().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            for i in 0..3 {
                let rhs = a as f64 * wx.get(i) as f64 + b as f64 * wz.get(i) as f64;
                let diff = (lhs.get(i) as f64 - rhs).abs();
                prop_assert!(diff <= 1e-5 * norm.max(1.0), "{diff} vs norm {norm}");
            }
        }

        #[test]
        fn softmax_is_valid_and_shift_invariant(
            ld in finite_vec(6),
            shift in -5.0f32..5.0,
        ) {
            let l = Vector::new(ld.clone()).unwrap();
            let p = softmax(&l);
            let sum: f64 = p.probs().as_slice().iter().map(|&v| v as f64).sum();
            prop_assert!((sum - 1.0).abs() < 1e-5);
            prop_assert!(p.probs().as_slice().iter().all(|&v| v >= 0.0));

            let shifted = Vector::new(ld.iter().map(|&v| v + shift).collect()).unwrap();
            let ps = softmax(&shifted);
            for (a, b) in p.probs().as_slice().iter().zip(ps.probs().as_slice()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn kl_nonnegative_and_zero_iff_equal(ld in finite_vec(5), md in finite_vec(5)) {
            let p = softmax(&Vector::new(ld.clone()).unwrap());
            let q = softmax(&Vector::new(md).unwrap());
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= -1e-9);
            let self_kl = kl_divergence(&p, &p).unwrap();
            prop_assert!(self_kl.abs() <= 1e-9);
        }
    }
}
