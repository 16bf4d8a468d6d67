//! Dense linear algebra, stable nonlinear primitives, seeded randomness and
//! finite-difference gradient checking.
//!
//! Everything is `f64`. Vectors are plain `[f64]` slices / `Vec<f64>`;
//! matrices are row-major [`Mat`].

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inner product. Panics on dimension mismatch.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len(), "axpy: dimension mismatch");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Two-way softmax via max-shifted exponentials.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    assert!(
        logits[0].is_finite() && logits[1].is_finite(),
        "softmax2: non-finite logit {logits:?}"
    );
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    let s = a + b;
    [a / s, b / s]
}

/// `ln Σ exp(x_i)` with max-shift. Panics on empty input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "log_sum_exp: empty input");
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.len() == 1 {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "Mat: dimensions must be positive");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} cannot hold {} values",
                values.len()
            )));
        }
        if !all_finite(&values) {
            return Err(Error::NonFinite("matrix values".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec: dimension mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t: dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), &mut out);
            }
        }
        out
    }

    /// `self += alpha · u ⊗ v`
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows, "add_outer: row mismatch");
        assert_eq!(v.len(), self.cols, "add_outer: col mismatch");
        for (r, &ur) in u.iter().enumerate() {
            if ur == 0.0 {
                continue;
            }
            let row = &mut self.values[r * self.cols..(r + 1) * self.cols];
            axpy(alpha * ur, v, row);
        }
    }
}

/// Independent random streams. Each component draws from its own stream so
/// that changing one part of an experiment leaves the others untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Data,
    Init,
    Train,
    Target,
    Classifier,
    Eval,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Init => 2,
            Stream::Train => 3,
            Stream::Target => 4,
            Stream::Classifier => 5,
            Stream::Eval => 6,
        }
    }
}

/// Serializable generator position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: Stream,
    pub substream: u32,
    /// ChaCha word position, stored as a decimal string in JSON to avoid u128 issues.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Seeded generator: ChaCha8 (counter-based), keyed by
/// `seed_from_u64(seed)` and a stream number `(stream << 32) | substream`.
/// Output is platform independent.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: Stream,
    substream: u32,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        Self::with_substream(seed, stream, 0)
    }

    pub fn with_substream(seed: u64, stream: Stream, substream: u32) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream((stream.id() << 32) | u64::from(substream));
        Self {
            seed,
            stream,
            substream,
            inner,
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.stream,
            substream: self.substream,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Self::with_substream(state.seed, state.stream, state.substream);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below: empty range");
        self.inner.random_range(0..n)
    }

    /// Fisher–Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// Largest relative discrepancy between an analytic gradient and central
/// finite differences of `f` at `point`:
/// `max_i |fd_i - g_i| / max(1, |fd_i|, |g_i|)`.
pub fn check_gradient<F>(f: F, analytic: &[f64], point: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Config(format!("check_gradient: eps must be > 0, got {eps}")));
    }
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "check_gradient: gradient has {} entries, point has {}",
            analytic.len(),
            point.len()
        )));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let hi = f(&x);
        x[i] = orig - eps;
        let lo = f(&x);
        x[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::GradientCheck { coordinate: i });
        }
        let fd = (hi - lo) / (2.0 * eps);
        let scale = 1.0f64.max(fd.abs()).max(analytic[i].abs());
        worst = worst.max((fd - analytic[i]).abs() / scale);
    }
    Ok(worst)
}
