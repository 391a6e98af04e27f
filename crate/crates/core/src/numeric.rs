//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Matrix with entries uniform in `[-scale, scale]`.
pub fn uniform_matrix(seed: u64, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * r.random::<f64>() - 1.0))
}

/// Van der Corput radical inverse of `index` in base `base`.
pub(crate) fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

pub(crate) fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|p| *p * *p <= c).all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// Halton point in `[0,1)^dim`, skipping the origin.
pub(crate) struct Halton {
    primes: Vec<u64>,
    index: u64,
}

impl Halton {
    pub(crate) fn new(dim: usize, offset: u64) -> Self {
        Self {
            primes: first_primes(dim),
            index: offset + 1,
        }
    }

    pub(crate) fn next_point(&mut self) -> DVector<f64> {
        let i = self.index;
        self.index += 1;
        DVector::from_iterator(
            self.primes.len(),
            self.primes.iter().map(|&p| radical_inverse(i, p)),
        )
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[a, b]`.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (xg, wg) = gauss_legendre(order);
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut t = Vec::with_capacity(panels * order);
    let mut w = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, wx) in xg.iter().zip(&wg) {
            t.push(mid + 0.5 * h * x);
            w.push(0.5 * h * wx);
        }
    }
    (t, w)
}

/// Serialize a float, writing non-finite values as strings so JSON stays valid.
pub fn serialize_f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("infinity")
    } else {
        s.serialize_str("-infinity")
    }
}

/// Coordinates of a vector as a plain list, for reports.
pub fn coords<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    v.as_slice().serialize(s)
}

pub fn coords_opt<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
    v.as_ref().map(|x| x.as_slice().to_vec()).serialize(s)
}

pub fn coords_list<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
    rows.serialize(s)
}
