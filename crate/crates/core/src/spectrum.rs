//! Eigensystem of the truncated position operator.
//!
//! x = (a + a^dag)/sqrt2 truncated to N levels is real symmetric tridiagonal
//! with off-diagonal b_n = sqrt((n+1)/2). Its eigenvalues are the Gauss-Hermite
//! nodes and column k of `v` holds the normalized Hermite-function samples at
//! lambda_k. Every function of x, or of a rotated quadrature
//! R(theta) x R(theta)^dag with R(theta) = exp(i theta n), is applied through
//! this basis. Because the spectrum is symmetric, parity maps column k to
//! column N-1-k exactly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::fock::{CVec, C64};

#[derive(Debug)]
pub struct QuadSpectrum {
    pub lambda: Vec<f64>,
    /// Column k is the eigenvector for `lambda[k]`.
    pub v: DMatrix<f64>,
}

impl QuadSpectrum {
    pub fn size(&self) -> usize {
        self.lambda.len()
    }

    /// V^T psi.
    pub fn to_x(&self, psi: &CVec) -> CVec {
        real_t_mul(&self.v, psi)
    }

    /// V c.
    pub fn from_x(&self, c: &CVec) -> CVec {
        real_mul(&self.v, c)
    }

    /// R(theta) V diag(f) V^T R(theta)^dag psi.
    pub fn apply_fn(&self, psi: &CVec, theta: f64, f: impl Fn(f64) -> C64) -> CVec {
        let mut w = rotate(psi, -theta);
        let mut c = self.to_x(&w);
        for (ck, &l) in c.iter_mut().zip(&self.lambda) {
            *ck *= f(l);
        }
        w = self.from_x(&c);
        rotate(&w, theta)
    }

    /// Coefficients of psi in the eigenbasis of R(theta) x R(theta)^dag.
    pub fn coefficients(&self, psi: &CVec, theta: f64) -> CVec {
        self.to_x(&rotate(psi, -theta))
    }
}

/// exp(i theta n) psi.
pub fn rotate(psi: &CVec, theta: f64) -> CVec {
    if theta == 0.0 {
        return psi.clone();
    }
    CVec::from_fn(psi.len(), |n, _| psi[n] * C64::from_polar(1.0, theta * n as f64))
}

fn real_mul(m: &DMatrix<f64>, c: &CVec) -> CVec {
    let n = m.nrows();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (j, cj) in c.iter().enumerate() {
        if cj.re == 0.0 && cj.im == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (i, &mij) in col.iter().enumerate() {
            re[i] += mij * cj.re;
            im[i] += mij * cj.im;
        }
    }
    CVec::from_fn(n, |i, _| C64::new(re[i], im[i]))
}

fn real_t_mul(m: &DMatrix<f64>, c: &CVec) -> CVec {
    let (re, im): (Vec<f64>, Vec<f64>) = c.iter().map(|z| (z.re, z.im)).unzip();
    CVec::from_fn(m.ncols(), |j, _| {
        let col = m.column(j);
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..col.len() {
            a += col[i] * re[i];
            b += col[i] * im[i];
        }
        C64::new(a, b)
    })
}

fn offdiag(n: usize) -> f64 {
    ((n + 1) as f64 / 2.0).sqrt()
}

/// Number of eigenvalues strictly below `x` (Sturm count on the LDL^T pivots).
fn sturm_count(size: usize, x: f64) -> usize {
    let mut count = 0;
    let mut d = -x;
    if d < 0.0 {
        count += 1;
    }
    for n in 1..size {
        let b = offdiag(n - 1);
        let prev = if d == 0.0 { f64::EPSILON * b } else { d };
        d = -x - b * b / prev;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn eigenvalue(size: usize, k: usize, bound: f64) -> f64 {
    let (mut lo, mut hi) = (-bound, bound);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if sturm_count(size, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

fn eigenvector(size: usize, l: f64) -> Vec<f64> {
    let mut p = vec![0.0; size];
    p[0] = 1.0;
    if size > 1 {
        p[1] = l / offdiag(0);
    }
    for n in 1..size - 1 {
        p[n + 1] = (l * p[n] - offdiag(n - 1) * p[n - 1]) / offdiag(n);
        if p[n + 1].abs() > 1e150 {
            for q in p.iter_mut().take(n + 2) {
                *q *= 1e-150;
            }
        }
    }
    let norm = p.iter().map(|q| q * q).sum::<f64>().sqrt();
    p.iter_mut().for_each(|q| *q /= norm);
    p
}

fn compute(size: usize) -> QuadSpectrum {
    // Gershgorin bound.
    let bound = 2.0 * offdiag(size) + 1.0;
    let half = size / 2;
    let mut lambda = vec![0.0; size];
    for k in 0..half {
        let l = eigenvalue(size, k, bound);
        lambda[k] = l;
        lambda[size - 1 - k] = -l;
    }
    let mut v = DMatrix::<f64>::zeros(size, size);
    for k in 0..half {
        let vec = eigenvector(size, lambda[k]);
        for n in 0..size {
            v[(n, k)] = vec[n];
            v[(n, size - 1 - k)] = if n % 2 == 0 { vec[n] } else { -vec[n] };
        }
    }
    if size % 2 == 1 {
        let vec = eigenvector(size, 0.0);
        for n in 0..size {
            v[(n, half)] = vec[n];
        }
    }
    QuadSpectrum { lambda, v }
}

type Cache = Mutex<HashMap<usize, Arc<QuadSpectrum>>>;

/// Shared spectrum for a basis of `size` levels. Memoized per size; a cache hit
/// is indistinguishable from recomputation.
pub fn quadrature_spectrum(size: usize) -> Arc<QuadSpectrum> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().expect("spectrum cache poisoned").get(&size) {
        return s.clone();
    }
    let s = Arc::new(compute(size));
    cache.lock().expect("spectrum cache poisoned").entry(size).or_insert(s).clone()
}
