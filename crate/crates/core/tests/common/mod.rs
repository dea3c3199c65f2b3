//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical routines.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.at(r, c));
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.at(k, c);
                }
            }
        }
        out
    }

    pub fn frobenius_dist(&self, other: &[f64]) -> f64 {
        self.data.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(sym: &Mat) -> Vec<f64> {
    let n = sym.rows;
    assert_eq!(n, sym.cols);
    let mut a = sym.clone();
    let scale = a.data.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a.at(i, j).powi(2)).sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.at(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.at(k, p);
                    let akq = a.at(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.at(p, k);
                    let aqk = a.at(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.at(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Singular values via the eigenvalues of the smaller Gram matrix.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let gram = if m.rows <= m.cols { m.mul(&m.transpose()) } else { m.transpose().mul(m) };
    jacobi_eigenvalues(&gram).into_iter().map(|e| e.max(0.0).sqrt()).collect()
}

pub fn nuclear_norm(m: &Mat) -> f64 {
    singular_values(m).iter().sum()
}

pub fn operator_norm(m: &Mat) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `n × k` matrix with orthonormal columns (Gram–Schmidt on Gaussians).
pub fn random_orthonormal<R: Rng>(n: usize, k: usize, rng: &mut R) -> Mat {
    assert!(k <= n);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        for _pass in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut m = Mat::zeros(n, k);
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m.set(r, c, *v);
        }
    }
    m
}

/// `Y = U diag(s) Vᵀ` with the given singular values, together with the
/// polar factor `U Vᵀ`.
pub fn matrix_with_singular_values<R: Rng>(rows: usize, cols: usize, s: &[f64], rng: &mut R) -> (Mat, Mat) {
    let k = rows.min(cols);
    assert_eq!(s.len(), k);
    let u = random_orthonormal(rows, k, rng);
    let v = random_orthonormal(cols, k, rng);
    let mut us = u.clone();
    for r in 0..rows {
        for c in 0..k {
            us.set(r, c, u.at(r, c) * s[c]);
        }
    }
    (us.mul(&v.transpose()), u.mul(&v.transpose()))
}

/// `k` singular values in `[1, κ]` with both ends attained (`[1]` for
/// `k = 1`).
pub fn spread_singular_values<R: Rng>(k: usize, kappa: f64, rng: &mut R) -> Vec<f64> {
    let mut s: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..=kappa)).collect();
    s[0] = if k == 1 { 1.0 } else { kappa };
    if k > 1 {
        s[k - 1] = 1.0;
    }
    s
}

/// `⌊√k⌋` by repeated increment, no floating point.
pub struct FloorSqrt {
    r: u64,
}

impl FloorSqrt {
    pub fn new() -> Self {
        Self { r: 0 }
    }

    /// Must be called with non-decreasing `k`.
    pub fn at(&mut self, k: u64) -> u64 {
        while (self.r + 1) * (self.r + 1) <= k {
            self.r += 1;
        }
        self.r
    }
}

/// Piecewise-constant rate as `(start, rate)` segments.
pub type Rates = Vec<Vec<(f64, f64)>>;

fn rate_at(segments: &[(f64, f64)], t: f64) -> f64 {
    segments.iter().rev().find(|s| s.0 <= t).map_or(0.0, |s| s.1)
}

/// Brute-force `t(R; T₀)`: march a time grid of step `h`, integrating each
/// rate at the cell midpoint, until `Σ⌊¼∫p_i⌋ ≥ R`. Returns the elapsed time.
pub fn grid_t_universal(threshold: u64, t0: f64, rates: &Rates, h: f64, limit: f64) -> Option<f64> {
    let mut acc = vec![0.0; rates.len()];
    let mut steps: u64 = 0;
    loop {
        let t = t0 + steps as f64 * h;
        if t - t0 > limit {
            return None;
        }
        for (a, p) in acc.iter_mut().zip(rates) {
            *a += rate_at(p, t + 0.5 * h) * h;
        }
        steps += 1;
        let credited: u64 = acc.iter().map(|a| (a / 4.0).floor() as u64).sum();
        if credited >= threshold {
            return Some(steps as f64 * h);
        }
    }
}

/// Replays the threshold protocol from the trace alone: each worker's
/// gradient was computed at the iteration current right after its previous
/// arrival (0 initially), so the delay and the accept decision are implied.
pub fn check_protocol(
    rows: &[ringmaster_core::TraceRow],
    n: usize,
    threshold: impl Fn(u64) -> u64,
) -> Result<(), String> {
    let mut dispatched = vec![0u64; n];
    let mut k = 0u64;
    let mut rejected = 0u64;
    let mut prev_time = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let at = |msg: &str| format!("row {i}: {msg} ({row:?})");
        if row.event_index != i as u64 {
            return Err(at("event index out of sequence"));
        }
        if !(row.sim_time_s >= prev_time) {
            return Err(at("clock went backwards"));
        }
        if row.worker >= n {
            return Err(at("unknown worker"));
        }
        let delay = k - dispatched[row.worker];
        if row.delay != delay {
            return Err(at(&format!("delay should be {delay}")));
        }
        let accept = delay < threshold(k);
        if row.accepted != accept {
            return Err(at(&format!("accept should be {accept} with R = {}", threshold(k))));
        }
        if !accept {
            rejected += 1;
        }
        if row.iteration != k + u64::from(accept) || row.rejected_total != rejected {
            return Err(at("iteration or rejection count inconsistent"));
        }
        k = row.iteration;
        dispatched[row.worker] = k;
        prev_time = row.sim_time_s;
    }
    Ok(())
}
