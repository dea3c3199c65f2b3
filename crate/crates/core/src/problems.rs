//! Objective oracles.
//!
//! [`Quadratic`] is the tridiagonal worst-case quadratic
//! `f(x) = ½xᵀAx − bᵀx` with `A = ¼·tridiag(−1, 2, −1)`, `b = −¼e₁`,
//! `x₀ = √d·e₁`, applied as a stencil. Its stochastic oracle adds one scalar
//! Gaussian shared by all coordinates. [`MatrixToy`] is a single matrix block
//! `f(W) = ½‖W − W*‖²_F` that exercises the spectral oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::lmo::{dual_norm, norm_equiv_rho, BlockLayout, NormSpec, ParamVector};
use crate::schedules::ProblemConstants;

/// Random stream type used for gradient samples and runtimes.
pub type SampleRng = ChaCha8Rng;

pub trait Problem: Send + Sync {
    fn layout(&self) -> &BlockLayout;

    fn initial_point(&self) -> ParamVector;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Unbiased stochastic gradient drawn from `rng`.
    fn stochastic_gradient(&self, x: &[f64], rng: &mut SampleRng) -> Vec<f64>;

    /// `f*` when known exactly.
    fn optimal_value(&self) -> Option<f64>;

    /// Constants for the theory schedules under the geometry `spec`.
    fn constants(&self, spec: &NormSpec) -> Result<ProblemConstants>;
}

/// `loss = f(x) − f*` (or `f(x)` when `f*` is unknown) and `‖∇f(x)‖_*`.
pub fn measure(problem: &dyn Problem, x: &ParamVector, spec: &NormSpec) -> Result<(f64, f64)> {
    let value = problem.value(x.as_slice());
    let loss = problem.optimal_value().map_or(value, |f_star| value - f_star);
    let grad = ParamVector::new(problem.gradient(x.as_slice()), x.layout().clone())?;
    Ok((loss, dual_norm(&grad, spec)?))
}

fn noise(std: f64, rng: &mut SampleRng) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    }
}

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `sub[i]` multiplies `x[i]` in row `i + 1`, `sup[i]` multiplies `x[i + 1]`
/// in row `i`. Requires no pivoting (e.g. diagonally dominant or SPD input).
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || rhs.len() != n || sub.len() + 1 != n || sup.len() + 1 != n {
        return Err(Error::invalid("inconsistent tridiagonal system dimensions"));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - sub[i - 1] * c[i - 1];
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::NumericalFailure(format!("zero pivot in row {i}")));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = if i == 0 { rhs[0] / denom } else { (rhs[i] - sub[i - 1] * d[i - 1]) / denom };
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// `j`-th eigenvalue (1-based) of `¼·tridiag(−1, 2, −1)` of size `d`.
pub fn quadratic_eigenvalue(d: usize, j: usize) -> f64 {
    0.5 * (1.0 - (j as f64 * std::f64::consts::PI / (d as f64 + 1.0)).cos())
}

#[derive(Debug, Clone)]
pub struct Quadratic {
    d: usize,
    noise_std: f64,
    layout: BlockLayout,
    minimizer: Vec<f64>,
    f_star: f64,
}

impl Quadratic {
    pub const DEFAULT_NOISE_STD: f64 = 0.01;

    pub fn new(d: usize, noise_std: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise std must be nonnegative, got {noise_std}")));
        }
        let layout = BlockLayout::vector(d)?;
        let mut q = Self { d, noise_std, layout, minimizer: Vec::new(), f_star: 0.0 };
        q.minimizer = q.solve_exact_minimizer()?;
        q.f_star = q.value_grad(&q.minimizer)?.0;
        Ok(q)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// `(Ax)_i = ¼(2x_i − x_{i−1} − x_{i+1})`.
    pub fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..d)
            .map(|i| {
                let left = if i > 0 { x[i - 1] } else { 0.0 };
                let right = if i + 1 < d { x[i + 1] } else { 0.0 };
                0.25 * (2.0 * x[i] - left - right)
            })
            .collect()
    }

    /// `(f(x), ∇f(x))` in O(d).
    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.d {
            return Err(Error::invalid(format!("expected {} coordinates, got {}", self.d, x.len())));
        }
        let mut grad = self.apply_a(x);
        let quad: f64 = x.iter().zip(&grad).map(|(a, b)| a * b).sum();
        // b = −¼e₁, so −bᵀx = ¼x₁ and ∇f = Ax + ¼e₁
        let value = 0.5 * quad + 0.25 * x[0];
        grad[0] += 0.25;
        Ok((value, grad))
    }

    pub fn stochastic_grad(&self, x: &[f64], rng: &mut SampleRng) -> Result<Vec<f64>> {
        let (_, mut g) = self.value_grad(x)?;
        let xi = noise(self.noise_std, rng);
        g.iter_mut().for_each(|v| *v += xi);
        Ok(g)
    }

    /// Exact minimizer of `Ax = b` by the Thomas algorithm.
    pub fn solve_exact_minimizer(&self) -> Result<Vec<f64>> {
        let d = self.d;
        let mut rhs = vec![0.0; d];
        rhs[0] = -0.25;
        thomas_solve(&vec![-0.25; d - 1], &vec![0.5; d], &vec![-0.25; d - 1], &rhs)
    }

    /// Largest eigenvalue of `A`: the Euclidean smoothness constant.
    pub fn lambda_max(&self) -> f64 {
        quadratic_eigenvalue(self.d, self.d)
    }
}

impl Problem for Quadratic {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn initial_point(&self) -> ParamVector {
        let mut x = ParamVector::zeros(self.layout.clone());
        x.as_mut_slice()[0] = (self.d as f64).sqrt();
        x
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_grad(x).expect("dimension checked by caller").0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.value_grad(x).expect("dimension checked by caller").1
    }

    fn stochastic_gradient(&self, x: &[f64], rng: &mut SampleRng) -> Vec<f64> {
        self.stochastic_grad(x, rng).expect("dimension checked by caller")
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.f_star)
    }

    /// `Δ₀` exact, `L₀ = λ_max(A)`, `L₁ = 0`, `σ² = d·noise_std²`.
    fn constants(&self, spec: &NormSpec) -> Result<ProblemConstants> {
        Ok(ProblemConstants {
            delta0: self.value(self.initial_point().as_slice()) - self.f_star,
            l0: self.lambda_max(),
            l1: 0.0,
            sigma: (self.d as f64).sqrt() * self.noise_std,
            rho: norm_equiv_rho(spec, &self.layout)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MatrixToy {
    rows: usize,
    cols: usize,
    noise_std: f64,
    layout: BlockLayout,
    target: Vec<f64>,
}

impl MatrixToy {
    /// The target `W*` has i.i.d. standard normal entries drawn from `seed`.
    pub fn new(rows: usize, cols: usize, noise_std: f64, seed: u64) -> Result<Self> {
        let layout = BlockLayout::matrix(rows, cols)?;
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise std must be nonnegative, got {noise_std}")));
        }
        let mut rng = SampleRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let target = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self { rows, cols, noise_std, layout, target })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.target.len() {
            return Err(Error::invalid(format!(
                "expected a {}×{} matrix ({} entries), got {}",
                self.rows,
                self.cols,
                self.target.len(),
                w.len()
            )));
        }
        Ok(())
    }

    /// `(W − W*) + ξ·𝟙𝟙ᵀ` with scalar `ξ ~ N(0, noise_std²)`.
    pub fn matrix_toy_grad(&self, w: &[f64], rng: &mut SampleRng) -> Result<Vec<f64>> {
        self.check(w)?;
        let xi = noise(self.noise_std, rng);
        Ok(w.iter().zip(&self.target).map(|(a, b)| a - b + xi).collect())
    }
}

impl Problem for MatrixToy {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::zeros(self.layout.clone())
    }

    fn value(&self, w: &[f64]) -> f64 {
        0.5 * w.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.target).map(|(a, b)| a - b).collect()
    }

    fn stochastic_gradient(&self, w: &[f64], rng: &mut SampleRng) -> Vec<f64> {
        self.matrix_toy_grad(w, rng).expect("shape checked by caller")
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }

    /// The Hessian is the identity, so `‖∇f(X) − ∇f(Y)‖_* ≤ ρ²‖X − Y‖` and
    /// `L₀ = ρ²`.
    fn constants(&self, spec: &NormSpec) -> Result<ProblemConstants> {
        let rho = norm_equiv_rho(spec, &self.layout)?;
        Ok(ProblemConstants {
            delta0: self.value(self.initial_point().as_slice()),
            l0: rho * rho,
            l1: 0.0,
            sigma: ((self.rows * self.cols) as f64).sqrt() * self.noise_std,
            rho,
        })
    }
}
