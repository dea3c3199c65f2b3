//! Norm geometry: linear minimization oracles over unit balls, their dual
//! norms, blockwise composition and the norm-equivalence constant.
//!
//! A parameter vector is a flat `Vec<f64>` partitioned into vector and
//! matrix blocks. Matrix blocks are stored row-major. The primal norm of a
//! blockwise geometry is the maximum of the per-block norms, so the oracle
//! decomposes block by block and the dual norm is the sum of per-block duals.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Relative singular-value cutoff of the exact spectral oracle.
pub const SV_CUTOFF: f64 = 1e-12;

/// Default number of Newton–Schulz iterations.
pub const DEFAULT_NS_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl BlockShape {
    pub fn len(&self) -> usize {
        match *self {
            BlockShape::Vector(n) => n,
            BlockShape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    blocks: Vec<BlockShape>,
    dim: usize,
}

impl BlockLayout {
    pub fn new(blocks: Vec<BlockShape>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("layout needs at least one block"));
        }
        if let Some(i) = blocks.iter().position(BlockShape::is_empty) {
            return Err(Error::invalid(format!("block {i} has zero size")));
        }
        let dim = blocks.iter().map(BlockShape::len).sum();
        Ok(Self { blocks, dim })
    }

    /// A single vector block of length `d`.
    pub fn vector(d: usize) -> Result<Self> {
        Self::new(vec![BlockShape::Vector(d)])
    }

    /// A single `rows × cols` matrix block.
    pub fn matrix(rows: usize, cols: usize) -> Result<Self> {
        Self::new(vec![BlockShape::Matrix { rows, cols }])
    }

    pub fn blocks(&self) -> &[BlockShape] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Iterates over blocks together with their range in the flat buffer.
    pub fn ranges(&self) -> impl Iterator<Item = (BlockShape, Range<usize>)> + '_ {
        self.blocks.iter().scan(0usize, |offset, shape| {
            let start = *offset;
            *offset += shape.len();
            Some((*shape, start..*offset))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
    layout: BlockLayout,
}

impl ParamVector {
    pub fn new(data: Vec<f64>, layout: BlockLayout) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::invalid(format!(
                "data length {} does not match layout dimension {}",
                data.len(),
                layout.dim()
            )));
        }
        ensure_finite(&data, "parameter vector")?;
        Ok(Self { data, layout })
    }

    pub fn zeros(layout: BlockLayout) -> Self {
        Self { data: vec![0.0; layout.dim()], layout }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        euclidean_norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Euclidean,
    MaxAbs,
    Spectral,
}

/// Coefficient schedule of the odd quintic Newton–Schulz map
/// `X ← aX + b(XXᵀ)X + c(XXᵀ)²X`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NsSchedule {
    /// Per-iteration minimax coefficients. Each step is the best odd quintic
    /// approximation of 1 on the singular-value interval left by the previous
    /// step, starting from `[1/80, 1]` (Frobenius-normalised input with
    /// condition number ≤ 10 and smaller dimension ≤ 64). Steps past the
    /// table use the classical order-3 map `(15/8, −10/8, 3/8)`.
    #[default]
    Minimax,
    /// The fixed Muon quintic `(3.4445, −4.7750, 2.0315)`. Fast, but singular
    /// values settle in a band around 1 instead of converging.
    MuonQuintic,
}

const MINIMAX_COEFFS: [[f64; 3]; 5] = [
    [7.994_347_276_623_375, -23.230_029_245_272_53, 17.135_797_998_842_23],
    [3.516_318_092_791_343, -2.634_511_916_373_117, 0.526_611_816_232_396_5],
    [2.502_831_816_059_371, -1.845_079_245_626_61, 0.438_022_135_283_175_35],
    [1.920_119_686_178_254_3, -1.299_268_746_645_787_7, 0.379_959_984_935_468_45],
    [1.875_047_592_063_786_8, -1.250_068_425_249_32, 0.375_020_831_581_845_5],
];
const CLASSICAL_QUINTIC: [f64; 3] = [15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0];
const MUON_QUINTIC: [f64; 3] = [3.4445, -4.7750, 2.0315];

impl NsSchedule {
    pub fn coefficients(&self, step: usize) -> [f64; 3] {
        match self {
            NsSchedule::Minimax => MINIMAX_COEFFS.get(step).copied().unwrap_or(CLASSICAL_QUINTIC),
            NsSchedule::MuonQuintic => MUON_QUINTIC,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpectralBackend {
    Exact,
    NewtonSchulz {
        iterations: usize,
        #[serde(default)]
        schedule: NsSchedule,
    },
}

impl Default for SpectralBackend {
    fn default() -> Self {
        SpectralBackend::NewtonSchulz { iterations: DEFAULT_NS_ITERATIONS, schedule: NsSchedule::Minimax }
    }
}

/// Per-block norm assignment plus the backend used by spectral blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSpec {
    kinds: Vec<NormKind>,
    spectral: SpectralBackend,
}

impl NormSpec {
    pub fn new(kinds: Vec<NormKind>, spectral: SpectralBackend) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::invalid("norm spec needs at least one block"));
        }
        if let SpectralBackend::NewtonSchulz { iterations: 0, .. } = spectral {
            return Err(Error::invalid("Newton–Schulz needs at least one iteration"));
        }
        Ok(Self { kinds, spectral })
    }

    /// The same norm kind on every block of `layout`.
    pub fn uniform(kind: NormKind, layout: &BlockLayout, spectral: SpectralBackend) -> Result<Self> {
        let spec = Self::new(vec![kind; layout.blocks().len()], spectral)?;
        spec.check_layout(layout)?;
        Ok(spec)
    }

    /// Spectral on matrix blocks, Euclidean on vector blocks.
    pub fn spectral_on_matrices(layout: &BlockLayout, spectral: SpectralBackend) -> Result<Self> {
        let kinds = layout
            .blocks()
            .iter()
            .map(|b| match b {
                BlockShape::Matrix { .. } => NormKind::Spectral,
                BlockShape::Vector(_) => NormKind::Euclidean,
            })
            .collect();
        Self::new(kinds, spectral)
    }

    pub fn euclidean(layout: &BlockLayout) -> Self {
        Self { kinds: vec![NormKind::Euclidean; layout.blocks().len()], spectral: SpectralBackend::Exact }
    }

    pub fn kinds(&self) -> &[NormKind] {
        &self.kinds
    }

    pub fn spectral_backend(&self) -> SpectralBackend {
        self.spectral
    }

    pub fn with_spectral_backend(mut self, spectral: SpectralBackend) -> Self {
        self.spectral = spectral;
        self
    }

    pub fn check_layout(&self, layout: &BlockLayout) -> Result<()> {
        if self.kinds.len() != layout.blocks().len() {
            return Err(Error::invalid(format!(
                "norm spec has {} blocks but layout has {}",
                self.kinds.len(),
                layout.blocks().len()
            )));
        }
        for (i, (kind, shape)) in self.kinds.iter().zip(layout.blocks()).enumerate() {
            if *kind == NormKind::Spectral && matches!(shape, BlockShape::Vector(_)) {
                return Err(Error::invalid(format!("spectral norm assigned to vector block {i}")));
            }
        }
        Ok(())
    }
}

pub fn euclidean_norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `−y/‖y‖₂`, or zero for `y = 0`.
pub fn lmo_euclidean(y: &[f64]) -> Result<Vec<f64>> {
    ensure_finite(y, "lmo_euclidean")?;
    let norm = euclidean_norm(y);
    if norm == 0.0 {
        return Ok(vec![0.0; y.len()]);
    }
    Ok(y.iter().map(|v| -v / norm).collect())
}

/// Coordinatewise `−sign(y)`, with `sign(0) = 0`.
pub fn lmo_sign(y: &[f64]) -> Result<Vec<f64>> {
    ensure_finite(y, "lmo_sign")?;
    Ok(y
        .iter()
        .map(|&v| {
            if v > 0.0 {
                -1.0
            } else if v < 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

fn ensure_finite_matrix(y: &DMatrix<f64>, what: &str) -> Result<()> {
    ensure_finite(y.as_slice(), what)
}

/// `−UVᵀ` over the singular directions above `SV_CUTOFF · σ_max`.
pub fn lmo_spectral_exact(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite_matrix(y, "lmo_spectral_exact")?;
    let (rows, cols) = y.shape();
    if y.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(rows, cols));
    }
    // nalgebra's bidiagonal SVD mis-deflates some rank-deficient inputs and
    // returns a wrong leading singular pair; faer's does not
    let svd = faer::Mat::<f64>::from_fn(rows, cols, |r, c| y[(r, c)])
        .thin_svd()
        .map_err(|e| Error::NumericalFailure(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let sigma_max = (0..s.dim()).map(|i| s[i]).fold(0.0, f64::max);
    let cutoff = SV_CUTOFF * sigma_max;
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..s.dim() {
        if s[i] > cutoff {
            for c in 0..cols {
                let vc = v[(c, i)];
                for r in 0..rows {
                    out[(r, c)] -= u[(r, i)] * vc;
                }
            }
        }
    }
    Ok(out)
}

/// Newton–Schulz approximation of [`lmo_spectral_exact`].
///
/// The input is scaled to unit Frobenius norm and the odd quintic map is
/// applied `iters` times on the orientation with the smaller Gram matrix.
pub fn lmo_spectral_ns(y: &DMatrix<f64>, iters: usize, schedule: NsSchedule) -> Result<DMatrix<f64>> {
    ensure_finite_matrix(y, "lmo_spectral_ns")?;
    if iters == 0 {
        return Err(Error::invalid("Newton–Schulz needs at least one iteration"));
    }
    let (rows, cols) = y.shape();
    let fro = y.norm();
    if fro == 0.0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    let transposed = rows > cols;
    let mut x = if transposed { y.transpose() } else { y.clone() };
    x /= fro;
    for step in 0..iters {
        let [a, b, c] = schedule.coefficients(step);
        let gram = &x * x.transpose();
        let poly = &gram * b + &gram * &gram * c;
        x = &x * a + poly * &x;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure("Newton–Schulz iterate diverged".into()));
    }
    x.neg_mut();
    Ok(if transposed { x.transpose() } else { x })
}

fn matrix_view(shape: BlockShape, block: &[f64]) -> DMatrix<f64> {
    match shape {
        BlockShape::Matrix { rows, cols } => DMatrix::from_row_slice(rows, cols, block),
        BlockShape::Vector(n) => DMatrix::from_row_slice(1, n, block),
    }
}

fn write_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    let cols = m.ncols();
    for (r, row) in out.chunks_exact_mut(cols).enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
}

fn singular_values(m: &DMatrix<f64>) -> Result<nalgebra::DVector<f64>> {
    m.clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .map(|svd| svd.singular_values)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))
}

fn block_dual_norm(kind: NormKind, shape: BlockShape, block: &[f64]) -> Result<f64> {
    Ok(match kind {
        NormKind::Euclidean => euclidean_norm(block),
        NormKind::MaxAbs => block.iter().map(|v| v.abs()).sum(),
        NormKind::Spectral => singular_values(&matrix_view(shape, block))?.sum(),
    })
}

fn block_primal_norm(kind: NormKind, shape: BlockShape, block: &[f64]) -> Result<f64> {
    Ok(match kind {
        NormKind::Euclidean => euclidean_norm(block),
        NormKind::MaxAbs => block.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormKind::Spectral => singular_values(&matrix_view(shape, block))?.max(),
    })
}

fn checked_blocks<'a>(
    y: &'a ParamVector,
    spec: &'a NormSpec,
) -> Result<impl Iterator<Item = (NormKind, BlockShape, Range<usize>)> + 'a> {
    spec.check_layout(y.layout())?;
    ensure_finite(y.as_slice(), "parameter vector")?;
    Ok(spec.kinds.iter().zip(y.layout().ranges()).map(|(k, (s, r))| (*k, s, r)))
}

/// Dual of the max-over-blocks norm: the sum of per-block dual norms
/// (ℓ₂ for Euclidean, ℓ₁ for max-abs, nuclear for spectral).
pub fn dual_norm(y: &ParamVector, spec: &NormSpec) -> Result<f64> {
    let mut total = 0.0;
    for (kind, shape, range) in checked_blocks(y, spec)? {
        total += block_dual_norm(kind, shape, &y.as_slice()[range])?;
    }
    Ok(total)
}

/// Max over per-block primal norms (ℓ₂, ℓ∞, operator norm).
pub fn primal_norm(y: &ParamVector, spec: &NormSpec) -> Result<f64> {
    let mut norm: f64 = 0.0;
    for (kind, shape, range) in checked_blocks(y, spec)? {
        norm = norm.max(block_primal_norm(kind, shape, &y.as_slice()[range])?);
    }
    Ok(norm)
}

/// Applies the per-block oracle independently; the result satisfies
/// `⟨y, lmo(y)⟩ = −dual_norm(y)` for exact oracles.
pub fn blockwise_lmo(y: &ParamVector, spec: &NormSpec) -> Result<ParamVector> {
    let mut out = vec![0.0; y.len()];
    for (kind, shape, range) in checked_blocks(y, spec)? {
        let block = &y.as_slice()[range.clone()];
        let dst = &mut out[range];
        match kind {
            NormKind::Euclidean => dst.copy_from_slice(&lmo_euclidean(block)?),
            NormKind::MaxAbs => dst.copy_from_slice(&lmo_sign(block)?),
            NormKind::Spectral => {
                let m = matrix_view(shape, block);
                let dir = match spec.spectral {
                    SpectralBackend::Exact => lmo_spectral_exact(&m)?,
                    SpectralBackend::NewtonSchulz { iterations, schedule } => {
                        lmo_spectral_ns(&m, iterations, schedule)?
                    }
                };
                write_row_major(&dir, dst);
            }
        }
    }
    Ok(ParamVector { data: out, layout: y.layout().clone() })
}

/// `ρ = sup ‖z‖_* / ‖z‖₂` for the blockwise geometry.
///
/// Per block: 1 (Euclidean), `√len` (max-abs), `√min(rows, cols)` (spectral).
/// Blocks combine as `√Σ ρ_b²`: by Cauchy–Schwarz
/// `Σ ρ_b‖z_b‖₂ ≤ √(Σ ρ_b²)·‖z‖₂`, with equality when `‖z_b‖₂ ∝ ρ_b`.
pub fn norm_equiv_rho(spec: &NormSpec, layout: &BlockLayout) -> Result<f64> {
    spec.check_layout(layout)?;
    let sum_sq: f64 = spec
        .kinds
        .iter()
        .zip(layout.blocks())
        .map(|(kind, shape)| match (kind, shape) {
            (NormKind::Euclidean, _) => 1.0,
            (NormKind::MaxAbs, s) => s.len() as f64,
            (NormKind::Spectral, BlockShape::Matrix { rows, cols }) => (*rows).min(*cols) as f64,
            (NormKind::Spectral, BlockShape::Vector(_)) => unreachable!("rejected by check_layout"),
        })
        .sum();
    Ok(sum_sq.sqrt())
}
