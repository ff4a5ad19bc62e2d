//! Block-diagonal symmetric matrices and Gaussian Orthogonal Ensemble sampling.
//!
//! Random streams are [`ChaCha8Rng`] (a counter-based generator) seeded from an
//! explicit 64-bit seed; normal variates come from `rand_distr`'s ziggurat
//! sampler. Ports to other languages should match the distributions and the
//! moment tests, not the exact bit streams.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::ParamError;
use crate::par;

/// The random stream used everywhere in the crate.
pub type SearchRng = ChaCha8Rng;

/// Creates the crate's random stream from a seed.
pub fn rng_from_seed(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ordered block dimensions `p_1..p_rho` of a block-diagonal matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    sizes: Vec<usize>,
}

impl BlockSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self, ParamError> {
        if sizes.is_empty() {
            return Err(ParamError::InvalidSpec("at least one block is required".into()));
        }
        if let Some(i) = sizes.iter().position(|&p| p == 0) {
            return Err(ParamError::InvalidSpec(format!("block {i} has dimension 0")));
        }
        Ok(Self { sizes })
    }

    /// `count` scalar (1x1) blocks.
    pub fn scalars(count: usize) -> Result<Self, ParamError> {
        Self::new(vec![1; count])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of blocks.
    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Total dimension `p = sum p_i`.
    pub fn total_dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Number of free coordinates, `sum p_i (p_i + 1) / 2`.
    pub fn free_dim(&self) -> usize {
        self.sizes.iter().map(|p| p * (p + 1) / 2).sum()
    }
}

impl std::fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl std::str::FromStr for BlockSpec {
    type Err = ParamError;

    /// Parses `"2,3"`, `"(2,3)"` or `"2x3"`-free lists of block sizes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let sizes = trimmed
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| ParamError::InvalidSpec(format!("cannot parse block size {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(sizes)
    }
}

/// A symmetric block-diagonal matrix `blkdiag(theta_1, ..., theta_rho)`.
///
/// Only the diagonal blocks are stored. Every block is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBlockMatrix {
    spec: BlockSpec,
    blocks: Vec<DMatrix<f64>>,
}

impl SymBlockMatrix {
    /// Builds a matrix from explicit blocks, checking shapes and exact symmetry.
    pub fn new(spec: BlockSpec, blocks: Vec<DMatrix<f64>>) -> Result<Self, ParamError> {
        if blocks.len() != spec.num_blocks() {
            return Err(ParamError::InvalidSpec(format!(
                "{} blocks given for spec {spec}",
                blocks.len()
            )));
        }
        for (i, (b, &p)) in blocks.iter().zip(spec.sizes()).enumerate() {
            if b.nrows() != p || b.ncols() != p {
                return Err(ParamError::InvalidSpec(format!(
                    "block {i} is {}x{}, expected {p}x{p}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b != &b.transpose() {
                return Err(ParamError::NotSymmetric { block: i });
            }
        }
        Ok(Self { spec, blocks })
    }

    /// Builds blocks and symmetrizes each one as `(B + B^T) / 2`.
    pub fn from_blocks_symmetrized(
        spec: BlockSpec,
        blocks: Vec<DMatrix<f64>>,
    ) -> Result<Self, ParamError> {
        let blocks = blocks.into_iter().map(|b| symmetrize(&b)).collect();
        Self::new(spec, blocks)
    }

    pub fn zeros(spec: &BlockSpec) -> Self {
        let blocks = spec.sizes().iter().map(|&p| DMatrix::zeros(p, p)).collect();
        Self { spec: spec.clone(), blocks }
    }

    pub fn identity(spec: &BlockSpec) -> Self {
        let blocks = spec.sizes().iter().map(|&p| DMatrix::identity(p, p)).collect();
        Self { spec: spec.clone(), blocks }
    }

    /// One 1x1 block per value.
    pub fn from_scalars(values: &[f64]) -> Result<Self, ParamError> {
        let spec = BlockSpec::scalars(values.len())?;
        let blocks = values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        Ok(Self { spec, blocks })
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    /// Value of a 1x1 block.
    pub fn scalar(&self, i: usize) -> f64 {
        self.blocks[i][(0, 0)]
    }

    /// Assembles the full `p x p` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.spec.total_dim();
        let mut out = DMatrix::zeros(p, p);
        let mut offset = 0;
        for b in &self.blocks {
            let n = b.nrows();
            out.view_mut((offset, offset), (n, n)).copy_from(b);
            offset += n;
        }
        out
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.blocks
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn symmetrize(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = b[(i, i)];
        for j in (i + 1)..n {
            let v = 0.5 * (b[(i, j)] + b[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Draws `U` from the GOE on `S^p`: `N(0,1)` diagonal, `N(0,1/2)` off-diagonal,
/// mirrored.
pub fn sample_goe<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let off_scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = DMatrix::zeros(p, p);
    for i in 0..p {
        u[(i, i)] = rng.sample::<f64, _>(StandardNormal);
        for j in (i + 1)..p {
            let v = off_scale * rng.sample::<f64, _>(StandardNormal);
            u[(i, j)] = v;
            u[(j, i)] = v;
        }
    }
    u
}

/// Draws `M^U = blkdiag(U^1, ..., U^rho)` with independent GOE blocks.
pub fn sample_block<R: Rng + ?Sized>(spec: &BlockSpec, rng: &mut R) -> SymBlockMatrix {
    let blocks = spec.sizes().iter().map(|&p| sample_goe(p, rng)).collect();
    SymBlockMatrix { spec: spec.clone(), blocks }
}

/// Closed-form moments of `||M^U||_F` for a block structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormMoments {
    /// Upper bound on `E ||M||_F`, equal to `sqrt(m2)`.
    pub m1_bound: f64,
    pub m2: f64,
    pub m4: f64,
    /// `m2` as an exact integer.
    pub m2_exact: u128,
    /// `m4` as an exact integer.
    pub m4_exact: u128,
}

/// `E||M||^2_F` and `E||M||^4_F` for a block-diagonal GOE matrix.
///
/// `m2 = 1/2 sum (p_i^2 + p_i)`, and
/// `m4 = 1/4 sum (p_i^4 + 2p_i^3 + 5p_i^2 + 4p_i) + 1/2 sum_{i<j} (p_i^2+p_i)(p_j^2+p_j)`.
/// Each summand is an integer, so everything is accumulated in `u128`.
pub fn moments(spec: &BlockSpec) -> NormMoments {
    let sizes: Vec<u128> = spec.sizes().iter().map(|&p| p as u128).collect();
    let tri: Vec<u128> = sizes.iter().map(|p| p * p + p).collect();
    let m2: u128 = tri.iter().sum::<u128>() / 2;
    let diag: u128 = sizes
        .iter()
        .map(|p| (p * p * p * p + 2 * p * p * p + 5 * p * p + 4 * p) / 4)
        .sum();
    let mut cross: u128 = 0;
    for i in 0..tri.len() {
        for j in (i + 1)..tri.len() {
            cross += tri[i] * tri[j] / 2;
        }
    }
    let m4 = diag + cross;
    NormMoments {
        m1_bound: (m2 as f64).sqrt(),
        m2: m2 as f64,
        m4: m4 as f64,
        m2_exact: m2,
        m4_exact: m4,
    }
}

/// Fourth moments used by earlier bounds: treating `theta` as one full
/// symmetric matrix, and as a vector of its lower-triangular entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceM4 {
    pub full_matrix: f64,
    pub vector: f64,
}

pub fn reference_m4(spec: &BlockSpec) -> ReferenceM4 {
    let p = spec.total_dim() as u128;
    let full = (p * p * p * p + 2 * p * p * p + 5 * p * p + 4 * p) / 4;
    let d = spec.free_dim() as u128 + 4;
    ReferenceM4 { full_matrix: full as f64, vector: (d * d) as f64 }
}

/// Monte-Carlo estimate of the Frobenius-norm moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMoments {
    pub samples: usize,
    pub mean_sq: f64,
    /// Standard error of `mean_sq`.
    pub std_err_sq: f64,
    pub mean_fourth: f64,
}

const MC_CHUNK: usize = 8192;

/// Estimates `E||M||^2_F` and `E||M||^4_F` by sampling.
///
/// Samples are split into fixed chunks, each drawn from its own ChaCha stream,
/// so the result does not depend on the number of worker threads.
pub fn empirical_moments(
    spec: &BlockSpec,
    samples: usize,
    seed: u64,
    exec: par::Execution,
) -> EmpiricalMoments {
    let chunks = samples.div_ceil(MC_CHUNK);
    let sums = par::map_indexed(exec, chunks, |c| {
        let mut rng = rng_from_seed(seed);
        rng.set_stream(c as u64);
        let n = MC_CHUNK.min(samples - c * MC_CHUNK);
        let (mut s2, mut s4) = (0.0, 0.0);
        for _ in 0..n {
            let m = sample_block(spec, &mut rng);
            let sq: f64 = m.blocks().iter().map(|b| b.norm_squared()).sum();
            s2 += sq;
            s4 += sq * sq;
        }
        (s2, s4)
    });
    let (s2, s4) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean_sq = s2 / n;
    let mean_fourth = s4 / n;
    let var = (mean_fourth - mean_sq * mean_sq) * n / (n - 1.0);
    EmpiricalMoments { samples, mean_sq, std_err_sq: (var / n).sqrt(), mean_fourth }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &[usize]) -> BlockSpec {
        BlockSpec::new(s.to_vec()).unwrap()
    }

    #[test]
    fn rejects_empty_and_zero_blocks() {
        assert!(BlockSpec::new(vec![]).is_err());
        assert!(BlockSpec::new(vec![2, 0]).is_err());
        assert_eq!("(2,3)".parse::<BlockSpec>().unwrap(), spec(&[2, 3]));
        assert_eq!("5".parse::<BlockSpec>().unwrap().total_dim(), 5);
    }

    #[test]
    fn goe_scalar_is_standard_normal() {
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_goe(1, &mut rng)[(0, 0)]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn goe_is_symmetric_and_deterministic() {
        let a = sample_goe(5, &mut rng_from_seed(3));
        let b = sample_goe(5, &mut rng_from_seed(3));
        assert_eq!(a, a.transpose());
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn goe_2x2_second_moment() {
        let mut rng = rng_from_seed(5);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| sample_goe(2, &mut rng).norm_squared()).sum();
        let mean = s / n as f64;
        assert!((mean - 3.0).abs() < 0.02 * 3.0, "mean {mean}");
    }

    #[test]
    fn independent_scalar_blocks_are_uncorrelated() {
        let sp = spec(&[1, 1]);
        let mut rng = rng_from_seed(8);
        let n = 100_000;
        let cross: f64 = (0..n)
            .map(|_| {
                let m = sample_block(&sp, &mut rng);
                m.scalar(0) * m.scalar(1)
            })
            .sum::<f64>()
            / n as f64;
        assert!(cross.abs() < 0.02, "cross {cross}");
    }

    #[test]
    fn block_second_moment_2_3() {
        let e = empirical_moments(&spec(&[2, 3]), 100_000, 17, par::Execution::default());
        assert!((e.mean_sq - 9.0).abs() < 0.02 * 9.0, "{e:?}");
    }

    #[test]
    fn closed_form_moments() {
        let m = moments(&spec(&[1]));
        assert_eq!((m.m2_exact, m.m4_exact), (1, 3));
        let m = moments(&spec(&[2]));
        assert_eq!((m.m2_exact, m.m4_exact), (3, 15));
        let m = moments(&spec(&[1, 1]));
        assert_eq!(m.m2_exact, 2);
        // ||M||^2 is chi-squared with 2 degrees of freedom: E = 2*4 = 8.
        assert_eq!(m.m4_exact, 8);
        assert_eq!(moments(&spec(&[2, 3])).m2_exact, 9);
        assert!((moments(&spec(&[2, 3])).m1_bound - 3.0).abs() < 1e-15);
    }

    #[test]
    fn reference_moments() {
        let r = reference_m4(&spec(&[1, 1]));
        assert_eq!((r.full_matrix, r.vector), (15.0, 36.0));
        assert_eq!(reference_m4(&spec(&[2])).full_matrix, moments(&spec(&[2])).m4);
        assert_eq!(reference_m4(&spec(&[3, 3])).full_matrix, 483.0);
    }

    #[test]
    fn empirical_moments_independent_of_execution() {
        let sp = spec(&[2, 1]);
        let a = empirical_moments(&sp, 20_000, 9, par::Execution::Sequential);
        let b = empirical_moments(&sp, 20_000, 9, par::Execution::default());
        assert_eq!(a, b);
    }
}
