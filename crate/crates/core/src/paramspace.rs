//! The feasible parameter set and the matrix arithmetic used by the search.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::ParamError;
use crate::randmat::{symmetrize, BlockSpec, SymBlockMatrix};

/// Default lower eigenvalue bound for [`ConeType::PD`].
pub const DEFAULT_EPS_PD: f64 = 1e-6;

/// Per-block feasible set.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeType {
    /// All of `S^p`.
    FreeSymmetric,
    /// Positive semidefinite matrices.
    PSD,
    /// `{X : lambda_min(X) >= eps_pd}`, the closed stand-in for the open PD cone.
    PD { eps_pd: f64 },
    /// Diagonal matrices with `lo <= diag <= hi`; off-diagonals fixed at zero.
    DiagonalBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl ConeType {
    pub fn pd() -> Self {
        ConeType::PD { eps_pd: DEFAULT_EPS_PD }
    }

    /// A 1x1 box `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Self {
        ConeType::DiagonalBox { lo: vec![lo], hi: vec![hi] }
    }

    fn validate(&self, block: usize, p: usize) -> Result<(), ParamError> {
        let bad = |reason: String| Err(ParamError::InvalidCone { block, reason });
        match self {
            ConeType::PD { eps_pd } if !(*eps_pd > 0.0) => bad(format!("eps_pd = {eps_pd} must be > 0")),
            ConeType::DiagonalBox { lo, hi } => {
                if lo.len() != p || hi.len() != p {
                    return bad(format!("box bounds need {p} entries"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return bad("box requires lo <= hi".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Smallest allowed eigenvalue, for eigenvalue-clamping cones.
    fn eigen_floor(&self) -> Option<f64> {
        match self {
            ConeType::PSD => Some(0.0),
            ConeType::PD { eps_pd } => Some(*eps_pd),
            _ => None,
        }
    }
}

/// The closed convex set `Theta` of block-diagonal symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    spec: BlockSpec,
    cones: Vec<ConeType>,
}

impl ParamSpace {
    pub fn new(spec: BlockSpec, cones: Vec<ConeType>) -> Result<Self, ParamError> {
        if cones.len() != spec.num_blocks() {
            return Err(ParamError::InvalidSpec(format!(
                "{} cones given for {} blocks",
                cones.len(),
                spec.num_blocks()
            )));
        }
        for (i, (c, &p)) in cones.iter().zip(spec.sizes()).enumerate() {
            c.validate(i, p)?;
        }
        Ok(Self { spec, cones })
    }

    /// Every block unconstrained.
    pub fn free(spec: BlockSpec) -> Self {
        let cones = vec![ConeType::FreeSymmetric; spec.num_blocks()];
        Self { spec, cones }
    }

    /// Every block in the same cone.
    pub fn uniform(spec: BlockSpec, cone: ConeType) -> Result<Self, ParamError> {
        let cones = vec![cone; spec.num_blocks()];
        Self::new(spec, cones)
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn cones(&self) -> &[ConeType] {
        &self.cones
    }

    /// Euclidean (Frobenius) projection onto `Theta`, block by block.
    pub fn project(&self, theta: &SymBlockMatrix) -> Result<SymBlockMatrix, ParamError> {
        check_spec(&self.spec, theta.spec())?;
        let mut out = theta.clone();
        for (i, (block, cone)) in out.blocks_mut().iter_mut().zip(&self.cones).enumerate() {
            project_block(block, cone, i)?;
        }
        Ok(out)
    }

    /// Largest constraint violation of `theta`; zero when feasible.
    ///
    /// For eigenvalue cones this is `max(0, floor - lambda_min)`; for boxes it
    /// is the largest bound or off-diagonal violation.
    pub fn violation(&self, theta: &SymBlockMatrix) -> Result<f64, ParamError> {
        check_spec(&self.spec, theta.spec())?;
        let mut worst: f64 = 0.0;
        for (i, (block, cone)) in theta.blocks().iter().zip(&self.cones).enumerate() {
            let v = match cone {
                ConeType::FreeSymmetric => 0.0,
                ConeType::PSD | ConeType::PD { .. } => {
                    let floor = cone.eigen_floor().unwrap_or(0.0);
                    let min = eigenvalues(block, i)?.iter().cloned().fold(f64::INFINITY, f64::min);
                    (floor - min).max(0.0)
                }
                ConeType::DiagonalBox { lo, hi } => {
                    let n = block.nrows();
                    let mut v: f64 = 0.0;
                    for r in 0..n {
                        for c in 0..n {
                            let x = block[(r, c)];
                            if r == c {
                                v = v.max(lo[r] - x).max(x - hi[r]);
                            } else {
                                v = v.max(x.abs());
                            }
                        }
                    }
                    v
                }
            };
            worst = worst.max(v);
        }
        Ok(worst)
    }

    pub fn contains(&self, theta: &SymBlockMatrix, tol: f64) -> bool {
        self.violation(theta).map(|v| v <= tol).unwrap_or(false)
    }
}

pub(crate) fn check_spec(expected: &BlockSpec, found: &BlockSpec) -> Result<(), ParamError> {
    if expected != found {
        return Err(ParamError::SpecMismatch {
            expected: expected.sizes().to_vec(),
            found: found.sizes().to_vec(),
        });
    }
    Ok(())
}

fn eigenvalues(block: &DMatrix<f64>, index: usize) -> Result<Vec<f64>, ParamError> {
    if block.nrows() == 1 {
        return Ok(vec![block[(0, 0)]]);
    }
    let eig = decompose(block, index)?;
    Ok(eig.eigenvalues.iter().cloned().collect())
}

fn decompose(block: &DMatrix<f64>, index: usize) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, ParamError> {
    let n = block.nrows();
    SymmetricEigen::try_new(block.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(ParamError::EigenFailure { block: index })
}

fn project_block(block: &mut DMatrix<f64>, cone: &ConeType, index: usize) -> Result<(), ParamError> {
    match cone {
        ConeType::FreeSymmetric => {}
        ConeType::PSD | ConeType::PD { .. } => {
            let floor = cone.eigen_floor().unwrap_or(0.0);
            if !block.iter().all(|v| v.is_finite()) {
                return Err(ParamError::EigenFailure { block: index });
            }
            if block.nrows() == 1 {
                block[(0, 0)] = block[(0, 0)].max(floor);
                return Ok(());
            }
            let eig = decompose(block, index)?;
            if eig.eigenvalues.iter().all(|&l| l >= floor) {
                return Ok(());
            }
            let clamped = eig.eigenvalues.map(|l| l.max(floor));
            let v = &eig.eigenvectors;
            let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();
            *block = symmetrize(&rebuilt);
        }
        ConeType::DiagonalBox { lo, hi } => {
            let n = block.nrows();
            for r in 0..n {
                for c in 0..n {
                    block[(r, c)] = if r == c { block[(r, c)].clamp(lo[r], hi[r]) } else { 0.0 };
                }
            }
        }
    }
    Ok(())
}

impl SymBlockMatrix {
    /// `a * x + self`.
    pub fn axpy(&self, a: f64, x: &SymBlockMatrix) -> Result<SymBlockMatrix, ParamError> {
        axpy(a, x, self)
    }

    pub fn scale(&self, a: f64) -> SymBlockMatrix {
        let mut out = self.clone();
        for b in out.blocks_mut() {
            *b *= a;
        }
        out
    }

    pub fn frob_norm(&self) -> f64 {
        frob_norm(self)
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &SymBlockMatrix) -> Result<f64, ParamError> {
        check_spec(self.spec(), other.spec())?;
        Ok(self.blocks().iter().zip(other.blocks()).map(|(a, b)| a.dot(b)).sum())
    }
}

/// Blockwise `a * x + y`.
pub fn axpy(a: f64, x: &SymBlockMatrix, y: &SymBlockMatrix) -> Result<SymBlockMatrix, ParamError> {
    check_spec(x.spec(), y.spec())?;
    let mut out = y.clone();
    for (o, xb) in out.blocks_mut().iter_mut().zip(x.blocks()) {
        // Entrywise, so mirrored entries receive identical operations.
        o.zip_apply(xb, |o, xv| *o += a * xv);
    }
    Ok(out)
}

/// `||x||_F`, accumulated block by block.
pub fn frob_norm(x: &SymBlockMatrix) -> f64 {
    x.blocks().iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

pub fn frob_dist(x: &SymBlockMatrix, y: &SymBlockMatrix) -> Result<f64, ParamError> {
    check_spec(x.spec(), y.spec())?;
    Ok(x.blocks()
        .iter()
        .zip(y.blocks())
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        .sqrt())
}
