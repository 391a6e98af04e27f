//! 1-D Dirichlet problem `-(a y')' - c y = u` on a uniform mesh of (0, 1).
//!
//! The estimate `|h| <= C |phi|` for solutions of the adjoint equation
//! `L phi = h` is measured in one of two space pairs: both sides in `L^2`,
//! or `phi` in `H^1_0` and `h` in `H^-1`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::diagnostics::{Constant, EstimateReport};
use crate::error::{FcError, Result};
use crate::spaces::{stiffness_matrix, LinearMap, SpaceDescriptor, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpacePair {
    #[serde(rename = "l2-l2")]
    L2L2,
    #[serde(rename = "h1-h-1")]
    H1Hm1,
}

impl fmt::Display for SpacePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpacePair::L2L2 => "l2-l2",
            SpacePair::H1Hm1 => "h1-h-1",
        })
    }
}

impl FromStr for SpacePair {
    type Err = FcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2-l2" | "l2" => Ok(SpacePair::L2L2),
            "h1-h-1" | "h1" => Ok(SpacePair::H1Hm1),
            other => Err(FcError::Config(format!("unknown space pair {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EllipticSystem {
    nodes: usize,
    h: f64,
    /// Diffusion coefficient at the cell midpoints `x_{i + 1/2}`, i = 0..=N.
    diffusion: Vec<f64>,
    potential: Vec<f64>,
    pair: SpacePair,
}

impl EllipticSystem {
    /// `nodes` interior nodes; `a` must be positive on [0, 1].
    pub fn new(nodes: usize, a: impl Fn(f64) -> f64, c: impl Fn(f64) -> f64, pair: SpacePair) -> Result<Self> {
        if nodes == 0 {
            return Err(FcError::Config("at least one interior node is required".into()));
        }
        let h = 1.0 / (nodes + 1) as f64;
        let diffusion: Vec<f64> = (0..=nodes).map(|i| a((i as f64 + 0.5) * h)).collect();
        if diffusion.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(FcError::Config("diffusion coefficient must be positive and finite".into()));
        }
        let potential: Vec<f64> = (1..=nodes).map(|i| c(i as f64 * h)).collect();
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(FcError::Config("potential must be finite".into()));
        }
        Ok(Self {
            nodes,
            h,
            diffusion,
            potential,
            pair,
        })
    }

    /// `a = 1`, `c = 0`.
    pub fn laplacian(nodes: usize, pair: SpacePair) -> Result<Self> {
        Self::new(nodes, |_| 1.0, |_| 0.0, pair)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn pair(&self) -> SpacePair {
        self.pair
    }

    /// Finite-difference matrix of `-(a y')' - c y`.
    pub fn operator(&self) -> DMatrix<f64> {
        let n = self.nodes;
        let h2 = self.h * self.h;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (self.diffusion[i] + self.diffusion[i + 1]) / h2 - self.potential[i]
            } else if j == i + 1 {
                -self.diffusion[i + 1] / h2
            } else if i == j + 1 {
                -self.diffusion[i] / h2
            } else {
                0.0
            }
        })
    }

    /// Spaces of the adjoint state `phi` and of the source `h`.
    pub fn spaces(&self) -> Result<(SpaceDescriptor, SpaceDescriptor)> {
        let (n, h) = (self.nodes, self.h);
        Ok(match self.pair {
            SpacePair::L2L2 => (SpaceDescriptor::scaled("L2", n, h)?, SpaceDescriptor::scaled("L2", n, h)?),
            SpacePair::H1Hm1 => {
                let k = stiffness_matrix(n, h);
                let kinv = k
                    .clone()
                    .cholesky()
                    .ok_or_else(|| FcError::Config("stiffness matrix is not positive definite".into()))?
                    .inverse();
                (
                    SpaceDescriptor::new("H1_0", k)?,
                    SpaceDescriptor::new("H-1", kinv * (h * h))?,
                )
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticReport {
    pub nodes: usize,
    pub mesh_size: f64,
    pub pair: SpacePair,
    /// Best `C` in `|h| <= C |phi|`; the profile lists the singular values
    /// of the solution map `h -> phi`.
    pub estimate: EstimateReport,
    pub min_eigenvalue: f64,
    pub indefinite: bool,
    pub warnings: Vec<String>,
}

pub fn elliptic_estimate_constant(sys: &EllipticSystem) -> Result<EllipticReport> {
    let l = sys.operator();
    let (phi_space, h_space) = sys.spaces()?;
    let forward = LinearMap::new(l.clone(), phi_space, h_space)?;
    let sigmas = forward.singular_values();
    let eig = l.symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    let mut warnings = Vec::new();
    let indefinite = min_eigenvalue <= 0.0;
    if indefinite {
        warnings.push(format!(
            "assembled operator is not positive definite (smallest eigenvalue {min_eigenvalue:e})"
        ));
    }
    let smax = sigmas[0];
    let singular = sigmas.iter().filter(|s| **s <= RANK_TOL * smax).count();
    if singular > 0 {
        warnings.push(format!("operator has a {singular}-dimensional numerical kernel"));
    }
    let profile: Vec<f64> = sigmas.iter().rev().map(|s| 1.0 / s).collect();
    Ok(EllipticReport {
        nodes: sys.nodes(),
        mesh_size: sys.mesh_size(),
        pair: sys.pair(),
        estimate: EstimateReport {
            constant: Constant::Finite(smax),
            kernel_dim: singular,
            sigma_profile: profile,
        },
        min_eigenvalue,
        indefinite,
        warnings,
    })
}
