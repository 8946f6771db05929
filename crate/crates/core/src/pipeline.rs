//! Batch tooling: pairwise distance matrices and classical MDS embeddings.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{match_shapes, MatchConfig};
use crate::shape::DiscreteShape;

/// Diagnostics of one ordered matching pair inside a distance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub from: usize,
    pub to: usize,
    /// `None` when the pair failed; the matrix entry is NaN then.
    pub distance: Option<f64>,
    pub residual_rel: f64,
    pub stages: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub error: Option<String>,
}

/// All-pairs distances plus their symmetrization and per-pair diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceMatrixRecord {
    pub ids: Vec<String>,
    /// Raw asymmetric matrix `raw[i][j] = d(shape_i -> shape_j)`.
    pub raw: Vec<Vec<f64>>,
    /// `(raw + raw^T) / 2`, zero diagonal by construction.
    pub symmetrized: Vec<Vec<f64>>,
    pub pairs: Vec<PairRecord>,
}

impl DistanceMatrixRecord {
    pub fn failed_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| p.error.is_some()).count()
    }
}

/// Matches every ordered pair and assembles the distance matrix.
///
/// Pairs run concurrently; the reduction order is fixed by the pair index,
/// so results do not depend on the thread count. A failing pair is recorded
/// with its error and leaves a NaN entry instead of failing the batch.
pub fn distance_matrix<const D: usize, S: DiscreteShape<D>>(
    shapes: &[(String, S)],
    config: &MatchConfig,
) -> Result<DistanceMatrixRecord> {
    if shapes.len() < 2 {
        return Err(Error::ConfigError(format!(
            "a distance matrix needs at least 2 shapes, got {}",
            shapes.len()
        )));
    }
    for (i, (id, _)) in shapes.iter().enumerate() {
        if shapes[..i].iter().any(|(other, _)| other == id) {
            return Err(Error::ConfigError(format!("duplicate shape identifier {id:?}")));
        }
    }
    config.validate()?;

    let n = shapes.len();
    let index_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let pairs: Vec<PairRecord> = index_pairs
        .par_iter()
        .map(|&(i, j)| match match_shapes(&shapes[i].1, &shapes[j].1, config) {
            Ok(result) => PairRecord {
                from: i,
                to: j,
                distance: Some(result.final_srnf_dist),
                residual_rel: result.final_residual_rel,
                stages: result.stages.len(),
                converged: result.converged,
                error: None,
            },
            Err(e) => PairRecord {
                from: i,
                to: j,
                distance: None,
                residual_rel: f64::NAN,
                stages: 0,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut raw = vec![vec![0.0; n]; n];
    for p in &pairs {
        raw[p.from][p.to] = p.distance.unwrap_or(f64::NAN);
    }
    let mut symmetrized = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            symmetrized[i][j] = if i == j {
                0.0
            } else {
                0.5 * (raw[i][j] + raw[j][i])
            };
        }
    }
    Ok(DistanceMatrixRecord {
        ids: shapes.iter().map(|(id, _)| id.clone()).collect(),
        raw,
        symmetrized,
        pairs,
    })
}

/// Classical MDS embedding of a distance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdsEmbedding {
    /// One row of `dim` coordinates per input item.
    pub coordinates: Vec<Vec<f64>>,
    /// All eigenvalues of the doubly centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Number of requested dimensions whose eigenvalue was negative and
    /// clamped to zero.
    pub clamped: usize,
}

/// Classical (Torgerson) MDS: double-center `-1/2 D^2`, take the top `dim`
/// eigenpairs, scale eigenvectors by the square roots of the eigenvalues.
///
/// Negative eigenvalues among the selected ones are clamped to zero with a
/// warning. The input must be symmetric and nonnegative with zero diagonal.
pub fn classical_mds(distances: &[Vec<f64>], dim: usize) -> Result<MdsEmbedding> {
    let n = distances.len();
    if n == 0 || distances.iter().any(|row| row.len() != n) {
        return Err(Error::NonSymmetricInput("matrix is not square".into()));
    }
    if dim == 0 || dim > n {
        return Err(Error::ConfigError(format!(
            "embedding dimension {dim} out of range for a {n}x{n} matrix"
        )));
    }
    let scale = distances
        .iter()
        .flatten()
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * scale.max(1.0);
    for i in 0..n {
        if distances[i][i].abs() > tol {
            return Err(Error::NonSymmetricInput(format!(
                "diagonal entry ({i},{i}) = {} is not zero",
                distances[i][i]
            )));
        }
        for j in 0..n {
            if !distances[i][j].is_finite() {
                return Err(Error::NonSymmetricInput(format!(
                    "entry ({i},{j}) is not finite"
                )));
            }
            if distances[i][j] < -tol {
                return Err(Error::NonSymmetricInput(format!(
                    "entry ({i},{j}) = {} is negative",
                    distances[i][j]
                )));
            }
            if (distances[i][j] - distances[j][i]).abs() > tol {
                return Err(Error::NonSymmetricInput(format!(
                    "entries ({i},{j}) and ({j},{i}) differ: {} vs {}",
                    distances[i][j], distances[j][i]
                )));
            }
        }
    }

    // B = -1/2 J D^2 J via double centering of the squared distances
    let mut b = DMatrix::zeros(n, n);
    let sq = |i: usize, j: usize| distances[i][j] * distances[i][j];
    let row_mean: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| sq(i, j)).sum::<f64>() / n as f64)
        .collect();
    let grand_mean = row_mean.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (sq(i, j) - row_mean[i] - row_mean[j] + grand_mean);
        }
    }

    let eigen = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eigen.eigenvalues[c]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eigen.eigenvalues[k]).collect();

    let mut coordinates = vec![vec![0.0; dim]; n];
    let mut clamped = 0;
    for (axis, &k) in order.iter().take(dim).enumerate() {
        let lambda = eigen.eigenvalues[k];
        if lambda <= 0.0 {
            if lambda < 0.0 {
                log::warn!("classical MDS: eigenvalue {lambda:.3e} clamped to zero");
                clamped += 1;
            }
            continue;
        }
        let column = eigen.eigenvectors.column(k);
        // canonical sign: the entry of largest magnitude is positive
        let lead = column
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let sign = if column[lead] < 0.0 { -1.0 } else { 1.0 };
        let factor = sign * lambda.sqrt();
        for i in 0..n {
            coordinates[i][axis] = factor * column[i];
        }
    }
    Ok(MdsEmbedding {
        coordinates,
        eigenvalues,
        clamped,
    })
}
