//! Inexact elastic shape matching for piecewise linear curves and triangle
//! meshes.
//!
//! A deforming copy of a template shape is driven onto a target by
//! minimizing the squared L2 distance between square root normal fields
//! (the elastic term, [`srnf`]) plus a kernel varifold fidelity to the
//! target ([`varifold`]), weighted by an adaptively growing multiplier
//! ([`matching`]). Minimization uses L-BFGS with analytic gradients
//! ([`optimize`]). Batch distance matrices and classical MDS embeddings
//! live in [`pipeline`]; SRNF inversion and curve interpolation in
//! [`srnf`].

pub mod accum;
pub mod error;
pub mod matching;
pub mod optimize;
pub mod pipeline;
pub mod shape;
pub mod srnf;
pub mod synthetic;
pub mod varifold;

pub use error::{Error, Result};
pub use matching::{
    energy, match_shapes, match_to_atoms, match_to_atoms_from, unparametrized_distance,
    MatchConfig, MatchRecord, MatchResult, StageRecord,
};
pub use optimize::{lbfgs_minimize, OptimProblem, OptimReport, OptimSettings, Termination};
pub use pipeline::{classical_mds, distance_matrix, DistanceMatrixRecord, MdsEmbedding, PairRecord};
pub use shape::io::{read_shape, write_shape, Shape, ShapeFormat};
pub use shape::{CellGeometry, DiscreteShape, Polyline, TriMesh, Vec2, Vec3};
pub use srnf::{
    srnf, srnf_dist_sq, srnf_dist_sq_grad, srnf_interpolate, srnf_invert_closed, srnf_invert_open,
    SrnfField,
};
pub use varifold::{
    atoms, var_dist_sq, var_dist_sq_grad, var_gram, var_product, DirectionKernel, KernelConfig,
    PositionKernel, VarifoldAtoms,
};
