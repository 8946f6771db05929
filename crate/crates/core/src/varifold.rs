//! Kernel varifold distances between discrete shapes.
//!
//! A shape is represented by one weighted Dirac atom per cell, carrying the
//! cell center, unit normal, measure and optional scalar signal. Two shapes
//! are compared through the dual norm of a reproducing kernel on
//! position x direction (x signal) space:
//!
//! ```text
//! <mu_a, mu_b> = sum_i sum_j w_i w_j k_pos(c_i, c_j) k_dir(n_i, n_j) [k_sig(s_i, s_j)]
//! dist^2       = <mu_a, mu_a> - 2 <mu_a, mu_b> + <mu_b, mu_b>
//! ```
//!
//! This needs no correspondence between the shapes: cell counts, meshings
//! and even topologies may differ. Double sums are evaluated brute force
//! over fixed index tiles with compensated summation, so results are
//! bit-identical for any thread count.

use nalgebra::{DMatrix, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::NeumaierSum;
use crate::error::{Error, Result};
use crate::shape::DiscreteShape;

/// Rows per parallel tile in kernel double sums. Fixed so that the reduction
/// order never depends on the thread count.
const TILE: usize = 64;

/// Position kernel family; the scale lives in [`KernelConfig::sigma`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionKernel {
    /// `exp(-|x-y|^2 / sigma^2)`
    Gaussian,
    /// `1 / (1 + |x-y|^2 / sigma^2)`
    Cauchy,
}

/// Direction kernel acting on pairs of unit normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionKernel {
    /// `<u, v>`: oriented varifold, sensitive to orientation flips.
    Linear,
    /// `<u, v>^2`: orientation-blind (unoriented varifold).
    Squared,
}

/// Kernel defining the RKHS the varifolds are embedded into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub position: PositionKernel,
    /// Position kernel scale, in length units.
    pub sigma: f64,
    pub direction: DirectionKernel,
    /// Optional Gaussian signal kernel scale, in signal units. When set,
    /// both compared shapes must carry signals.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub signal_scale: Option<f64>,
}

impl KernelConfig {
    pub fn gaussian_linear(sigma: f64) -> Self {
        Self {
            position: PositionKernel::Gaussian,
            sigma,
            direction: DirectionKernel::Linear,
            signal_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::ConfigError(format!(
                "position kernel scale must be positive, got {}",
                self.sigma
            )));
        }
        if let Some(tau) = self.signal_scale {
            if !(tau > 0.0) {
                return Err(Error::ConfigError(format!(
                    "signal kernel scale must be positive, got {tau}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    fn pos(&self, dist_sq: f64) -> f64 {
        let r = dist_sq / (self.sigma * self.sigma);
        match self.position {
            PositionKernel::Gaussian => (-r).exp(),
            PositionKernel::Cauchy => 1.0 / (1.0 + r),
        }
    }

    /// Scalar `phi` with `d k_pos / d x = phi * (x - y)`.
    #[inline]
    fn pos_grad_factor(&self, dist_sq: f64) -> f64 {
        let inv_s2 = 1.0 / (self.sigma * self.sigma);
        match self.position {
            PositionKernel::Gaussian => -2.0 * inv_s2 * self.pos(dist_sq),
            PositionKernel::Cauchy => {
                let k = self.pos(dist_sq);
                -2.0 * inv_s2 * k * k
            }
        }
    }

    #[inline]
    fn dir(&self, dot: f64) -> f64 {
        match self.direction {
            DirectionKernel::Linear => dot,
            DirectionKernel::Squared => dot * dot,
        }
    }

    /// Scalar `psi` with `d k_dir / d u = psi * v`.
    #[inline]
    fn dir_grad_factor(&self, dot: f64) -> f64 {
        match self.direction {
            DirectionKernel::Linear => 1.0,
            DirectionKernel::Squared => 2.0 * dot,
        }
    }

    #[inline]
    fn sig(&self, ds: f64) -> f64 {
        match self.signal_scale {
            Some(tau) => (-(ds * ds) / (tau * tau)).exp(),
            None => 1.0,
        }
    }
}

/// Weighted Dirac atoms of a shape: one per cell at the cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct VarifoldAtoms<const D: usize> {
    centers: Vec<SVector<f64, D>>,
    normals: Vec<SVector<f64, D>>,
    weights: Vec<f64>,
    signal: Option<Vec<f64>>,
}

impl<const D: usize> VarifoldAtoms<D> {
    pub fn new(
        centers: Vec<SVector<f64, D>>,
        normals: Vec<SVector<f64, D>>,
        weights: Vec<f64>,
        signal: Option<Vec<f64>>,
    ) -> Result<Self> {
        if centers.len() != normals.len() || centers.len() != weights.len() {
            return Err(Error::InvalidShape(format!(
                "atom component counts differ: {} centers, {} normals, {} weights",
                centers.len(),
                normals.len(),
                weights.len()
            )));
        }
        if let Some(sig) = &signal {
            if sig.len() != centers.len() {
                return Err(Error::SignalMismatch(format!(
                    "{} signal values for {} atoms",
                    sig.len(),
                    centers.len()
                )));
            }
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidShape(format!(
                    "normal {i} has norm {}, expected 1",
                    n.norm()
                )));
            }
        }
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::InvalidShape(format!(
                "weight {i} is {}, expected positive",
                weights[i]
            )));
        }
        Ok(Self {
            centers,
            normals,
            weights,
            signal,
        })
    }

    /// Empty atom set (the zero varifold).
    pub fn empty() -> Self {
        Self {
            centers: Vec::new(),
            normals: Vec::new(),
            weights: Vec::new(),
            signal: None,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[SVector<f64, D>] {
        &self.centers
    }

    pub fn normals(&self) -> &[SVector<f64, D>] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn signal(&self) -> Option<&[f64]> {
        self.signal.as_deref()
    }

    pub fn total_weight(&self) -> f64 {
        crate::accum::compensated_sum(self.weights.iter().copied())
    }

    /// Concatenates atom sets, e.g. to build a multi-component target.
    /// Either every part carries a signal or none does.
    pub fn merge(parts: &[&Self]) -> Result<Self> {
        let with_signal = parts.iter().filter(|p| p.signal.is_some()).count();
        if with_signal != 0 && with_signal != parts.len() {
            return Err(Error::SignalMismatch(
                "cannot merge atom sets where only some carry signals".into(),
            ));
        }
        let mut out = Self::empty();
        if with_signal > 0 {
            out.signal = Some(Vec::new());
        }
        for p in parts {
            out.centers.extend_from_slice(&p.centers);
            out.normals.extend_from_slice(&p.normals);
            out.weights.extend_from_slice(&p.weights);
            if let (Some(acc), Some(sig)) = (out.signal.as_mut(), p.signal.as_ref()) {
                acc.extend_from_slice(sig);
            }
        }
        Ok(out)
    }

    /// Spatial extent of the atoms: twice the largest distance from the
    /// weight-averaged center to any atom center.
    ///
    /// Plays the role of a bounding-box diagonal as a length-scale reference
    /// but, unlike a box, is invariant under rotations, which keeps kernel
    /// schedules derived from it rigid-motion equivariant.
    pub fn spatial_extent(&self) -> f64 {
        if self.centers.is_empty() {
            return 0.0;
        }
        let total = self.total_weight();
        let mut centroid = SVector::<f64, D>::zeros();
        for (c, &w) in self.centers.iter().zip(&self.weights) {
            centroid += c * w;
        }
        centroid /= total;
        2.0 * self
            .centers
            .iter()
            .map(|c| (c - centroid).norm())
            .fold(0.0, f64::max)
    }
}

/// Extracts the varifold atoms of a shape (midpoint/centroid quadrature,
/// one atom per cell).
pub fn atoms<const D: usize, S: DiscreteShape<D>>(shape: &S) -> Result<VarifoldAtoms<D>> {
    let geom = shape.cell_geometry()?;
    VarifoldAtoms::new(
        geom.centers,
        geom.normals,
        geom.measures,
        shape.signal().map(|s| s.to_vec()),
    )
}

fn check_signals<const D: usize>(
    kernel: &KernelConfig,
    a: &VarifoldAtoms<D>,
    b: &VarifoldAtoms<D>,
) -> Result<()> {
    kernel.validate()?;
    if kernel.signal_scale.is_some() && (a.signal.is_none() || b.signal.is_none()) {
        return Err(Error::SignalMismatch(
            "kernel has a signal term but a shape carries no signal".into(),
        ));
    }
    Ok(())
}

/// RKHS dual pairing `<mu_a, mu_b>`.
pub fn var_product<const D: usize>(
    a: &VarifoldAtoms<D>,
    b: &VarifoldAtoms<D>,
    kernel: &KernelConfig,
) -> Result<f64> {
    check_signals(kernel, a, b)?;
    Ok(product_unchecked(a, b, kernel))
}

fn product_unchecked<const D: usize>(
    a: &VarifoldAtoms<D>,
    b: &VarifoldAtoms<D>,
    kernel: &KernelConfig,
) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let rows: Vec<usize> = (0..a.len()).step_by(TILE).collect();
    let partials: Vec<f64> = rows
        .par_iter()
        .map(|&start| {
            let end = (start + TILE).min(a.len());
            let mut acc = NeumaierSum::new();
            for i in start..end {
                let (ci, ni, wi) = (a.centers[i], a.normals[i], a.weights[i]);
                let si = a.signal.as_ref().map(|s| s[i]).unwrap_or(0.0);
                let mut row = NeumaierSum::new();
                for j in 0..b.len() {
                    let d2 = (ci - b.centers[j]).norm_squared();
                    let mut term = kernel.pos(d2) * kernel.dir(ni.dot(&b.normals[j]));
                    if kernel.signal_scale.is_some() {
                        let sj = b.signal.as_ref().map(|s| s[j]).unwrap_or(0.0);
                        term *= kernel.sig(si - sj);
                    }
                    row.add(b.weights[j] * term);
                }
                acc.add(wi * row.total());
            }
            acc.total()
        })
        .collect();
    let mut total = NeumaierSum::new();
    for p in partials {
        total.add(p);
    }
    total.total()
}

/// Squared varifold distance `|mu_a - mu_b|^2` in the RKHS dual norm.
///
/// Mathematically nonnegative; tiny negative round-off is clamped to zero
/// and logged when it falls below `-1e-10 <mu_a, mu_a>`.
pub fn var_dist_sq<const D: usize>(
    a: &VarifoldAtoms<D>,
    b: &VarifoldAtoms<D>,
    kernel: &KernelConfig,
) -> Result<f64> {
    check_signals(kernel, a, b)?;
    let aa = product_unchecked(a, a, kernel);
    let bb = product_unchecked(b, b, kernel);
    let ab = product_unchecked(a, b, kernel);
    let d = aa - 2.0 * ab + bb;
    if d < 0.0 {
        if d < -1e-10 * aa.abs() {
            log::warn!("varifold distance clamped: {d:.3e} < -1e-10 * <mu_a,mu_a> = {aa:.3e}");
        }
        return Ok(0.0);
    }
    Ok(d)
}

/// Gram matrix `G_ij = <mu_i, mu_j>` of a family of atom sets.
///
/// Symmetric positive semidefinite; squared distances are recovered as
/// `G_ii - 2 G_ij + G_jj`.
pub fn var_gram<const D: usize>(
    sets: &[VarifoldAtoms<D>],
    kernel: &KernelConfig,
) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if kernel.signal_scale.is_some() {
        if let Some(i) = sets.iter().position(|s| s.signal.is_none()) {
            return Err(Error::SignalMismatch(format!(
                "kernel has a signal term but atom set {i} carries no signal"
            )));
        }
    }
    let n = sets.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = product_unchecked(&sets[i], &sets[j], kernel);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}

/// Gradient of `var_dist_sq(target, atoms(moving))` with respect to the
/// vertices of `moving`.
///
/// The target enters only through its fixed atoms; the gradient flows
/// through the centers, normals and weights of the moving shape's atoms.
pub fn var_dist_sq_grad<const D: usize, S: DiscreteShape<D>>(
    target: &VarifoldAtoms<D>,
    moving: &S,
    kernel: &KernelConfig,
) -> Result<Vec<SVector<f64, D>>> {
    let b = atoms(moving)?;
    check_signals(kernel, target, &b)?;
    let geom = moving.cell_geometry()?;

    // Per-atom partials of  <mu_b, mu_b> - 2 <mu_a, mu_b>  with respect to
    // weight (A), center (B) and normal (C). Both sums share the form
    // 2 sum_other w' k_pos k_dir k_sig with the derivative in the first slot.
    struct AtomAdjoint<const D: usize> {
        weight: f64,
        center: SVector<f64, D>,
        normal: SVector<f64, D>,
    }

    let adjoints: Vec<AtomAdjoint<D>> = (0..b.len())
        .into_par_iter()
        .map(|j| {
            let (cj, nj, wj) = (b.centers[j], b.normals[j], b.weights[j]);
            let sj = b.signal.as_ref().map(|s| s[j]).unwrap_or(0.0);
            // self and cross sums accumulate separately and cancel exactly
            // when the two atom sets coincide (the global minimum)
            let side = |centers: &[SVector<f64, D>],
                        normals: &[SVector<f64, D>],
                        weights: &[f64],
                        signals: Option<&Vec<f64>>| {
                let mut d_weight = 0.0;
                let mut d_center = SVector::<f64, D>::zeros();
                let mut d_normal = SVector::<f64, D>::zeros();
                for l in 0..centers.len() {
                    let diff = cj - centers[l];
                    let d2 = diff.norm_squared();
                    let dot = nj.dot(&normals[l]);
                    let pos = kernel.pos(d2);
                    let dir = kernel.dir(dot);
                    let sig = if kernel.signal_scale.is_some() {
                        kernel.sig(sj - signals.map(|s| s[l]).unwrap_or(0.0))
                    } else {
                        1.0
                    };
                    let w = weights[l];
                    d_weight += 2.0 * w * pos * dir * sig;
                    d_center += diff * (2.0 * wj * w * kernel.pos_grad_factor(d2) * dir * sig);
                    d_normal += normals[l] * (2.0 * wj * w * pos * kernel.dir_grad_factor(dot) * sig);
                }
                (d_weight, d_center, d_normal)
            };
            let own = side(&b.centers, &b.normals, &b.weights, b.signal.as_ref());
            let cross = side(
                &target.centers,
                &target.normals,
                &target.weights,
                target.signal.as_ref(),
            );
            AtomAdjoint {
                weight: own.0 - cross.0,
                center: own.1 - cross.1,
                normal: own.2 - cross.2,
            }
        })
        .collect();

    let mut grad = vec![SVector::<f64, D>::zeros(); moving.vertex_count()];
    for (cell, adj) in adjoints.iter().enumerate() {
        moving.accumulate_cell_adjoint(&geom, cell, adj.center, adj.normal, adj.weight, &mut grad);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{Polyline, TriMesh, Vec2, Vec3};
    use rand::{Rng, SeedableRng};

    fn poly(points: &[[f64; 2]], closed: bool) -> Polyline {
        Polyline::new(
            points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            closed,
            None,
        )
        .unwrap()
    }

    fn circle(n: usize, r: f64) -> Polyline {
        Polyline::new(
            (0..n)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    Vec2::new(r * t.cos(), r * t.sin())
                })
                .collect(),
            true,
            None,
        )
        .unwrap()
    }

    fn single_atom(center: Vec2, normal: Vec2, signal: Option<f64>) -> VarifoldAtoms<2> {
        VarifoldAtoms::new(vec![center], vec![normal], vec![1.0], signal.map(|s| vec![s]))
            .unwrap()
    }

    #[test]
    fn atoms_of_unit_edge() {
        let a = atoms(&poly(&[[0.0, 0.0], [1.0, 0.0]], false)).unwrap();
        assert_eq!(a.centers()[0], Vec2::new(0.5, 0.0));
        assert_eq!(a.normals()[0], Vec2::new(0.0, 1.0));
        assert_eq!(a.weights()[0], 1.0);
    }

    #[test]
    fn atoms_of_right_triangle() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let a = atoms(&m).unwrap();
        assert!((a.centers()[0] - Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert_eq!(a.normals()[0], Vec3::z());
        assert_eq!(a.weights()[0], 0.5);
    }

    #[test]
    fn atoms_of_square_total_weight() {
        let a = atoms(&poly(
            &[[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]],
            true,
        ))
        .unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a.total_weight(), 8.0);
    }

    #[test]
    fn identical_atoms_zero_distance() {
        let a = atoms(&circle(16, 1.0)).unwrap();
        let k = KernelConfig::gaussian_linear(0.5);
        assert_eq!(var_dist_sq(&a, &a, &k).unwrap(), 0.0);
    }

    #[test]
    fn translated_atom_closed_form() {
        let sigma = 0.8;
        let k = KernelConfig::gaussian_linear(sigma);
        let a = single_atom(Vec2::zeros(), Vec2::y(), None);
        let b = single_atom(Vec2::new(sigma, 0.0), Vec2::y(), None);
        let expect = 2.0 * (1.0 - (-1.0f64).exp());
        assert!((var_dist_sq(&a, &b, &k).unwrap() - expect).abs() <= 1e-12);
    }

    #[test]
    fn flipped_normal_closed_forms() {
        let a = single_atom(Vec2::zeros(), Vec2::y(), None);
        let b = single_atom(Vec2::zeros(), -Vec2::y(), None);
        let linear = KernelConfig::gaussian_linear(1.0);
        assert!((var_dist_sq(&a, &b, &linear).unwrap() - 4.0).abs() <= 1e-12);
        let squared = KernelConfig {
            direction: DirectionKernel::Squared,
            ..linear
        };
        assert!(var_dist_sq(&a, &b, &squared).unwrap() <= 1e-12);
    }

    #[test]
    fn squared_kernel_is_orientation_blind() {
        let c = circle(20, 1.0);
        let mut rev: Vec<Vec2> = c.vertices().to_vec();
        rev.reverse();
        let flipped = Polyline::new(rev, true, None).unwrap();
        let k = KernelConfig {
            direction: DirectionKernel::Squared,
            ..KernelConfig::gaussian_linear(0.7)
        };
        let d = var_dist_sq(&atoms(&c).unwrap(), &atoms(&flipped).unwrap(), &k).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn constant_equal_signals_reduce_to_plain() {
        let base = circle(12, 1.0);
        let with_sig = Polyline::new(
            base.vertices().to_vec(),
            true,
            Some(vec![0.75; base.cell_count()]),
        )
        .unwrap();
        let other = circle(12, 1.5).translated(Vec2::new(0.3, 0.0));
        let other_sig = Polyline::new(
            other.vertices().to_vec(),
            true,
            Some(vec![0.75; other.cell_count()]),
        )
        .unwrap();
        let plain = KernelConfig::gaussian_linear(0.6);
        let with_signal = KernelConfig {
            signal_scale: Some(0.5),
            ..plain
        };
        let d0 = var_dist_sq(&atoms(&base).unwrap(), &atoms(&other).unwrap(), &plain).unwrap();
        let d1 = var_dist_sq(
            &atoms(&with_sig).unwrap(),
            &atoms(&other_sig).unwrap(),
            &with_signal,
        )
        .unwrap();
        assert_eq!(d0, d1);
    }

    #[test]
    fn signal_kernel_requires_signals() {
        let a = atoms(&circle(8, 1.0)).unwrap();
        let k = KernelConfig {
            signal_scale: Some(1.0),
            ..KernelConfig::gaussian_linear(1.0)
        };
        assert!(matches!(
            var_dist_sq(&a, &a, &k),
            Err(Error::SignalMismatch(_))
        ));
    }

    #[test]
    fn rigid_motion_invariance() {
        let a = circle(16, 1.0);
        let b = circle(16, 1.4).translated(Vec2::new(0.5, 0.2));
        let (s, c) = (0.8f64.sin(), 0.8f64.cos());
        let rot = nalgebra::Matrix2::new(c, -s, s, c);
        let t = Vec2::new(-2.0, 5.0);
        let moved = |p: &Polyline| {
            Polyline::new(p.vertices().iter().map(|v| rot * v + t).collect(), true, None).unwrap()
        };
        for kernel in [
            KernelConfig::gaussian_linear(0.9),
            KernelConfig {
                position: PositionKernel::Cauchy,
                ..KernelConfig::gaussian_linear(0.9)
            },
        ] {
            let d0 = var_dist_sq(&atoms(&a).unwrap(), &atoms(&b).unwrap(), &kernel).unwrap();
            let d1 = var_dist_sq(
                &atoms(&moved(&a)).unwrap(),
                &atoms(&moved(&b)).unwrap(),
                &kernel,
            )
            .unwrap();
            assert!((d0 - d1).abs() <= 1e-10 * d0.max(1.0), "{d0} vs {d1}");
        }
    }

    #[test]
    fn symmetry_and_triangle_inequality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let k = KernelConfig::gaussian_linear(0.8);
        for _ in 0..5 {
            let mut shape = || {
                let n = 10 + rng.random_range(0..6);
                Polyline::new(
                    (0..n)
                        .map(|i| {
                            Vec2::new(
                                i as f64 * 0.5 + 0.2 * rng.random::<f64>(),
                                rng.random::<f64>(),
                            )
                        })
                        .collect(),
                    false,
                    None,
                )
                .unwrap()
            };
            let (a, b, c) = (
                atoms(&shape()).unwrap(),
                atoms(&shape()).unwrap(),
                atoms(&shape()).unwrap(),
            );
            let dab = var_dist_sq(&a, &b, &k).unwrap().sqrt();
            let dba = var_dist_sq(&b, &a, &k).unwrap().sqrt();
            assert!((dab - dba).abs() <= 1e-10 * dab.max(1.0));
            let dac = var_dist_sq(&a, &c, &k).unwrap().sqrt();
            let dcb = var_dist_sq(&c, &b, &k).unwrap().sqrt();
            assert!(dab <= dac + dcb + 1e-10);
        }
    }

    #[test]
    fn gram_matches_pairwise_distances() {
        let sets = vec![
            atoms(&poly(&[[0.0, 0.0], [1.0, 0.0]], false)).unwrap(),
            atoms(&poly(&[[0.5, 0.1], [1.5, 0.1]], false)).unwrap(),
            atoms(&poly(&[[-0.2, 0.6], [0.8, 0.6]], false)).unwrap(),
        ];
        let k = KernelConfig::gaussian_linear(0.9);
        let g = var_gram(&sets, &k).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let via_gram = (g[(i, i)] - 2.0 * g[(i, j)] + g[(j, j)]).max(0.0);
                let direct = var_dist_sq(&sets[i], &sets[j], &k).unwrap();
                assert!((via_gram - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn gram_single_and_duplicate() {
        let a = atoms(&circle(8, 1.0)).unwrap();
        let k = KernelConfig::gaussian_linear(0.5);
        let g1 = var_gram(std::slice::from_ref(&a), &k).unwrap();
        assert_eq!(g1.nrows(), 1);
        assert!((g1[(0, 0)] - var_product(&a, &a, &k).unwrap()).abs() <= 1e-15);
        let g2 = var_gram(&[a.clone(), a], &k).unwrap();
        assert_eq!(g2[(0, 0)], g2[(0, 1)]);
        assert_eq!(g2[(0, 0)], g2[(1, 1)]);
    }

    #[test]
    fn grad_zero_at_same_discretization() {
        let shape = circle(14, 1.0);
        let target = atoms(&shape).unwrap();
        let k = KernelConfig::gaussian_linear(0.6);
        for g in var_dist_sq_grad(&target, &shape, &k).unwrap() {
            assert_eq!(g, Vec2::zeros());
        }
    }

    #[test]
    fn self_term_gradient_is_translation_invariant() {
        // empty target isolates the gradient of <mu_b, mu_b>, whose sum over
        // vertices (the derivative under uniform translation) must vanish
        let shape = circle(12, 1.3).translated(Vec2::new(0.4, -0.2));
        let k = KernelConfig::gaussian_linear(0.7);
        let grad = var_dist_sq_grad(&VarifoldAtoms::empty(), &shape, &k).unwrap();
        let total: Vec2 = grad.iter().sum();
        let scale: f64 = grad.iter().map(|g| g.norm()).sum();
        assert!(total.norm() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn grad_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let make = |rng: &mut rand_chacha::ChaCha8Rng| {
            let n = 12;
            Polyline::new(
                (0..n)
                    .map(|i| {
                        let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        let r = 1.0 + 0.25 * rng.random::<f64>();
                        Vec2::new(r * t.cos(), r * t.sin())
                    })
                    .collect(),
                true,
                None,
            )
            .unwrap()
        };
        for kernel in [
            KernelConfig::gaussian_linear(0.8),
            KernelConfig {
                position: PositionKernel::Cauchy,
                direction: DirectionKernel::Squared,
                sigma: 0.8,
                signal_scale: None,
            },
        ] {
            let target = atoms(&make(&mut rng)).unwrap();
            let moving = make(&mut rng);
            let grad = var_dist_sq_grad(&target, &moving, &kernel).unwrap();
            let x0 = moving.flat_vertices();
            let h = 1e-5;
            for _ in 0..20 {
                let dir: Vec<f64> = (0..x0.len()).map(|_| rng.random::<f64>() - 0.5).collect();
                let eval = |s: f64| {
                    let x: Vec<f64> = x0.iter().zip(&dir).map(|(x, d)| x + s * d).collect();
                    var_dist_sq(&target, &atoms(&moving.with_flat_vertices(&x)).unwrap(), &kernel)
                        .unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let analytic: f64 = grad
                    .iter()
                    .flat_map(|g| [g.x, g.y])
                    .zip(&dir)
                    .map(|(g, d)| g * d)
                    .sum();
                let denom = fd.abs().max(analytic.abs()).max(1e-10);
                assert!(
                    (analytic - fd).abs() / denom <= 1e-6,
                    "kernel {kernel:?}: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn subdivision_consistency_order_two() {
        // distance between a polygon and its own subdivision, as the base
        // resolution is refined: squared distance drops at order >= 2 in the
        // max edge length (observed ~4)
        let k = KernelConfig::gaussian_linear(0.5);
        let mut data = Vec::new();
        for n in [12usize, 24, 48] {
            let c = circle(n, 1.0);
            let h = c
                .cell_geometry()
                .unwrap()
                .measures
                .iter()
                .fold(0.0f64, |a, &b| a.max(b));
            let d = var_dist_sq(&atoms(&c).unwrap(), &atoms(&c.subdivide(1)).unwrap(), &k).unwrap();
            data.push((h, d));
        }
        for w in data.windows(2) {
            let (h0, d0) = w[0];
            let (h1, d1) = w[1];
            let slope = (d0 / d1).ln() / (h0 / h1).ln();
            assert!(slope >= 2.0, "observed order {slope}");
            assert!(d1 < d0);
        }
    }

    #[test]
    fn kernel_scales_must_be_positive() {
        assert!(matches!(
            KernelConfig::gaussian_linear(0.0).validate(),
            Err(Error::ConfigError(_))
        ));
        assert!(matches!(
            KernelConfig::gaussian_linear(f64::NAN).validate(),
            Err(Error::ConfigError(_))
        ));
        let bad_signal = KernelConfig {
            signal_scale: Some(-1.0),
            ..KernelConfig::gaussian_linear(1.0)
        };
        assert!(matches!(bad_signal.validate(), Err(Error::ConfigError(_))));
    }

    #[test]
    fn merge_concatenates() {
        let a = atoms(&circle(8, 1.0)).unwrap();
        let b = atoms(&circle(6, 0.5)).unwrap();
        let m = VarifoldAtoms::merge(&[&a, &b]).unwrap();
        assert_eq!(m.len(), 14);
        assert!((m.total_weight() - a.total_weight() - b.total_weight()).abs() < 1e-12);
    }
}
