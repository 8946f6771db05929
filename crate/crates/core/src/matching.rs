//! Inexact elastic matching.
//!
//! Minimizes, over the vertex positions of a deforming copy `f` of the
//! template `f0`,
//!
//! ```text
//! E(f) = |srnf(f0) - srnf(f)|^2 + lambda * var_dist_sq(f, f1)
//! ```
//!
//! The template's connectivity is the optimization variable; the target `f1`
//! enters only through its fixed varifold atoms, so the two shapes may have
//! different meshings and topologies. The driver sweeps a coarse-to-fine
//! schedule of position-kernel scales and, within each scale, grows the
//! multiplier `lambda` geometrically until the varifold residual falls below
//! tolerance, warm-starting every stage from the current iterate.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{lbfgs_minimize, OptimProblem, OptimSettings, Termination};
use crate::shape::DiscreteShape;
use crate::srnf::{srnf_dist_sq, srnf_dist_sq_grad};
use crate::varifold::{
    atoms, var_dist_sq, var_dist_sq_grad, var_product, DirectionKernel, KernelConfig,
    PositionKernel, VarifoldAtoms,
};

/// Matching schedule and kernel configuration.
///
/// Position-kernel scales are given as fractions of the target's spatial
/// extent (see [`VarifoldAtoms::spatial_extent`]); `lambda0 = None` balances
/// the fidelity term automatically as `1 / <mu_f1, mu_f1>` under the first
/// stage kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub position_kernel: PositionKernel,
    pub direction_kernel: DirectionKernel,
    /// Optional Gaussian signal kernel scale (signal units); requires both
    /// shapes to carry per-cell signals.
    pub signal_scale: Option<f64>,
    /// Strictly decreasing fractions of the target's spatial extent.
    pub sigma_schedule: Vec<f64>,
    /// Initial Lagrange multiplier; `None` picks `1 / <mu_f1, mu_f1>`.
    pub lambda0: Option<f64>,
    /// Multiplier applied to lambda when a stage misses the tolerance.
    pub rho: f64,
    /// Maximum minimization runs per kernel scale.
    pub max_lambda_stages: usize,
    /// Varifold residual tolerance, relative to `sqrt(<mu_f1, mu_f1>)`.
    pub eps_var_rel: f64,
    pub optim: OptimSettings,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            position_kernel: PositionKernel::Gaussian,
            direction_kernel: DirectionKernel::Linear,
            signal_scale: None,
            sigma_schedule: vec![0.4, 0.2, 0.1],
            lambda0: None,
            rho: 10.0,
            max_lambda_stages: 4,
            eps_var_rel: 1e-3,
            optim: OptimSettings::default(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_schedule.is_empty() {
            return Err(Error::ConfigError("sigma schedule is empty".into()));
        }
        for w in self.sigma_schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::ConfigError(format!(
                    "sigma schedule must be strictly decreasing, got {:?}",
                    self.sigma_schedule
                )));
            }
        }
        if !(self.sigma_schedule.iter().all(|&s| s > 0.0)) {
            return Err(Error::ConfigError("sigma fractions must be positive".into()));
        }
        if let Some(l0) = self.lambda0 {
            if !(l0 > 0.0) {
                return Err(Error::ConfigError(format!("lambda0 must be positive, got {l0}")));
            }
        }
        if !(self.rho > 1.0) {
            return Err(Error::ConfigError(format!("rho must exceed 1, got {}", self.rho)));
        }
        if self.max_lambda_stages == 0 {
            return Err(Error::ConfigError("max_lambda_stages must be at least 1".into()));
        }
        if !(self.eps_var_rel > 0.0) {
            return Err(Error::ConfigError(format!(
                "eps_var_rel must be positive, got {}",
                self.eps_var_rel
            )));
        }
        Ok(())
    }

    fn kernel_at(&self, sigma: f64) -> KernelConfig {
        KernelConfig {
            position: self.position_kernel,
            sigma,
            direction: self.direction_kernel,
            signal_scale: self.signal_scale,
        }
    }
}

/// Relaxed matching energy and its vertex gradient.
///
/// `value = srnf_dist_sq(f0, f) + lambda * var_dist_sq(atoms(f), f1_atoms)`,
/// differentiated with respect to the vertices of `f`.
pub fn energy<const D: usize, S: DiscreteShape<D>>(
    f0: &S,
    f: &S,
    f1_atoms: &VarifoldAtoms<D>,
    lambda: f64,
    kernel: &KernelConfig,
) -> Result<(f64, Vec<SVector<f64, D>>)> {
    let srnf_term = srnf_dist_sq(f0, f)?;
    let var_term = var_dist_sq(f1_atoms, &atoms(f)?, kernel)?;
    let mut grad = srnf_dist_sq_grad(f0, f)?;
    let var_grad = var_dist_sq_grad(f1_atoms, f, kernel)?;
    for (g, v) in grad.iter_mut().zip(var_grad) {
        *g += v * lambda;
    }
    Ok((srnf_term + lambda * var_term, grad))
}

/// One minimization run at a fixed kernel scale and multiplier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub sigma_fraction: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub fn_evals: usize,
    pub termination: Termination,
    /// Accepted energy values, start point included.
    pub energy_trace: Vec<f64>,
    pub srnf_term: f64,
    pub var_term: f64,
    pub total: f64,
    /// Varifold residual under this stage's kernel, absolute and relative
    /// to the target norm.
    pub residual: f64,
    pub residual_rel: f64,
    /// Residual re-measured under the finest scheduled kernel, which makes
    /// stages comparable across the sigma schedule.
    pub final_kernel_residual: f64,
    pub final_kernel_residual_rel: f64,
}

/// Outcome of a matching run.
#[derive(Debug, Clone)]
pub struct MatchResult<S> {
    /// Optimized shape; shares the template's connectivity and signal.
    pub shape: S,
    pub stages: Vec<StageRecord>,
    /// Resolved initial multiplier.
    pub lambda0: f64,
    /// Varifold residual under the finest scheduled kernel.
    pub final_residual: f64,
    pub final_residual_rel: f64,
    /// Elastic distance estimate `sqrt(srnf_dist_sq(f0, f))`.
    pub final_srnf_dist: f64,
    /// True when the final relative residual met `eps_var_rel`.
    pub converged: bool,
    /// Abnormal events (aborted stages).
    pub notes: Vec<String>,
}

/// Serializable diagnostics of a [`MatchResult`] (everything but the shape).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchRecord {
    pub lambda0: f64,
    pub converged: bool,
    pub final_residual: f64,
    pub final_residual_rel: f64,
    pub final_srnf_dist: f64,
    pub stages: Vec<StageRecord>,
    pub notes: Vec<String>,
}

impl<S> MatchResult<S> {
    pub fn record(&self) -> MatchRecord {
        MatchRecord {
            lambda0: self.lambda0,
            converged: self.converged,
            final_residual: self.final_residual,
            final_residual_rel: self.final_residual_rel,
            final_srnf_dist: self.final_srnf_dist,
            stages: self.stages.clone(),
            notes: self.notes.clone(),
        }
    }
}

/// Matches `template` onto `target`, initializing from the template itself.
pub fn match_shapes<const D: usize, S: DiscreteShape<D>>(
    template: &S,
    target: &S,
    config: &MatchConfig,
) -> Result<MatchResult<S>> {
    match_to_atoms(template, &atoms(target)?, config)
}

/// Matches `template` onto a fixed atom representation of the target.
///
/// The atoms may come from any shape, several merged shapes (different
/// topology), or be synthesized directly.
pub fn match_to_atoms<const D: usize, S: DiscreteShape<D>>(
    template: &S,
    target: &VarifoldAtoms<D>,
    config: &MatchConfig,
) -> Result<MatchResult<S>> {
    match_to_atoms_from(template, template, target, config)
}

/// Matching with a custom initial shape (same connectivity as the template).
pub fn match_to_atoms_from<const D: usize, S: DiscreteShape<D>>(
    template: &S,
    init: &S,
    target: &VarifoldAtoms<D>,
    config: &MatchConfig,
) -> Result<MatchResult<S>> {
    config.validate()?;
    if target.is_empty() {
        return Err(Error::InvalidShape("target varifold has no atoms".into()));
    }
    if !template.same_structure(init) {
        return Err(Error::StructureMismatch(
            "initial shape must share the template's connectivity".into(),
        ));
    }
    if config.signal_scale.is_some() && (template.signal().is_none() || target.signal().is_none()) {
        return Err(Error::SignalMismatch(
            "signal kernel configured but template or target carries no signal".into(),
        ));
    }

    // Kernel scales are fractions of the target's spatial extent (a
    // rotation-invariant bounding diameter); a target collapsed to a point
    // falls back to the template extent.
    let mut scale_ref = target.spatial_extent();
    if scale_ref <= 0.0 {
        scale_ref = template.bounding_box_diagonal();
    }
    if scale_ref <= 0.0 {
        return Err(Error::InvalidShape("degenerate bounding box".into()));
    }

    let final_sigma = config.sigma_schedule.last().unwrap() * scale_ref;
    let final_kernel = config.kernel_at(final_sigma);
    let final_target_norm = var_product(target, target, &final_kernel)?.max(0.0).sqrt();

    let mut lambda = f64::NAN;
    let mut lambda0 = f64::NAN;
    let mut current = init.clone();
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut notes: Vec<String> = Vec::new();

    'schedule: for (level, &fraction) in config.sigma_schedule.iter().enumerate() {
        let sigma = fraction * scale_ref;
        let kernel = config.kernel_at(sigma);
        let target_self = var_product(target, target, &kernel)?;
        let target_norm = target_self.max(0.0).sqrt();
        if level == 0 {
            lambda = config
                .lambda0
                .unwrap_or_else(|| 1.0 / target_self.max(f64::MIN_POSITIVE));
            lambda0 = lambda;
        }

        for attempt in 0..config.max_lambda_stages {
            let coords0 = current.flat_vertices();
            let proto = current.clone();
            let f0 = template;
            let objective = |coords: &[f64], grad_out: &mut [f64]| -> f64 {
                let f = proto.with_flat_vertices(coords);
                match energy(f0, &f, target, lambda, &kernel) {
                    Ok((value, grad)) => {
                        for (o, g) in grad_out.chunks_exact_mut(D).zip(&grad) {
                            for k in 0..D {
                                o[k] = g[k];
                            }
                        }
                        value
                    }
                    Err(_) => {
                        grad_out.fill(0.0);
                        f64::INFINITY
                    }
                }
            };
            let report = match lbfgs_minimize(OptimProblem::new(coords0, objective), &config.optim)
            {
                Ok(r) => r,
                Err(e) => {
                    // non-finite energy at the stage start: keep the last
                    // valid iterate and stop the schedule
                    notes.push(format!(
                        "stage sigma={sigma:.6e} lambda={lambda:.6e} aborted: {e}"
                    ));
                    break 'schedule;
                }
            };
            current = current.with_flat_vertices(&report.point);

            let srnf_term = srnf_dist_sq(template, &current)?;
            let current_atoms = atoms(&current)?;
            let var_term = var_dist_sq(target, &current_atoms, &kernel)?;
            let residual = var_term.sqrt();
            let final_kernel_residual = var_dist_sq(target, &current_atoms, &final_kernel)?.sqrt();
            stages.push(StageRecord {
                sigma_fraction: fraction,
                sigma,
                lambda,
                iterations: report.iterations,
                fn_evals: report.fn_evals,
                termination: report.termination,
                energy_trace: report.trace,
                srnf_term,
                var_term,
                total: srnf_term + lambda * var_term,
                residual,
                residual_rel: residual / target_norm.max(f64::MIN_POSITIVE),
                final_kernel_residual,
                final_kernel_residual_rel: final_kernel_residual
                    / final_target_norm.max(f64::MIN_POSITIVE),
            });

            if residual <= config.eps_var_rel * target_norm {
                break;
            }
            if attempt + 1 < config.max_lambda_stages {
                lambda *= config.rho;
            }
        }

        // the fit is already good under the finest kernel: done
        if stages
            .last()
            .is_some_and(|s| s.final_kernel_residual_rel <= config.eps_var_rel)
        {
            break 'schedule;
        }
    }

    let final_atoms = atoms(&current)?;
    let final_residual = var_dist_sq(target, &final_atoms, &final_kernel)?.sqrt();
    let final_residual_rel = final_residual / final_target_norm.max(f64::MIN_POSITIVE);
    let final_srnf_dist = srnf_dist_sq(template, &current)?.max(0.0).sqrt();
    Ok(MatchResult {
        shape: current,
        stages,
        lambda0,
        final_residual,
        final_residual_rel,
        final_srnf_dist,
        converged: final_residual_rel <= config.eps_var_rel,
        notes,
    })
}

/// Distance between the unparametrized shapes `[f0]` and `[f1]`: the SRNF
/// distance from `f0` to the matched shape.
///
/// Not symmetric by construction; batch tooling offers the symmetrization
/// `(d(a,b) + d(b,a)) / 2`.
pub fn unparametrized_distance<const D: usize, S: DiscreteShape<D>>(
    f0: &S,
    f1: &S,
    config: &MatchConfig,
) -> Result<f64> {
    Ok(match_shapes(f0, f1, config)?.final_srnf_dist)
}
