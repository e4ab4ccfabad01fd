//! State reconstruction and instrument calibration.

mod calibrate;
mod mle;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::InstrumentMatrix;
use crate::linalg;
use crate::measurement::CorrelationData;
use crate::registry::{Named, Registry};
use crate::state::DensityMatrix;

pub use calibrate::{calibrate, standard_probes};
pub use mle::{mle_reconstruct, MleSolver};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the relative objective decrease of an accepted step falls below this.
    pub tolerance: f64,
    pub warm_start: bool,
    /// Projected eigenvalues below this are set to zero.
    pub projector_tolerance: f64,
    /// Lipschitz constant of the gradient; estimated when absent.
    pub lipschitz: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-10,
            warm_start: true,
            projector_tolerance: 1e-12,
            lipschitz: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub rho_hat: DensityMatrix,
    /// ‖Γ̃ − Mρ̂‖₂
    pub residual_norm: f64,
    /// Residual of the projected starting point.
    pub initial_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub config: SolverConfig,
    /// Objective ½‖Γ̃ − Mρ‖² after each accepted step, starting point first.
    pub objective_history: Vec<f64>,
}

impl ReconstructionResult {
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "residual_norm": self.residual_norm,
            "initial_residual": self.initial_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time_s": self.wall_time_s,
            "purity": self.rho_hat.purity(),
            "solver_config": self.config,
        })
    }
}

/// A state-estimation strategy.
pub trait Reconstructor: Named + Send + Sync {
    fn reconstruct(
        &self,
        m: &InstrumentMatrix,
        data: &CorrelationData,
        config: &SolverConfig,
    ) -> Result<ReconstructionResult>;
}

pub struct Mle;

impl Named for Mle {
    fn name(&self) -> &'static str {
        "mle"
    }
}

impl Reconstructor for Mle {
    fn reconstruct(
        &self,
        m: &InstrumentMatrix,
        data: &CorrelationData,
        config: &SolverConfig,
    ) -> Result<ReconstructionResult> {
        mle_reconstruct(m, data, config)
    }
}

/// Pseudo-inverse followed by a single projection onto the physical set.
pub struct ProjectedPseudoInverse;

impl Named for ProjectedPseudoInverse {
    fn name(&self) -> &'static str {
        "pinv"
    }
}

impl Reconstructor for ProjectedPseudoInverse {
    fn reconstruct(
        &self,
        m: &InstrumentMatrix,
        data: &CorrelationData,
        config: &SolverConfig,
    ) -> Result<ReconstructionResult> {
        let start = std::time::Instant::now();
        let y = pseudo_inverse_reconstruct(m, data)?;
        let projected = linalg::project_density(&m.density_from_coords(&y)?);
        let rho_hat = finish_state(m, projected)?;
        let residual = residual_norm(m, &rho_hat, data)?;
        Ok(ReconstructionResult {
            rho_hat,
            residual_norm: residual,
            initial_residual: residual,
            iterations: 0,
            converged: true,
            wall_time_s: start.elapsed().as_secs_f64(),
            config: config.clone(),
            objective_history: vec![0.5 * residual * residual],
        })
    }
}

pub fn reconstructors() -> Registry<dyn Reconstructor> {
    let mut r: Registry<dyn Reconstructor> = Registry::empty("reconstructor");
    r.register(Arc::new(Mle));
    r.register(Arc::new(ProjectedPseudoInverse));
    r
}

pub(crate) fn finish_state(
    m: &InstrumentMatrix,
    rho: DMatrix<crate::C64>,
) -> Result<DensityMatrix> {
    let state = DensityMatrix::from_projected(rho, m.dim(), m.photons())?;
    if m.is_indistinguishable() {
        state.with_symmetric_sector()
    } else {
        Ok(state)
    }
}

pub(crate) fn residual_norm(
    m: &InstrumentMatrix,
    rho: &DensityMatrix,
    data: &CorrelationData,
) -> Result<f64> {
    let pred = m.apply(&m.coords_of(rho)?)?;
    Ok(pred
        .iter()
        .zip(&data.values)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Minimum-norm least-squares coordinates M⁺Γ (possibly unphysical).
pub fn pseudo_inverse_reconstruct(
    m: &InstrumentMatrix,
    data: &CorrelationData,
) -> Result<Vec<f64>> {
    data.check_matches(m)?;
    pseudo_inverse_solve(m, &data.values)
}

pub(crate) fn pseudo_inverse_solve(m: &InstrumentMatrix, gamma: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows.saturating_mul(cols) <= 4_000_000 {
        let a = m.dense_real()?;
        let svd = SVD::new(a, true, true);
        let smax = svd.singular_values.max();
        let cutoff = rows.max(cols) as f64 * f64::EPSILON * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        if rank < cols {
            return Err(Error::RankDeficient {
                rank,
                expected: cols,
            });
        }
        let x = svd
            .solve(&DVector::from_column_slice(gamma), cutoff)
            .map_err(|e| Error::Parameter(e.to_string()))?;
        return Ok(x.as_slice().to_vec());
    }
    // normal equations through the Gram spectrum
    let g = m.gram()?;
    let b = DVector::from_vec(m.adjoint(gamma)?);
    let (values, vectors) = linalg::symmetric_eigen(&g);
    let lmax = values.last().copied().unwrap_or(0.0);
    let cutoff = (rows.max(cols) as f64 * f64::EPSILON).sqrt() * lmax.sqrt();
    let rank = values
        .iter()
        .filter(|&&v| v.max(0.0).sqrt() > cutoff)
        .count();
    if rank < cols {
        return Err(Error::RankDeficient {
            rank,
            expected: cols,
        });
    }
    let coeffs = vectors.transpose() * b;
    let scaled = DVector::from_iterator(cols, coeffs.iter().zip(&values).map(|(c, v)| c / v));
    Ok((vectors * scaled).as_slice().to_vec())
}
