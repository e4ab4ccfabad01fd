//! Least-squares state estimation over physical density matrices.
//!
//! Minimizes ½‖Γ̃ − Aρ‖² with FISTA. Iterates live in isometric coordinates
//! z = w ∘ y, so Euclidean distance in z is Frobenius distance in ρ and the
//! projection onto {ρ ⪰ 0, Tr ρ = 1} is the exact eigenvalue-simplex projection.
//! A momentum step that raises the objective is replaced by a plain projected
//! gradient step from the last accepted point.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{finish_state, residual_norm, ReconstructionResult, SolverConfig};
use crate::error::{Error, Result};
use crate::instrument::InstrumentMatrix;
use crate::linalg;
use crate::measurement::CorrelationData;
use crate::C64;

/// Dense residuals are used up to this many instrument entries.
const DENSE_ENTRIES: usize = 4_000_000;
/// Exact eigen-decomposition of the Gram matrix up to this many unknowns.
const EXACT_SPECTRUM: usize = 600;

enum Objective {
    /// Scaled dense matrix A_z = A W⁻¹.
    Dense(DMatrix<f64>),
    /// Gram matrix only: ½ zᵀG z − bᵀz + ½‖Γ‖².
    Gram,
}

enum Warm {
    Eigen {
        values: Vec<f64>,
        vectors: DMatrix<f64>,
    },
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    None,
}

/// Operators shared by every reconstruction against one instrument.
pub struct MleSolver {
    instrument: InstrumentMatrix,
    config: SolverConfig,
    weights: Vec<f64>,
    gram: DMatrix<f64>,
    lipschitz: f64,
    objective: Objective,
    warm: Warm,
}

impl MleSolver {
    pub fn new(m: &InstrumentMatrix, config: &SolverConfig) -> Result<Self> {
        if config.max_iterations == 0 || !(config.tolerance >= 0.0) {
            return Err(Error::Parameter("invalid solver configuration".into()));
        }
        let n = m.cols();
        let weights = m.coord_weights();
        let g = m.gram()?;
        let gram = DMatrix::from_fn(n, n, |i, j| g[(i, j)] / (weights[i] * weights[j]));

        let mut warm = Warm::None;
        let lipschitz = if n <= EXACT_SPECTRUM {
            let (values, vectors) = linalg::symmetric_eigen(&gram);
            let lmax = values.last().copied().unwrap_or(0.0);
            if config.warm_start {
                warm = Warm::Eigen { values, vectors };
            }
            lmax
        } else {
            if config.warm_start {
                match Cholesky::new(gram.clone()) {
                    Some(c) => warm = Warm::Cholesky(c),
                    None => log::warn!("Gram matrix not positive definite; starting from I/D"),
                }
            }
            1.01 * linalg::largest_eigenvalue(&gram, 500, 1e-10)
        };
        let lipschitz = config.lipschitz.unwrap_or(lipschitz);
        if !(lipschitz > 0.0) {
            return Err(Error::Parameter(
                "instrument has no signal (zero Gram matrix)".into(),
            ));
        }

        let objective = if m.rows().saturating_mul(n) <= DENSE_ENTRIES {
            let mut a = m.dense_real()?;
            for (j, w) in weights.iter().enumerate() {
                a.column_mut(j).scale_mut(1.0 / w);
            }
            Objective::Dense(a)
        } else {
            Objective::Gram
        };
        Ok(Self {
            instrument: m.clone(),
            config: config.clone(),
            weights,
            gram,
            lipschitz,
            objective,
            warm,
        })
    }

    pub fn instrument(&self) -> &InstrumentMatrix {
        &self.instrument
    }

    fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let y: Vec<f64> = z.iter().zip(&self.weights).map(|(a, w)| a / w).collect();
        let rho = self.instrument.density_from_coords(&y)?;
        let (values, vectors) = linalg::hermitian_eigen(&rho);
        let mut p = linalg::project_simplex(&values, 1.0);
        let tol = self.config.projector_tolerance;
        if p.iter().any(|&v| v > 0.0 && v < tol) {
            for v in &mut p {
                if *v < tol {
                    *v = 0.0;
                }
            }
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
        }
        let projected = linalg::reassemble(&p, &vectors);
        let y = self.instrument.coords_of_matrix(&projected);
        Ok(DVector::from_iterator(
            y.len(),
            y.iter().zip(&self.weights).map(|(a, w)| a * w),
        ))
    }

    /// Returns (objective, gradient) at z.
    fn evaluate(
        &self,
        z: &DVector<f64>,
        b: &DVector<f64>,
        gamma: &DVector<f64>,
    ) -> (f64, DVector<f64>) {
        match &self.objective {
            Objective::Dense(a) => {
                let r = a * z - gamma;
                (0.5 * r.norm_squared(), a.tr_mul(&r))
            }
            Objective::Gram => {
                let gz = &self.gram * z;
                let f = 0.5 * z.dot(&gz) - b.dot(z) + 0.5 * gamma.norm_squared();
                (f.max(0.0), gz - b)
            }
        }
    }

    fn warm_start(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.warm {
            Warm::None => None,
            Warm::Cholesky(c) => Some(c.solve(b)),
            Warm::Eigen { values, vectors } => {
                let lmax = values.last().copied().unwrap_or(0.0);
                let cutoff = lmax * 1e-14;
                let coeffs = vectors.tr_mul(b);
                let scaled = DVector::from_iterator(
                    coeffs.len(),
                    coeffs
                        .iter()
                        .zip(values)
                        .map(|(c, &v)| if v > cutoff { c / v } else { 0.0 }),
                );
                Some(vectors * scaled)
            }
        }
    }

    pub fn solve(&self, data: &CorrelationData) -> Result<ReconstructionResult> {
        let start = Instant::now();
        data.check_matches(&self.instrument)?;
        if data.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("correlation data".into()));
        }
        let gamma = DVector::from_column_slice(&data.values);
        let aty = self.instrument.adjoint(&data.values)?;
        let b =
            DVector::from_iterator(aty.len(), aty.iter().zip(&self.weights).map(|(a, w)| a / w));

        let start_point = match self.warm_start(&b) {
            Some(z) => z,
            None => {
                let n = self.instrument.dim().pow(self.instrument.photons() as u32);
                let mixed = DMatrix::<C64>::identity(n, n) * C64::new(1.0 / n as f64, 0.0);
                let y = self.instrument.coords_of_matrix(&mixed);
                DVector::from_iterator(y.len(), y.iter().zip(&self.weights).map(|(a, w)| a * w))
            }
        };
        let mut x = self.project(&start_point)?;
        let (mut fx, _) = self.evaluate(&x, &b, &gamma);
        let floor = 0.5 * (1e-15 * gamma.norm()).powi(2);
        let mut history = vec![fx];
        let mut y = x.clone();
        let mut t = 1.0f64;
        let step = 1.0 / self.lipschitz;
        let mut converged = fx <= floor;
        let mut iterations = 0;

        while !converged && iterations < self.config.max_iterations {
            iterations += 1;
            let (_, grad) = self.evaluate(&y, &b, &gamma);
            let mut candidate = self.project(&(&y - grad * step))?;
            let (mut fc, _) = self.evaluate(&candidate, &b, &gamma);
            if fc > fx {
                // momentum overshot: restart from the last accepted point
                let (_, gx) = self.evaluate(&x, &b, &gamma);
                candidate = self.project(&(&x - gx * step))?;
                fc = self.evaluate(&candidate, &b, &gamma).0;
                t = 1.0;
                if fc > fx {
                    converged = true;
                    break;
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &candidate + (&candidate - &x) * ((t - 1.0) / t_next);
            let decrease = (fx - fc) / fx.max(f64::MIN_POSITIVE);
            x = candidate;
            fx = fc;
            t = t_next;
            history.push(fx);
            if fx <= floor || decrease < self.config.tolerance {
                converged = true;
            }
        }

        let y_final: Vec<f64> = x.iter().zip(&self.weights).map(|(a, w)| a / w).collect();
        let rho_hat = finish_state(
            &self.instrument,
            self.instrument.density_from_coords(&y_final)?,
        )?;
        let residual = residual_norm(&self.instrument, &rho_hat, data)?;
        let initial_residual = (2.0 * history[0]).sqrt();
        Ok(ReconstructionResult {
            rho_hat,
            residual_norm: residual,
            initial_residual,
            iterations,
            converged,
            wall_time_s: start.elapsed().as_secs_f64(),
            config: self.config.clone(),
            objective_history: history,
        })
    }
}

/// One-off MLE reconstruction; use [`MleSolver`] to amortize setup over many data sets.
pub fn mle_reconstruct(
    m: &InstrumentMatrix,
    data: &CorrelationData,
    config: &SolverConfig,
) -> Result<ReconstructionResult> {
    MleSolver::new(m, config)?.solve(data)
}
