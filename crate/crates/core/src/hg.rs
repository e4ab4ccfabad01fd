//! Truncated Hermite-Gaussian basis sampled on a uniform periodic grid.
//!
//! Mode `m` at the waist is `H_m(√2 x / w0) · exp(-x²/w0²)` up to a constant.
//! Profiles are evaluated with the normalized Hermite-function recurrence
//!
//! ```text
//! ψ₀(ξ)   = π^(-1/4) e^(-ξ²/2)
//! ψₘ₊₁(ξ) = √(2/(m+1)) ξ ψₘ(ξ) − √(m/(m+1)) ψₘ₋₁(ξ),   ξ = √2 x / w0
//! ```
//!
//! which is the physicists' three-term recurrence with each order rescaled so
//! that nothing overflows for orders in the tens. Sampled columns are then
//! normalized discretely (unit Euclidean norm over the grid).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

pub const DEFAULT_WAIST_UM: f64 = 20.0;
pub const DEFAULT_WAVELENGTH_NM: f64 = 810.0;
pub const DEFAULT_SAMPLES: usize = 8192;
pub const DEFAULT_CHANNELS: usize = 987;

/// Largest tolerated loss of mode energy to grid truncation.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

/// Period of a window whose plane-wave channels with |k| ≤ 2π n/λ number
/// exactly `channels` (odd): the period sits half a channel above the cut-off.
pub fn window_for_channels(wavelength_nm: f64, exit_index: f64, channels: usize) -> f64 {
    let half = (channels.saturating_sub(1) / 2) as f64;
    (half + 0.5) * wavelength_nm * 1e-3 / exit_index
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgBasis {
    dim: usize,
    waist_um: f64,
    wavelength_nm: f64,
    samples: usize,
    spacing_um: f64,
}

impl HgBasis {
    /// `samples` points spaced `window_um / samples` apart, symmetric about 0.
    pub fn new(
        dim: usize,
        waist_um: f64,
        wavelength_nm: f64,
        samples: usize,
        window_um: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("basis needs at least one mode".into()));
        }
        if samples < 2 {
            return Err(Error::Parameter("grid needs at least two samples".into()));
        }
        if !(waist_um > 0.0 && wavelength_nm > 0.0 && window_um > 0.0) {
            return Err(Error::Parameter(
                "waist, wavelength and window must be positive".into(),
            ));
        }
        let basis = Self {
            dim,
            waist_um,
            wavelength_nm,
            samples,
            spacing_um: window_um / samples as f64,
        };
        basis.check_truncation()?;
        Ok(basis)
    }

    /// w0 = 20 µm at 810 nm, window sized for 987 air channels.
    pub fn with_defaults(dim: usize) -> Result<Self> {
        let window = window_for_channels(DEFAULT_WAVELENGTH_NM, 1.0, DEFAULT_CHANNELS);
        Self::new(
            dim,
            DEFAULT_WAIST_UM,
            DEFAULT_WAVELENGTH_NM,
            DEFAULT_SAMPLES,
            window,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn waist_um(&self) -> f64 {
        self.waist_um
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    pub fn window_um(&self) -> f64 {
        self.spacing_um * self.samples as f64
    }

    pub fn position(&self, i: usize) -> f64 {
        (i as f64 - (self.samples as f64 - 1.0) / 2.0) * self.spacing_um
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.samples).map(|i| self.position(i)).collect()
    }

    /// Same basis with a different number of modes.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(
            dim,
            self.waist_um,
            self.wavelength_nm,
            self.samples,
            self.window_um(),
        )
    }

    /// Discretely normalized profile of mode `m`.
    pub fn mode(&self, m: usize) -> Result<DVector<C64>> {
        if m >= self.dim {
            return Err(Error::Domain(format!(
                "mode order {m} outside basis of dimension {}",
                self.dim
            )));
        }
        let raw: Vec<f64> = (0..self.samples)
            .map(|i| hermite_functions(self.xi(i), m + 1)[m])
            .collect();
        Ok(normalized(&raw))
    }

    /// `samples × D` matrix whose column m is [`HgBasis::mode`]`(m)`.
    pub fn matrix(&self) -> DMatrix<C64> {
        let mut raw = DMatrix::<f64>::zeros(self.samples, self.dim);
        for i in 0..self.samples {
            for (m, v) in hermite_functions(self.xi(i), self.dim)
                .into_iter()
                .enumerate()
            {
                raw[(i, m)] = v;
            }
        }
        let cols: Vec<DVector<C64>> = (0..self.dim)
            .map(|m| normalized(raw.column(m).as_slice()))
            .collect();
        DMatrix::from_columns(&cols)
    }

    fn xi(&self, i: usize) -> f64 {
        std::f64::consts::SQRT_2 * self.position(i) / self.waist_um
    }

    fn check_truncation(&self) -> Result<()> {
        let weight = std::f64::consts::SQRT_2 * self.spacing_um / self.waist_um;
        let mut energy = vec![0.0; self.dim];
        for i in 0..self.samples {
            for (m, v) in hermite_functions(self.xi(i), self.dim)
                .into_iter()
                .enumerate()
            {
                energy[m] += v * v * weight;
            }
        }
        for (m, e) in energy.into_iter().enumerate() {
            if (e - 1.0).abs() > TRUNCATION_TOLERANCE {
                return Err(Error::Domain(format!(
                    "grid of {:.3} µm captures {e:.9} of mode {m}'s energy",
                    self.window_um()
                )));
            }
        }
        Ok(())
    }
}

/// ψ₀(ξ) … ψ_{count-1}(ξ), unit-normalized on the real line.
fn hermite_functions(xi: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    out.push(psi0);
    if count > 1 {
        out.push(std::f64::consts::SQRT_2 * xi * psi0);
    }
    for m in 1..count.saturating_sub(1) {
        let mf = m as f64;
        let next = (2.0 / (mf + 1.0)).sqrt() * xi * out[m] - (mf / (mf + 1.0)).sqrt() * out[m - 1];
        out.push(next);
    }
    out
}

fn normalized(raw: &[f64]) -> DVector<C64> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    DVector::from_iterator(raw.len(), raw.iter().map(|&v| C64::new(v / norm, 0.0)))
}
