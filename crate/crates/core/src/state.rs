//! Density matrices of N photons in a D-dimensional HG basis.
//!
//! Multi-photon indices are Kronecker ordered: basis state `|m₁,…,m_N⟩` sits
//! at `Σ mₙ D^(N−1−n)`. Flattening is row-major: entry `(i, j)` of ρ goes to
//! `i·D^N + j`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matfile::{Kind, MatrixFile};
use crate::rng;
use crate::C64;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
    dim: usize,
    photons: usize,
    symmetric_sector: bool,
}

fn space_size(dim: usize, photons: usize) -> Result<usize> {
    if dim == 0 || photons == 0 {
        return Err(Error::Parameter(
            "dimension and photon number must be ≥ 1".into(),
        ));
    }
    dim.checked_pow(photons as u32)
        .ok_or_else(|| Error::Parameter("Hilbert space too large".into()))
}

impl DensityMatrix {
    /// Checks every physicality invariant and wraps `entries`.
    pub fn new(entries: DMatrix<C64>, dim: usize, photons: usize) -> Result<Self> {
        let n = space_size(dim, photons)?;
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Dimension(format!(
                "{}x{} matrix for D={dim}, N={photons} (expected {n}x{n})",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let rho = Self {
            entries,
            dim,
            photons,
            symmetric_sector: false,
        };
        rho.check()?;
        Ok(rho)
    }

    fn check(&self) -> Result<()> {
        let m = &self.entries;
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix".into()));
        }
        let herm = linalg::frobenius_max_abs(&(m - m.adjoint()));
        if herm >= HERMITIAN_TOL {
            return Err(Error::NotPhysical(format!(
                "not Hermitian (max |ρ−ρ†| = {herm:e})"
            )));
        }
        let trace = m.trace();
        if (trace.re - 1.0).abs() >= TRACE_TOL || trace.im.abs() >= TRACE_TOL {
            return Err(Error::NotPhysical(format!("trace {trace} ≠ 1")));
        }
        let (values, _) = linalg::hermitian_eigen(m);
        if values[0] < -PSD_TOL {
            return Err(Error::NotPhysical(format!(
                "negative eigenvalue {:e}",
                values[0]
            )));
        }
        if self.symmetric_sector && self.swap_asymmetry() >= SYMMETRY_TOL {
            return Err(Error::NotPhysical("not exchange symmetric".into()));
        }
        Ok(())
    }

    /// Normalized |ψ⟩⟨ψ|.
    pub fn from_pure(coefficients: &DVector<C64>, dim: usize, photons: usize) -> Result<Self> {
        let n = space_size(dim, photons)?;
        if coefficients.len() != n {
            return Err(Error::Dimension(format!(
                "{} coefficients for a {n}-dimensional space",
                coefficients.len()
            )));
        }
        let norm = coefficients.norm();
        if !(norm > 0.0) {
            return Err(Error::Parameter("zero state vector".into()));
        }
        let psi = coefficients / C64::new(norm, 0.0);
        let m = &psi * psi.adjoint();
        Self::new(linalg::hermitian_part(&m), dim, photons)
    }

    /// Σ pⱼ |ψⱼ⟩⟨ψⱼ| with each ψⱼ normalized.
    pub fn mixed(components: &[(f64, DVector<C64>)], dim: usize, photons: usize) -> Result<Self> {
        let n = space_size(dim, photons)?;
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| c.0 < 0.0) {
            return Err(Error::Parameter(format!(
                "probabilities must be non-negative and sum to 1 (sum {total})"
            )));
        }
        let mut m = DMatrix::<C64>::zeros(n, n);
        for (p, psi) in components {
            if psi.len() != n {
                return Err(Error::Dimension(format!(
                    "component of length {} in a {n}-dimensional space",
                    psi.len()
                )));
            }
            let norm = psi.norm();
            if !(norm > 0.0) {
                return Err(Error::Parameter("zero state vector".into()));
            }
            let v = psi / C64::new(norm, 0.0);
            m += (&v * v.adjoint()) * C64::new(*p, 0.0);
        }
        let trace = m.trace().re;
        m /= C64::new(trace, 0.0);
        Self::new(linalg::hermitian_part(&m), dim, photons)
    }

    pub fn maximally_mixed(dim: usize, photons: usize) -> Result<Self> {
        let n = space_size(dim, photons)?;
        Self::new(
            DMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0),
            dim,
            photons,
        )
    }

    /// AA†/Tr(AA†) with A a `D^N × rank` matrix of standard complex Gaussians.
    pub fn random(dim: usize, photons: usize, rank: usize, seed: u64) -> Result<Self> {
        let n = space_size(dim, photons)?;
        if rank == 0 || rank > n {
            return Err(Error::Parameter(format!("rank {rank} outside 1..={n}")));
        }
        let mut r = rng::seeded(seed);
        let a = DMatrix::from_fn(n, rank, |_, _| {
            C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r))
        });
        let m = &a * a.adjoint();
        let trace = m.trace().re;
        Self::new(
            linalg::hermitian_part(&(m / C64::new(trace, 0.0))),
            dim,
            photons,
        )
    }

    /// Wraps a matrix that is physical only up to round-off: Hermitian part,
    /// trace rescaled. Used for solver outputs.
    pub(crate) fn from_projected(
        entries: DMatrix<C64>,
        dim: usize,
        photons: usize,
    ) -> Result<Self> {
        let mut m = linalg::hermitian_part(&entries);
        let trace = m.trace().re;
        m /= C64::new(trace, 0.0);
        Self::new(m, dim, photons)
    }

    /// Marks the state as living in the two-photon exchange-symmetric sector.
    pub fn with_symmetric_sector(mut self) -> Result<Self> {
        if self.photons != 2 {
            return Err(Error::Unsupported(
                "exchange symmetry is implemented for two photons".into(),
            ));
        }
        self.symmetric_sector = true;
        self.check()?;
        Ok(self)
    }

    /// Exchanges the two photons: (SρS)[(a,b),(c,d)] = ρ[(b,a),(d,c)].
    pub fn swapped(&self) -> DMatrix<C64> {
        let d = self.dim;
        assert_eq!(self.photons, 2);
        let swap = |i: usize| (i % d) * d + i / d;
        DMatrix::from_fn(d * d, d * d, |i, j| self.entries[(swap(i), swap(j))])
    }

    fn swap_asymmetry(&self) -> f64 {
        if self.photons != 2 {
            return f64::INFINITY;
        }
        linalg::frobenius_max_abs(&(self.swapped() - &self.entries))
    }

    /// True when ρ is invariant under photon exchange within tolerance.
    pub fn is_exchange_symmetric(&self) -> bool {
        self.photons == 2 && self.swap_asymmetry() < SYMMETRY_TOL
    }

    /// ρ ⊗ σ as a state of `N_ρ + N_σ` photons.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension(
                "tensor factors of different dimension".into(),
            ));
        }
        Self::new(
            self.entries.kronecker(&other.entries),
            self.dim,
            self.photons + other.photons,
        )
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn symmetric_sector(&self) -> bool {
        self.symmetric_sector
    }

    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }

    /// Row-major vec(ρ).
    pub fn flatten(&self) -> Vec<C64> {
        flatten(&self.entries)
    }

    pub fn to_file(&self) -> MatrixFile {
        MatrixFile::complex(
            Kind::Density,
            &self.entries,
            json!({"D": self.dim, "N": self.photons, "symmetric_sector": self.symmetric_sector}),
        )
    }

    pub fn from_file(file: &MatrixFile) -> Result<Self> {
        file.expect_kind(Kind::Density)?;
        let rho = Self::new(
            file.complex_matrix()?,
            file.meta_usize("D")?,
            file.meta_usize("N")?,
        )?;
        if file.meta_bool("symmetric_sector").unwrap_or(false) {
            rho.with_symmetric_sector()
        } else {
            Ok(rho)
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_file().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(&MatrixFile::read(path)?)
    }
}

pub fn flatten(m: &DMatrix<C64>) -> Vec<C64> {
    m.transpose().as_slice().to_vec()
}

pub fn unflatten(v: &[C64], n: usize) -> DMatrix<C64> {
    DMatrix::from_row_slice(n, n, v)
}

/// Basis vector `|m₁,…,m_N⟩`.
pub fn basis_ket(dim: usize, modes: &[usize]) -> DVector<C64> {
    let n = dim.pow(modes.len() as u32);
    let idx = modes.iter().fold(0, |acc, &m| acc * dim + m);
    let mut v = DVector::zeros(n);
    v[idx] = C64::new(1.0, 0.0);
    v
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))².
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.size() != sigma.size() {
        return Err(Error::Dimension(format!(
            "fidelity between {}- and {}-dimensional states",
            rho.size(),
            sigma.size()
        )));
    }
    let root = |m: &DMatrix<C64>| {
        linalg::psd_sqrt(m, PSD_TOL).map_err(|l| Error::NotPhysical(format!("eigenvalue {l:e}")))
    };
    // trace norm of √ρ√σ; avoids square roots of round-off eigenvalues
    let product = root(rho.entries())? * root(sigma.entries())?;
    let s: f64 = nalgebra::SVD::new(product, false, false)
        .singular_values
        .sum();
    Ok((s * s).clamp(0.0, 1.0))
}
