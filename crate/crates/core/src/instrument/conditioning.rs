//! Singular spectra, condition numbers and the SIC-POVM reference.

use nalgebra::{DMatrix, Vector3, SVD};
use serde::Serialize;

use super::InstrumentMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

/// Dense SVD is used up to this many matrix entries; beyond it the spectrum
/// comes from the Gram matrix.
const DENSE_SVD_ENTRIES: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Conditioning {
    pub kappa: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Singular values, descending.
    pub spectrum: Vec<f64>,
    pub well_posed: bool,
    pub note: Option<String>,
    pub method: &'static str,
}

impl Conditioning {
    fn from_spectrum(
        mut spectrum: Vec<f64>,
        rows: usize,
        cols: usize,
        method: &'static str,
    ) -> Self {
        spectrum.sort_by(|a, b| b.total_cmp(a));
        let sigma_max = spectrum.first().copied().unwrap_or(0.0);
        let sigma_min = spectrum.last().copied().unwrap_or(0.0);
        if rows < cols {
            return Self {
                kappa: f64::INFINITY,
                sigma_max,
                sigma_min: 0.0,
                spectrum,
                well_posed: false,
                note: Some(format!(
                    "under-determined: {rows} measurements for {cols} unknowns"
                )),
                method,
            };
        }
        let kappa = if sigma_min > 0.0 {
            sigma_max / sigma_min
        } else {
            f64::INFINITY
        };
        Self {
            kappa,
            sigma_max,
            sigma_min,
            spectrum,
            well_posed: true,
            note: None,
            method,
        }
    }
}

/// κ = σ_max/σ_min of an arbitrary real matrix.
pub fn condition_number_dense(a: &DMatrix<f64>) -> Result<Conditioning> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix".into()));
    }
    let svd = SVD::new(a.clone(), false, false);
    Ok(Conditioning::from_spectrum(
        svd.singular_values.iter().copied().collect(),
        a.nrows(),
        a.ncols(),
        "svd",
    ))
}

/// κ of the instrument's real-linear representation.
pub fn condition_number(m: &InstrumentMatrix) -> Result<Conditioning> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows < cols {
        return Ok(Conditioning::from_spectrum(Vec::new(), rows, cols, "none"));
    }
    if rows.saturating_mul(cols) <= DENSE_SVD_ENTRIES {
        return condition_number_dense(&m.dense_real()?);
    }
    let g = m.gram()?;
    let (values, _) = linalg::symmetric_eigen(&g);
    let spectrum = values.into_iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(Conditioning::from_spectrum(
        spectrum,
        rows,
        cols,
        "gram-eigen",
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SicReference {
    pub dim: usize,
    pub kappa: f64,
    pub lambda_1: f64,
    pub multiplicity_1: usize,
    pub lambda_2: f64,
    pub multiplicity_2: usize,
    /// Eigenvalues of the constructed Gram matrix, ascending.
    pub numeric_eigenvalues: Vec<f64>,
    /// Largest deviation of the numeric spectrum from the analytic one.
    pub max_deviation: f64,
}

/// G = (1/D²)[I + (J − I)/(D + 1)], the Gram matrix of a SIC-POVM instrument.
pub fn sic_gram(dim: usize) -> DMatrix<f64> {
    let n = dim * dim;
    let d2 = n as f64;
    let off = 1.0 / (d2 * (dim as f64 + 1.0));
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / d2 } else { off })
}

pub fn sic_reference(dim: usize) -> Result<SicReference> {
    if dim == 0 {
        return Err(Error::Parameter("dimension must be ≥ 1".into()));
    }
    let d = dim as f64;
    let lambda_1 = 1.0 / d;
    let lambda_2 = 1.0 / (d * (d + 1.0));
    let (values, _) = linalg::symmetric_eigen(&sic_gram(dim));
    let mut expected = vec![lambda_2; dim * dim - 1];
    expected.push(lambda_1);
    let max_deviation = values
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SicReference {
        dim,
        kappa: (d + 1.0).sqrt(),
        lambda_1,
        multiplicity_1: 1,
        lambda_2,
        multiplicity_2: dim * dim - 1,
        numeric_eigenvalues: values,
        max_deviation,
    })
}

/// The tetrahedral qubit SIC-POVM, F_i = Π_i / 2, and its instrument.
pub fn sic_povm_explicit(dim: usize) -> Result<(Vec<DMatrix<C64>>, InstrumentMatrix)> {
    if dim != 2 {
        return Err(Error::Unsupported(format!(
            "explicit SIC-POVM for D = {dim} (only D = 2)"
        )));
    }
    let s = 2f64.sqrt();
    let bloch = [
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(2.0 * s / 3.0, 0.0, -1.0 / 3.0),
        Vector3::new(-s / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0),
        Vector3::new(-s / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0),
    ];
    let one = C64::new(1.0, 0.0);
    let i = C64::i();
    let projectors: Vec<DMatrix<C64>> = bloch
        .iter()
        .map(|n| {
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    (one + n.z) * 0.5,
                    (one * n.x - i * n.y) * 0.5,
                    (one * n.x + i * n.y) * 0.5,
                    (one - n.z) * 0.5,
                ],
            )
        })
        .collect();
    let total: DMatrix<C64> = projectors
        .iter()
        .fold(DMatrix::zeros(2, 2), |acc, p| acc + p.scale(0.5));
    let completeness = (total - DMatrix::identity(2, 2)).norm();
    if completeness > 1e-12 {
        return Err(Error::Validation(format!(
            "SIC elements sum off identity by {completeness:e}"
        )));
    }
    for (a, pa) in projectors.iter().enumerate() {
        for (b, pb) in projectors.iter().enumerate() {
            let want = if a == b { 1.0 } else { 1.0 / 3.0 };
            let got = (pa * pb).trace();
            if (got - C64::new(want, 0.0)).norm() > 1e-12 {
                return Err(Error::Validation(format!("Tr(Π{a}Π{b}) = {got}")));
            }
        }
    }
    let elements: Vec<DMatrix<C64>> = projectors.into_iter().map(|p| p.scale(0.5)).collect();
    let m = InstrumentMatrix::from_povm(&elements)?;
    Ok((elements, m))
}
