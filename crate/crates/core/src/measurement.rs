//! Ideal and noisy detector data.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::instrument::InstrumentMatrix;
use crate::matfile::{Kind, MatrixFile};
use crate::rng;
use crate::state::DensityMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationData {
    pub values: Vec<f64>,
    pub photons: usize,
    pub pixels: usize,
    pub click: bool,
    pub indistinguishable: bool,
    pub noise_std: f64,
    /// ∞ for ideal data.
    pub snr: f64,
    pub seed: Option<u64>,
}

impl CorrelationData {
    pub fn is_ideal(&self) -> bool {
        self.noise_std == 0.0
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Errors unless the data was produced by an instrument of this shape.
    pub fn check_matches(&self, m: &InstrumentMatrix) -> Result<()> {
        if self.values.len() != m.rows()
            || self.photons != m.photons()
            || self.pixels != m.pixels()
            || self.click != m.is_click()
            || self.indistinguishable != m.is_indistinguishable()
        {
            return Err(Error::Dimension(format!(
                "data (N={}, L={}, {} values, click={}, indistinguishable={}) does not match instrument (N={}, L={}, {} rows, click={}, indistinguishable={})",
                self.photons,
                self.pixels,
                self.values.len(),
                self.click,
                self.indistinguishable,
                m.photons(),
                m.pixels(),
                m.rows(),
                m.is_click(),
                m.is_indistinguishable()
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> MatrixFile {
        let snr = if self.snr.is_finite() {
            json!(self.snr)
        } else {
            json!(null)
        };
        MatrixFile::real(
            Kind::Correlation,
            1,
            self.values.len(),
            self.values.clone(),
            json!({
                "N": self.photons,
                "L": self.pixels,
                "click_detector": self.click,
                "indistinguishable": self.indistinguishable,
                "noise_std": self.noise_std,
                "snr": snr,
                "seed": self.seed,
            }),
        )
    }

    pub fn from_file(file: &MatrixFile) -> Result<Self> {
        file.expect_kind(Kind::Correlation)?;
        let noise_std = file
            .metadata
            .get("noise_std")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Parse("metadata field `noise_std` missing".into()))?;
        let snr = file
            .metadata
            .get("snr")
            .and_then(|v| v.as_f64())
            .unwrap_or(f64::INFINITY);
        Ok(Self {
            values: file.real_values()?.to_vec(),
            photons: file.meta_usize("N")?,
            pixels: file.meta_usize("L")?,
            click: file.meta_bool("click_detector")?,
            indistinguishable: file.meta_bool("indistinguishable")?,
            noise_std,
            snr,
            seed: file.metadata.get("seed").and_then(|v| v.as_u64()),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_file().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(&MatrixFile::read(path)?)
    }
}

/// Γ = M ρ.
pub fn ideal_measurement(m: &InstrumentMatrix, rho: &DensityMatrix) -> Result<CorrelationData> {
    let values = m.apply(&m.coords_of(rho)?)?;
    Ok(CorrelationData {
        values,
        photons: m.photons(),
        pixels: m.pixels(),
        click: m.is_click(),
        indistinguishable: m.is_indistinguishable(),
        noise_std: 0.0,
        snr: f64::INFINITY,
        seed: None,
    })
}

/// Adds i.i.d. N(0, (mean Γ / snr)²) noise; values are not clipped.
pub fn add_noise(gamma: &CorrelationData, snr_target: f64, seed: u64) -> Result<CorrelationData> {
    if !gamma.is_ideal() {
        return Err(Error::Parameter("noise must be added to ideal data".into()));
    }
    if !(snr_target > 0.0) {
        return Err(Error::Parameter(format!(
            "SNR target {snr_target} must be positive"
        )));
    }
    let mean = gamma.mean();
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::UndefinedSnr(format!("signal mean is {mean}")));
    }
    let std = mean / snr_target;
    let mut out = gamma.clone();
    out.noise_std = std;
    out.snr = snr_target;
    out.seed = Some(seed);
    if std > 0.0 {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
        let mut r = rng::seeded(seed);
        for v in &mut out.values {
            *v += normal.sample(&mut r);
        }
    }
    Ok(out)
}

/// mean(Γ_ideal) / std(Γ_noisy − Γ_ideal), population standard deviation.
pub fn measure_snr(ideal: &[f64], noisy: &[f64]) -> Result<f64> {
    if ideal.len() != noisy.len() {
        return Err(Error::Dimension(format!(
            "{} ideal values vs {} noisy values",
            ideal.len(),
            noisy.len()
        )));
    }
    if ideal.is_empty() {
        return Err(Error::UndefinedSnr("empty data".into()));
    }
    let n = ideal.len() as f64;
    let diff: Vec<f64> = noisy.iter().zip(ideal).map(|(a, b)| a - b).collect();
    let dm = diff.iter().sum::<f64>() / n;
    let std = (diff.iter().map(|d| (d - dm).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Err(Error::UndefinedSnr(
            "noise has zero standard deviation".into(),
        ));
    }
    Ok(ideal.iter().sum::<f64>() / n / std)
}
