//! Transmission matrices: HG coefficients → far-field channel amplitudes.

mod thin_element;

use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::hg::HgBasis;
use crate::matfile::{Kind, MatrixFile};
use crate::metasurface::MetasurfaceGeometry;
use crate::registry::{Named, Registry};
use crate::C64;

pub use thin_element::{slab_transmission, ThinElement};

/// Column norms may exceed one by this much before import fails.
pub const PASSIVITY_ERROR: f64 = 1e-6;
/// Column norms above `1 + PASSIVITY_WARN` are logged.
pub const PASSIVITY_WARN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ThinElement,
    Imported,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMatrix {
    /// channels × modes
    pub entries: DMatrix<C64>,
    /// transverse wavenumber of each row, rad/µm
    pub channel_k: Vec<f64>,
    pub wavelength_nm: f64,
    pub provenance: Provenance,
    pub geometry_hash: Option<String>,
    pub metadata: Map<String, Value>,
}

impl TransmissionMatrix {
    /// Wraps externally computed amplitudes; validates shape, finiteness and passivity.
    pub fn imported(
        entries: DMatrix<C64>,
        channel_k: Vec<f64>,
        wavelength_nm: f64,
    ) -> Result<Self> {
        let t = Self {
            entries,
            channel_k,
            wavelength_nm,
            provenance: Provenance::Imported,
            geometry_hash: None,
            metadata: Map::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn channels(&self) -> usize {
        self.entries.nrows()
    }

    pub fn modes(&self) -> usize {
        self.entries.ncols()
    }

    /// Detection probability of the maximally mixed input, Tr(T†T)/D.
    pub fn average_transmission(&self) -> f64 {
        self.entries.norm_squared() / self.modes() as f64
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.norm()).collect()
    }

    /// First `dim` columns: the same device seen through a smaller HG basis.
    pub fn truncate_modes(&self, dim: usize) -> Result<Self> {
        if dim == 0 || dim > self.modes() {
            return Err(Error::Parameter(format!(
                "cannot keep {dim} of {} modes",
                self.modes()
            )));
        }
        let mut out = self.clone();
        out.entries = self.entries.columns(0, dim).into_owned();
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.channel_k.len() != self.channels() {
            return Err(Error::Dimension(format!(
                "{} channel wavenumbers for {} rows",
                self.channel_k.len(),
                self.channels()
            )));
        }
        if self.modes() == 0 || self.channels() == 0 {
            return Err(Error::Dimension("empty transmission matrix".into()));
        }
        if self
            .entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("transmission matrix".into()));
        }
        for (j, n) in self.column_norms().into_iter().enumerate() {
            if n > 1.0 + PASSIVITY_ERROR {
                return Err(Error::Validation(format!(
                    "passivity violated: column {j} has norm {n}"
                )));
            }
            if n > 1.0 + PASSIVITY_WARN {
                log::warn!("column {j} norm {n} exceeds 1 within tolerance");
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> MatrixFile {
        let mut meta = self.metadata.clone();
        meta.insert("wavelength_nm".into(), json!(self.wavelength_nm));
        meta.insert("provenance".into(), json!(self.provenance));
        meta.insert("geometry_hash".into(), json!(self.geometry_hash));
        meta.insert("channel_k".into(), json!(self.channel_k));
        MatrixFile::complex(Kind::Transmission, &self.entries, Value::Object(meta))
    }

    /// Parses a transmission file. Whatever produced it, the result is tagged imported.
    pub fn from_file(file: &MatrixFile) -> Result<Self> {
        file.expect_kind(Kind::Transmission)?;
        let mut meta = match &file.metadata {
            Value::Object(m) => m.clone(),
            _ => return Err(Error::Parse("metadata must be an object".into())),
        };
        let channel_k: Vec<f64> = meta
            .remove("channel_k")
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::Parse(format!("metadata field `channel_k`: {e}")))?
            .ok_or_else(|| Error::Parse("metadata field `channel_k` missing".into()))?;
        let wavelength_nm = meta
            .remove("wavelength_nm")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Parse("metadata field `wavelength_nm` missing".into()))?;
        let geometry_hash = meta
            .remove("geometry_hash")
            .and_then(|v| v.as_str().map(str::to_owned));
        meta.remove("provenance");
        let mut t = Self::imported(file.complex_matrix()?, channel_k, wavelength_nm)?;
        t.geometry_hash = geometry_hash;
        t.metadata = meta;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_file().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(&MatrixFile::read(path)?)
    }
}

/// Contiguous partition of the channels into pixels. Pixel `l` collects
/// channels `floor(l C / L) .. floor((l+1) C / L)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelBinning {
    edges: Vec<usize>,
}

impl PixelBinning {
    pub fn contiguous(channels: usize, pixels: usize) -> Result<Self> {
        if pixels == 0 || pixels > channels {
            return Err(Error::Parameter(format!(
                "pixel count {pixels} must lie in 1..={channels}"
            )));
        }
        let edges = (0..=pixels).map(|l| l * channels / pixels).collect();
        Ok(Self { edges })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            edges: (0..=channels).collect(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn channels(&self) -> usize {
        *self.edges.last().expect("non-empty edges")
    }

    pub fn bin(&self, pixel: usize) -> Range<usize> {
        self.edges[pixel]..self.edges[pixel + 1]
    }
}

/// Binning of `t`'s channels into `pixels` contiguous pixels.
pub fn bin_channels(t: &TransmissionMatrix, pixels: usize) -> Result<PixelBinning> {
    PixelBinning::contiguous(t.channels(), pixels)
}

/// A physics model producing a transmission matrix from a geometry.
pub trait TransmissionBackend: Named + Send + Sync {
    fn transmission(
        &self,
        geom: &MetasurfaceGeometry,
        basis: &HgBasis,
    ) -> Result<TransmissionMatrix>;
}

pub fn backends() -> Registry<dyn TransmissionBackend> {
    let mut r: Registry<dyn TransmissionBackend> = Registry::empty("transmission backend");
    r.register(Arc::new(ThinElement::default()));
    r
}
