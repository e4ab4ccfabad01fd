//! Two-line matrix container shared by transmission, instrument, correlation
//! and density files.
//!
//! Line 1 is a JSON header `{format_version, kind, rows, cols, dtype, metadata}`;
//! line 2 is the base64 (standard alphabet) encoding of the little-endian,
//! row-major payload. Complex entries are stored as interleaved `(re, im)`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::C64;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Transmission,
    Instrument,
    Correlation,
    Density,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Complex128,
    Float64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    pub kind: Kind,
    pub rows: usize,
    pub cols: usize,
    pub metadata: Value,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    kind: Kind,
    rows: usize,
    cols: usize,
    dtype: Dtype,
    metadata: Value,
}

impl MatrixFile {
    pub fn complex(kind: Kind, m: &DMatrix<C64>, metadata: Value) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter().copied());
        }
        Self {
            kind,
            rows: m.nrows(),
            cols: m.ncols(),
            metadata,
            payload: Payload::Complex(data),
        }
    }

    pub fn real(kind: Kind, rows: usize, cols: usize, data: Vec<f64>, metadata: Value) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self {
            kind,
            rows,
            cols,
            metadata,
            payload: Payload::Real(data),
        }
    }

    pub fn expect_kind(&self, kind: Kind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Parse(format!(
                "expected a {kind:?} file, found {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn complex_matrix(&self) -> Result<DMatrix<C64>> {
        match &self.payload {
            Payload::Complex(d) => Ok(DMatrix::from_row_slice(self.rows, self.cols, d)),
            Payload::Real(d) => {
                Ok(DMatrix::from_row_slice(self.rows, self.cols, d).map(|x| C64::new(x, 0.0)))
            }
        }
    }

    pub fn real_values(&self) -> Result<&[f64]> {
        match &self.payload {
            Payload::Real(d) => Ok(d),
            Payload::Complex(_) => Err(Error::Parse("expected float64 payload".into())),
        }
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.metadata
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| {
                Error::Parse(format!("metadata field `{key}` missing or not an integer"))
            })
    }

    pub fn meta_bool(&self, key: &str) -> Result<bool> {
        self.metadata
            .get(key)
            .and_then(Value::as_bool)
            .ok_or_else(|| Error::Parse(format!("metadata field `{key}` missing or not a boolean")))
    }

    pub fn to_text(&self) -> String {
        let (dtype, bytes) = match &self.payload {
            Payload::Real(d) => (
                Dtype::Float64,
                d.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>(),
            ),
            Payload::Complex(d) => (
                Dtype::Complex128,
                d.iter()
                    .flat_map(|z| z.re.to_le_bytes().into_iter().chain(z.im.to_le_bytes()))
                    .collect(),
            ),
        };
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            rows: self.rows,
            cols: self.cols,
            dtype,
            metadata: self.metadata.clone(),
        };
        format!(
            "{}\n{}\n",
            serde_json::to_string(&header).expect("header serializes"),
            STANDARD.encode(bytes)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::Parse("line 1: missing header".into()))?;
        let header: Header =
            serde_json::from_str(head).map_err(|e| Error::Parse(format!("line 1: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "line 1: unsupported format_version {}",
                header.format_version
            )));
        }
        let body = lines.next().unwrap_or("").trim();
        let bytes = STANDARD
            .decode(body)
            .map_err(|e| Error::Parse(format!("line 2: {e}")))?;
        let count = header.rows * header.cols;
        let width = match header.dtype {
            Dtype::Float64 => 8,
            Dtype::Complex128 => 16,
        };
        if bytes.len() != count * width {
            return Err(Error::Dimension(format!(
                "payload holds {} bytes, header declares {}x{} {:?}",
                bytes.len(),
                header.rows,
                header.cols,
                header.dtype
            )));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if floats.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{:?} payload", header.kind)));
        }
        let payload = match header.dtype {
            Dtype::Float64 => Payload::Real(floats),
            Dtype::Complex128 => Payload::Complex(
                floats
                    .chunks_exact(2)
                    .map(|p| C64::new(p[0], p[1]))
                    .collect(),
            ),
        };
        Ok(Self {
            kind: header.kind,
            rows: header.rows,
            cols: header.cols,
            metadata: header.metadata,
            payload,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
