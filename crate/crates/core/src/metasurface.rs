//! Random 1-D freeform metasurfaces: alternating gap/ridge widths on a
//! substrate, generated from a shifted Gaussian width distribution.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RIDGE_INDEX: f64 = 3.74;
pub const DEFAULT_SUBSTRATE_INDEX: f64 = 1.45;
pub const DEFAULT_TARGET_WIDTH_UM: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Gap,
    Ridge,
}

impl Element {
    fn other(self) -> Self {
        match self {
            Element::Gap => Element::Ridge,
            Element::Ridge => Element::Gap,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetasurfaceGeometry {
    pub widths_nm: Vec<f64>,
    pub height_nm: f64,
    pub d_min_nm: f64,
    pub ridge_index: f64,
    pub substrate_index: f64,
    pub wavelength_nm: f64,
    pub rng_seed: u64,
    pub first_element: Element,
}

/// Inputs of [`generate_random`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub mean_size_nm: f64,
    pub d_min_nm: f64,
    pub height_nm: f64,
    pub target_width_um: f64,
    pub wavelength_nm: f64,
    pub ridge_index: f64,
    pub substrate_index: f64,
}

impl GenerationParams {
    pub fn new(mean_size_nm: f64, d_min_nm: f64, height_nm: f64) -> Self {
        Self {
            mean_size_nm,
            d_min_nm,
            height_nm,
            ..Default::default()
        }
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            mean_size_nm: 222.0,
            d_min_nm: 0.0,
            height_nm: 800.0,
            target_width_um: DEFAULT_TARGET_WIDTH_UM,
            wavelength_nm: crate::hg::DEFAULT_WAVELENGTH_NM,
            ridge_index: DEFAULT_RIDGE_INDEX,
            substrate_index: DEFAULT_SUBSTRATE_INDEX,
        }
    }
}

/// Draws widths `d = d_min + r`, `r ~ N(μ−d_min, (μ−d_min)²)`, redrawing any
/// `r ≤ 0`, until the total reaches the target width. The last element is
/// clipped so the widths sum to the target; if the clipped remainder would
/// fall below `d_min` it is merged into its predecessor.
///
/// Redrawing truncates the Gaussian at zero, so the realized mean width is
/// `d_min + 1.2876 (μ − d_min)` rather than μ; see [`truncated_width_moments`].
pub fn generate_random(params: &GenerationParams, seed: u64) -> Result<MetasurfaceGeometry> {
    let spread = params.mean_size_nm - params.d_min_nm;
    if !(spread > 0.0) || params.d_min_nm < 0.0 {
        return Err(Error::Parameter(format!(
            "mean size {} nm must exceed d_min {} nm ≥ 0",
            params.mean_size_nm, params.d_min_nm
        )));
    }
    if !(params.height_nm > 0.0) || !(params.target_width_um > 0.0) {
        return Err(Error::Parameter(
            "height and target width must be positive".into(),
        ));
    }
    let normal = Normal::new(spread, spread)
        .map_err(|e| Error::Parameter(format!("width distribution: {e}")))?;
    let mut rng = rng::seeded(seed);
    let target_nm = params.target_width_um * 1e3;
    let mut widths = Vec::new();
    let mut total = 0.0;
    while total < target_nm {
        let r = loop {
            let r = normal.sample(&mut rng);
            if r > 0.0 {
                break r;
            }
        };
        let d = params.d_min_nm + r;
        widths.push(d);
        total += d;
    }
    let last = widths.pop().expect("at least one width");
    let remainder = target_nm - (total - last);
    if widths.is_empty() || (remainder >= params.d_min_nm && remainder > 0.0) {
        widths.push(remainder);
    } else if let Some(prev) = widths.last_mut() {
        *prev += remainder;
    }
    Ok(MetasurfaceGeometry {
        widths_nm: widths,
        height_nm: params.height_nm,
        d_min_nm: params.d_min_nm,
        ridge_index: params.ridge_index,
        substrate_index: params.substrate_index,
        wavelength_nm: params.wavelength_nm,
        rng_seed: seed,
        first_element: Element::Gap,
    })
}

/// Mean and standard deviation of a width drawn by [`generate_random`]:
/// `d_min + r` with `r` a N(s, s²) variate truncated to `r > 0`, `s = μ − d_min`.
pub fn truncated_width_moments(mean_size_nm: f64, d_min_nm: f64) -> (f64, f64) {
    let s = mean_size_nm - d_min_nm;
    // truncation point sits one standard deviation below the mode
    let phi = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = 0.841_344_746_068_542_9; // Φ(1)
    let lambda = phi / tail;
    let mean = s * (1.0 + lambda);
    let var = s * s * (1.0 - lambda - lambda * lambda);
    (d_min_nm + mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonPositiveWidth {
        index: usize,
        width_nm: f64,
    },
    BelowMinimumFeature {
        index: usize,
        width_nm: f64,
        d_min_nm: f64,
    },
    TotalWidth {
        total_um: f64,
        target_um: f64,
        tolerance_um: f64,
    },
    NonPositiveHeight(f64),
    NegativeMinimumFeature(f64),
    NonFinite(&'static str),
    Empty,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonPositiveWidth { index, width_nm } => {
                write!(f, "width[{index}] = {width_nm} nm is not positive")
            }
            Violation::BelowMinimumFeature {
                index,
                width_nm,
                d_min_nm,
            } => write!(f, "width[{index}] = {width_nm} nm is below d_min = {d_min_nm} nm"),
            Violation::TotalWidth {
                total_um,
                target_um,
                tolerance_um,
            } => write!(
                f,
                "total width {total_um} µm differs from target {target_um} µm by more than {tolerance_um} µm"
            ),
            Violation::NonPositiveHeight(h) => write!(f, "height {h} nm is not positive"),
            Violation::NegativeMinimumFeature(d) => write!(f, "d_min {d} nm is negative"),
            Violation::NonFinite(field) => write!(f, "{field} is not finite"),
            Violation::Empty => write!(f, "geometry has no widths"),
        }
    }
}

impl MetasurfaceGeometry {
    pub fn total_width_um(&self) -> f64 {
        self.widths_nm.iter().sum::<f64>() * 1e-3
    }

    pub fn mean_width_nm(&self) -> f64 {
        if self.widths_nm.is_empty() {
            return 0.0;
        }
        self.widths_nm.iter().sum::<f64>() / self.widths_nm.len() as f64
    }

    pub fn element(&self, index: usize) -> Element {
        if index.is_multiple_of(2) {
            self.first_element
        } else {
            self.first_element.other()
        }
    }

    /// `(start_um, end_um, element)` for every width, laid out left to right
    /// and centred on x = 0.
    pub fn segments(&self) -> Vec<(f64, f64, Element)> {
        let mut x = -0.5 * self.total_width_um();
        self.widths_nm
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let start = x;
                x += w * 1e-3;
                (start, x, self.element(i))
            })
            .collect()
    }

    /// All invariant violations. `target_width_um`, when given, also checks
    /// `|Σd − target| ≤ max(d)`.
    pub fn validate(&self, target_width_um: Option<f64>) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.widths_nm.is_empty() {
            out.push(Violation::Empty);
        }
        for (name, v) in [
            ("height_nm", self.height_nm),
            ("d_min_nm", self.d_min_nm),
            ("ridge_index", self.ridge_index),
            ("substrate_index", self.substrate_index),
            ("wavelength_nm", self.wavelength_nm),
        ] {
            if !v.is_finite() {
                out.push(Violation::NonFinite(name));
            }
        }
        if !(self.height_nm > 0.0) {
            out.push(Violation::NonPositiveHeight(self.height_nm));
        }
        if self.d_min_nm < 0.0 {
            out.push(Violation::NegativeMinimumFeature(self.d_min_nm));
        }
        for (index, &w) in self.widths_nm.iter().enumerate() {
            if !w.is_finite() {
                out.push(Violation::NonFinite("widths_nm"));
            } else if w <= 0.0 {
                out.push(Violation::NonPositiveWidth { index, width_nm: w });
            } else if self.d_min_nm > 0.0 && w < self.d_min_nm {
                out.push(Violation::BelowMinimumFeature {
                    index,
                    width_nm: w,
                    d_min_nm: self.d_min_nm,
                });
            }
        }
        if let Some(target) = target_width_um {
            let tolerance = self.widths_nm.iter().copied().fold(0.0, f64::max) * 1e-3;
            let total = self.total_width_um();
            if (total - target).abs() > tolerance {
                out.push(Violation::TotalWidth {
                    total_um: total,
                    target_um: target,
                    tolerance_um: tolerance,
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = GeometryFile {
            format_version: FORMAT_VERSION,
            wavelength_nm: self.wavelength_nm,
            height_nm: self.height_nm,
            d_min_nm: self.d_min_nm,
            ridge_index: self.ridge_index,
            substrate_index: self.substrate_index,
            rng_seed: self.rng_seed,
            first_element: self.first_element,
            widths_nm: self.widths_nm.clone(),
        };
        serde_json::to_string_pretty(&file).expect("geometry serializes")
    }

    /// Parses and validates a geometry file.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeometryFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("geometry file: {e}")))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "geometry file: unsupported format_version {}",
                file.format_version
            )));
        }
        let geom = Self {
            widths_nm: file.widths_nm,
            height_nm: file.height_nm,
            d_min_nm: file.d_min_nm,
            ridge_index: file.ridge_index,
            substrate_index: file.substrate_index,
            wavelength_nm: file.wavelength_nm,
            rng_seed: file.rng_seed,
            first_element: file.first_element,
        };
        let violations = geom.validate(None);
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Validation(msg.join("; ")));
        }
        Ok(geom)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// SHA-256 of the serialized geometry, hex encoded.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    format_version: u32,
    wavelength_nm: f64,
    height_nm: f64,
    d_min_nm: f64,
    ridge_index: f64,
    substrate_index: f64,
    rng_seed: u64,
    first_element: Element,
    widths_nm: Vec<f64>,
}
