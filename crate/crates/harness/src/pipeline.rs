//! Geometry → transmission → instrument plumbing shared by the sweep, the
//! campaign and the CLI.

use metaqst::forward::{backends, bin_channels, TransmissionMatrix};
use metaqst::hg::{self, HgBasis};
use metaqst::instrument::InstrumentMatrix;
use metaqst::metasurface::MetasurfaceGeometry;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const DEFAULT_BACKEND: &str = "thin-element";

/// Default grid and waist at the geometry's wavelength.
pub fn default_basis(dim: usize, wavelength_nm: f64) -> metaqst::Result<HgBasis> {
    let window = hg::window_for_channels(wavelength_nm, 1.0, hg::DEFAULT_CHANNELS);
    HgBasis::new(
        dim,
        hg::DEFAULT_WAIST_UM,
        wavelength_nm,
        hg::DEFAULT_SAMPLES,
        window,
    )
}

pub fn transmission_for(
    geom: &MetasurfaceGeometry,
    dim: usize,
    backend: &str,
) -> Result<TransmissionMatrix> {
    let basis = default_basis(dim, geom.wavelength_nm)?;
    Ok(backends().get(backend)?.transmission(geom, &basis)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reductions {
    pub click: bool,
    pub indistinguishable: bool,
}

/// Bins `t` into `pixels` contiguous pixels and builds the `photons`-fold
/// instrument with the requested reductions.
pub fn build_instrument(
    t: &TransmissionMatrix,
    pixels: usize,
    photons: usize,
    reductions: Reductions,
    memory_cap: Option<u128>,
) -> Result<InstrumentMatrix> {
    let mut m = InstrumentMatrix::from_transmission(t, &bin_channels(t, pixels)?)?;
    if let Some(cap) = memory_cap {
        m = m.with_memory_cap(cap);
    }
    reduce(m, photons, reductions)
}

pub fn reduce(
    m: InstrumentMatrix,
    photons: usize,
    reductions: Reductions,
) -> Result<InstrumentMatrix> {
    let mut m = if photons == 1 {
        m
    } else {
        m.tensor_power(photons)?
    };
    if reductions.click {
        m = m.reduce_click();
    }
    if reductions.indistinguishable {
        m = m.reduce_indistinguishable()?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use metaqst::metasurface::{generate_random, GenerationParams};

    #[test]
    fn two_photon_reduced_shape() {
        let g = generate_random(&GenerationParams::new(667.0, 0.0, 1000.0), 3).unwrap();
        let t = transmission_for(&g, 3, DEFAULT_BACKEND).unwrap();
        assert_eq!((t.channels(), t.modes()), (987, 3));
        let both = Reductions {
            click: true,
            indistinguishable: true,
        };
        let m = build_instrument(&t, 20, 2, both, None).unwrap();
        assert_eq!((m.rows(), m.cols()), (190, 45));
        let capped = build_instrument(&t, 987, 3, Reductions::default(), Some(1 << 20));
        assert!(matches!(
            capped,
            Err(crate::HarnessError::Core(metaqst::Error::Resource { .. }))
        ));
    }

    #[test]
    fn unknown_backend_lists_available() {
        let g = generate_random(&GenerationParams::new(667.0, 0.0, 1000.0), 3).unwrap();
        let err = transmission_for(&g, 3, "fdtd").unwrap_err();
        assert!(err.to_string().contains("thin-element"), "{err}");
    }
}
