//! Thin-element screen plus plane-wave decomposition.
//!
//! Light enters from the substrate and leaves into the exit medium. Each grid
//! cell transmits like a uniform slab of thickness h: ridge material where a
//! ridge covers the cell, exit medium elsewhere, coverage-weighted in between.
//! The screened field is decomposed into the plane waves of the periodic
//! window and only propagating orders are kept.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::FftPlanner;
use serde_json::{json, Map};

use super::{Provenance, TransmissionBackend, TransmissionMatrix};
use crate::error::{Error, Result};
use crate::hg::HgBasis;
use crate::metasurface::{Element, MetasurfaceGeometry};
use crate::registry::Named;
use crate::C64;

#[derive(Clone, Debug)]
pub struct ThinElement {
    pub exit_index: f64,
}

impl Default for ThinElement {
    fn default() -> Self {
        Self { exit_index: 1.0 }
    }
}

impl Named for ThinElement {
    fn name(&self) -> &'static str {
        "thin-element"
    }
}

/// Power-normalized amplitude transmission (|t|² is the transmittance) of a
/// slab of index `n_film` and thickness `h_nm` between `n_in` and `n_out`, at
/// normal incidence from the `n_in` side.
pub fn slab_transmission(n_in: f64, n_film: f64, n_out: f64, h_nm: f64, wavelength_nm: f64) -> C64 {
    let delta = 2.0 * PI * n_film * h_nm / wavelength_nm;
    let (s, c) = delta.sin_cos();
    let i = C64::i();
    // characteristic matrix applied to (1, n_out)
    let b = C64::new(c, 0.0) - i * (s * n_out / n_film);
    let cc = -i * (n_film * s) + C64::new(c * n_out, 0.0);
    let t = 2.0 * n_in / (b * n_in + cc);
    t * (n_out / n_in).sqrt()
}

impl ThinElement {
    /// Fraction of each grid cell covered by ridge material.
    fn ridge_coverage(geom: &MetasurfaceGeometry, basis: &HgBasis) -> Vec<f64> {
        let n = basis.samples();
        let dx = basis.spacing_um();
        let left = basis.position(0) - 0.5 * dx;
        let mut cover = vec![0.0; n];
        for (a, b, kind) in geom.segments() {
            if kind != Element::Ridge {
                continue;
            }
            let first = (((a - left) / dx).floor().max(0.0)) as usize;
            let last = (((b - left) / dx).ceil() as usize).min(n);
            for (i, c) in cover.iter_mut().enumerate().take(last).skip(first) {
                let lo = left + i as f64 * dx;
                let overlap = (b.min(lo + dx) - a.max(lo)).max(0.0);
                *c += overlap / dx;
            }
        }
        for c in &mut cover {
            *c = c.clamp(0.0, 1.0);
        }
        cover
    }
}

impl TransmissionBackend for ThinElement {
    fn transmission(
        &self,
        geom: &MetasurfaceGeometry,
        basis: &HgBasis,
    ) -> Result<TransmissionMatrix> {
        let violations = geom.validate(None);
        if !violations.is_empty() {
            return Err(Error::Validation(violations[0].to_string()));
        }
        if (basis.wavelength_nm() - geom.wavelength_nm).abs() > 1e-9 * geom.wavelength_nm {
            return Err(Error::Dimension(format!(
                "basis wavelength {} nm differs from geometry wavelength {} nm",
                basis.wavelength_nm(),
                geom.wavelength_nm
            )));
        }
        let width = geom.total_width_um();
        if width > basis.window_um() {
            return Err(Error::Dimension(format!(
                "geometry width {width} µm exceeds grid window {} µm",
                basis.window_um()
            )));
        }
        let lambda_um = geom.wavelength_nm * 1e-3;
        let t_ridge = slab_transmission(
            geom.substrate_index,
            geom.ridge_index,
            self.exit_index,
            geom.height_nm,
            geom.wavelength_nm,
        );
        let t_gap = slab_transmission(
            geom.substrate_index,
            self.exit_index,
            self.exit_index,
            geom.height_nm,
            geom.wavelength_nm,
        );
        let screen: Vec<C64> = Self::ridge_coverage(geom, basis)
            .into_iter()
            .map(|f| t_ridge * f + t_gap * (1.0 - f))
            .collect();

        let n = basis.samples();
        let period = basis.window_um();
        let n_max = (period * self.exit_index / lambda_um).floor() as i64;
        let orders: Vec<i64> = (-n_max..=n_max).collect();
        let channel_k: Vec<f64> = orders
            .iter()
            .map(|&o| 2.0 * PI * o as f64 / period)
            .collect();
        let x0 = basis.position(0);
        let phase: Vec<C64> = channel_k
            .iter()
            .map(|&k| C64::from_polar(1.0 / (n as f64).sqrt(), -k * x0))
            .collect();

        let modes = basis.matrix();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut entries = DMatrix::<C64>::zeros(orders.len(), basis.dim());
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for m in 0..basis.dim() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = screen[i] * modes[(i, m)];
            }
            fft.process(&mut buf);
            for (row, &o) in orders.iter().enumerate() {
                let idx = o.rem_euclid(n as i64) as usize;
                entries[(row, m)] = buf[idx] * phase[row];
            }
        }

        let mut metadata = Map::new();
        metadata.insert("backend".into(), json!(self.name()));
        metadata.insert("window_um".into(), json!(period));
        metadata.insert("padding_per_side_um".into(), json!(0.5 * (period - width)));
        metadata.insert("samples".into(), json!(n));
        metadata.insert("exit_index".into(), json!(self.exit_index));
        metadata.insert("height_nm".into(), json!(geom.height_nm));
        metadata.insert("waist_um".into(), json!(basis.waist_um()));
        metadata.insert("realized_mean_width_nm".into(), json!(geom.mean_width_nm()));
        Ok(TransmissionMatrix {
            entries,
            channel_k,
            wavelength_nm: geom.wavelength_nm,
            provenance: Provenance::ThinElement,
            geometry_hash: Some(geom.content_hash()),
            metadata,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metasurface::{generate_random, GenerationParams};

    fn uniform(height_nm: f64, first: Element) -> MetasurfaceGeometry {
        MetasurfaceGeometry {
            widths_nm: vec![200_000.0],
            height_nm,
            d_min_nm: 0.0,
            ridge_index: 3.74,
            substrate_index: 1.45,
            wavelength_nm: 810.0,
            rng_seed: 0,
            first_element: first,
        }
    }

    /// Fabry-Perot transmittance from interface Fresnel coefficients.
    fn airy(n1: f64, n2: f64, n3: f64, h: f64, lambda: f64) -> f64 {
        let r12 = (n1 - n2) / (n1 + n2);
        let r23 = (n2 - n3) / (n2 + n3);
        let t12 = 4.0 * n1 * n2 / (n1 + n2).powi(2);
        let t23 = 4.0 * n2 * n3 / (n2 + n3).powi(2);
        let delta = 2.0 * PI * n2 * h / lambda;
        t12 * t23 / (1.0 + (r12 * r23).powi(2) + 2.0 * r12 * r23 * (2.0 * delta).cos())
    }

    #[test]
    fn slab_matches_airy_formula() {
        for h in [0.0, 50.0, 200.0, 333.0, 800.0, 1234.5] {
            let t = slab_transmission(1.45, 3.74, 1.0, h, 810.0);
            let a = airy(1.45, 3.74, 1.0, h, 810.0);
            assert!(
                (t.norm_sqr() - a).abs() < 1e-12,
                "h={h}: {} vs {a}",
                t.norm_sqr()
            );
        }
    }

    #[test]
    fn uniform_ridge_transmits_airy_power() {
        let basis = HgBasis::with_defaults(1).unwrap();
        for h in [200.0, 800.0] {
            let t = ThinElement::default()
                .transmission(&uniform(h, Element::Ridge), &basis)
                .unwrap();
            let power = t.entries.column(0).norm_squared();
            let expected = airy(1.45, 3.74, 1.0, h, 810.0);
            assert!(
                (power - expected).abs() < 1e-3,
                "h={h}: {power} vs {expected}"
            );
        }
    }

    #[test]
    fn vanishing_height_is_bare_interface() {
        let basis = HgBasis::with_defaults(4).unwrap();
        let t0 = slab_transmission(1.45, 3.74, 1.0, 0.0, 810.0);
        let tg = slab_transmission(1.45, 1.0, 1.0, 0.0, 810.0);
        assert!((t0 - tg).norm() < 1e-15);
        let interface = 4.0 * 1.45 / (2.45f64 * 2.45);
        assert!((t0.norm_sqr() - interface).abs() < 1e-15);
        let mut g = generate_random(&GenerationParams::new(222.0, 0.0, 800.0), 5).unwrap();
        g.height_nm = 1e-9;
        let t = ThinElement::default().transmission(&g, &basis).unwrap();
        for m in 0..4 {
            let p = t.entries.column(m).norm_squared();
            assert!((p - interface).abs() < 1e-6, "mode {m}: {p}");
        }
    }

    #[test]
    fn default_window_has_987_channels() {
        let basis = HgBasis::with_defaults(2).unwrap();
        let g = generate_random(&GenerationParams::new(222.0, 0.0, 800.0), 1).unwrap();
        let t = ThinElement::default().transmission(&g, &basis).unwrap();
        assert_eq!(t.channels(), 987);
        let k0 = 2.0 * PI / 0.81;
        assert!(t.channel_k.iter().all(|k| k.abs() <= k0));
        assert_eq!(t.provenance, Provenance::ThinElement);
    }

    #[test]
    fn output_is_passive_and_linear() {
        let basis = HgBasis::with_defaults(6).unwrap();
        let g = generate_random(&GenerationParams::new(333.0, 0.0, 600.0), 8).unwrap();
        let t = ThinElement::default().transmission(&g, &basis).unwrap();
        for n in t.column_norms() {
            assert!(n <= 1.0 + 1e-9);
        }
        let a = nalgebra::DVector::from_fn(6, |i, _| C64::new(i as f64, 1.0));
        let b = nalgebra::DVector::from_fn(6, |i, _| C64::new(-1.0, i as f64 * 0.5));
        let alpha = C64::new(0.3, -1.2);
        let lhs = &t.entries * (&a * alpha + &b);
        let rhs = &t.entries * &a * alpha + &t.entries * &b;
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn wavelength_mismatch_is_dimension_error() {
        let basis = HgBasis::new(2, 20.0, 700.0, 8192, 400.0).unwrap();
        let g = generate_random(&GenerationParams::default(), 1).unwrap();
        assert!(matches!(
            ThinElement::default().transmission(&g, &basis),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn coverage_integrates_to_ridge_width() {
        let basis = HgBasis::with_defaults(1).unwrap();
        let g = generate_random(&GenerationParams::new(222.0, 0.0, 800.0), 2).unwrap();
        let cover = ThinElement::ridge_coverage(&g, &basis);
        let ridge_um: f64 = g
            .segments()
            .iter()
            .filter(|s| s.2 == Element::Ridge)
            .map(|s| s.1 - s.0)
            .sum();
        let total: f64 = cover.iter().sum::<f64>() * basis.spacing_um();
        assert!((total - ridge_um).abs() < 1e-6, "{total} vs {ridge_um}");
    }
}
