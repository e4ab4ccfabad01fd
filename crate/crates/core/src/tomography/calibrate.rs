//! Instrument calibration from known probe states.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::instrument::{basis, InstrumentMatrix};
use crate::measurement::CorrelationData;
use crate::state::DensityMatrix;
use crate::C64;

/// |m⟩⟨m| and the projectors onto (|m⟩ ± |n⟩)/√2, (|m⟩ ± i|n⟩)/√2 for m < n:
/// 2D² − D states spanning all Hermitian matrices.
pub fn standard_probes(dim: usize) -> Result<Vec<DensityMatrix>> {
    let ket = |m: usize, n: usize, phase: C64| {
        let mut v = DVector::<C64>::zeros(dim);
        v[m] += C64::new(1.0, 0.0);
        if m != n {
            v[n] += phase;
        }
        v
    };
    let mut probes = Vec::with_capacity(2 * dim * dim - dim);
    for m in 0..dim {
        probes.push(DensityMatrix::from_pure(
            &ket(m, m, C64::new(0.0, 0.0)),
            dim,
            1,
        )?);
    }
    for m in 0..dim {
        for n in m + 1..dim {
            for phase in [
                C64::new(1.0, 0.0),
                C64::new(-1.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
            ] {
                probes.push(DensityMatrix::from_pure(&ket(m, n, phase), dim, 1)?);
            }
        }
    }
    Ok(probes)
}

/// Least-squares single-photon instrument from probe states and their responses.
pub fn calibrate(
    probes: &[DensityMatrix],
    responses: &[CorrelationData],
) -> Result<InstrumentMatrix> {
    let first = probes
        .first()
        .ok_or_else(|| Error::Parameter("no probe states".into()))?;
    let dim = first.dim();
    if probes.len() != responses.len() {
        return Err(Error::Dimension(format!(
            "{} probes with {} responses",
            probes.len(),
            responses.len()
        )));
    }
    if probes.iter().any(|p| p.photons() != 1 || p.dim() != dim) {
        return Err(Error::Dimension(
            "probes must be single-photon states of one dimension".into(),
        ));
    }
    let pixels = responses[0].values.len();
    if responses.iter().any(|r| r.values.len() != pixels) {
        return Err(Error::Dimension("responses differ in length".into()));
    }
    let d2 = dim * dim;
    let mut x = DMatrix::<f64>::zeros(probes.len(), d2);
    for (i, p) in probes.iter().enumerate() {
        for (k, c) in basis::coordinates(p.entries(), dim, 1)
            .into_iter()
            .enumerate()
        {
            x[(i, k)] = c;
        }
    }
    let gamma = DMatrix::from_fn(probes.len(), pixels, |i, l| responses[i].values[l]);

    let svd = SVD::new(x.clone(), true, true);
    let smax = svd.singular_values.max();
    let cutoff = probes.len().max(d2) as f64 * f64::EPSILON * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < d2 {
        let smin = if probes.len() >= d2 {
            svd.singular_values.min()
        } else {
            0.0
        };
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        return Err(Error::ProbeDeficiency {
            rank,
            required: d2,
            condition,
        });
    }
    let mt = svd
        .solve(&gamma, cutoff)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    InstrumentMatrix::from_real_rows(mt.transpose(), dim)
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_instrument;
    use super::*;
    use crate::measurement::ideal_measurement;

    fn responses(m: &InstrumentMatrix, probes: &[DensityMatrix]) -> Vec<CorrelationData> {
        probes
            .iter()
            .map(|p| ideal_measurement(m, p).unwrap())
            .collect()
    }

    fn rel_error(a: &InstrumentMatrix, b: &InstrumentMatrix) -> f64 {
        (a.single_complex() - b.single_complex()).norm() / b.single_complex().norm()
    }

    #[test]
    fn standard_probe_count() {
        assert_eq!(standard_probes(4).unwrap().len(), 28);
    }

    #[test]
    fn standard_probes_recover_instrument() {
        let m = random_instrument(4, 30, 1);
        let probes = standard_probes(4).unwrap();
        let est = calibrate(&probes, &responses(&m, &probes)).unwrap();
        assert!(rel_error(&est, &m) < 1e-8);
    }

    #[test]
    fn random_full_rank_probes_recover_instrument() {
        let m = random_instrument(3, 20, 2);
        let probes: Vec<_> = (0..9)
            .map(|s| DensityMatrix::random(3, 1, 3, 100 + s).unwrap())
            .collect();
        let est = calibrate(&probes, &responses(&m, &probes)).unwrap();
        assert!(rel_error(&est, &m) < 1e-8);
    }

    #[test]
    fn too_few_probes_are_reported() {
        let m = random_instrument(3, 20, 2);
        let probes: Vec<_> = (0..8)
            .map(|s| DensityMatrix::random(3, 1, 3, s).unwrap())
            .collect();
        match calibrate(&probes, &responses(&m, &probes)) {
            Err(Error::ProbeDeficiency { rank, required, .. }) => {
                assert_eq!((rank, required), (8, 9))
            }
            other => panic!("{other:?}"),
        }
    }
}
