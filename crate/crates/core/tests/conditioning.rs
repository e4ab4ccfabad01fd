//! Condition-number identities and the noise-amplification bound.

use metaqst::forward::{PixelBinning, TransmissionMatrix};
use metaqst::instrument::{condition_number, condition_number_dense, InstrumentMatrix};
use metaqst::linalg::kron_power;
use metaqst::measurement::CorrelationData;
use metaqst::tomography::pseudo_inverse_reconstruct;
use metaqst::{rng, C64};
use nalgebra::{DMatrix, DVector, SVD};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn random_instrument(dim: usize, pixels: usize, seed: u64) -> InstrumentMatrix {
    let mut r = rng::seeded(seed);
    let mut a = DMatrix::from_fn(pixels, dim, |_, _| {
        C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r))
    });
    let s = 1.1 * a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    a /= C64::new(s, 0.0);
    let t = TransmissionMatrix::imported(a, vec![0.0; pixels], 810.0).unwrap();
    InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(pixels)).unwrap()
}

fn data(values: Vec<f64>, m: &InstrumentMatrix) -> CorrelationData {
    CorrelationData {
        values,
        photons: m.photons(),
        pixels: m.pixels(),
        click: m.is_click(),
        indistinguishable: m.is_indistinguishable(),
        noise_std: 0.0,
        snr: f64::INFINITY,
        seed: None,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn complex_and_real_forms_share_a_spectrum() {
    let m = random_instrument(3, 15, 1);
    let sc = SVD::new(m.single_complex().clone(), false, false).singular_values;
    let sr = SVD::new(m.single_real().clone(), false, false).singular_values;
    let mut a: Vec<f64> = sc.iter().copied().collect();
    let mut b: Vec<f64> = sr.iter().copied().collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn gram_route_agrees_with_dense_svd() {
    let m = random_instrument(3, 12, 2).tensor_power(2).unwrap();
    let dense = condition_number_dense(&m.dense_real().unwrap()).unwrap();
    let g = m.gram().unwrap();
    let a = m.dense_real().unwrap();
    assert!((g - a.transpose() * &a).abs().max() < 1e-14);
    assert!((condition_number(&m).unwrap().kappa - dense.kappa).abs() < 1e-9 * dense.kappa);
}

#[test]
fn kronecker_power_of_real_factor() {
    let m = random_instrument(2, 5, 3);
    let k3 = kron_power(m.single_real(), 3);
    assert_eq!(k3.shape(), (125, 64));
    let dense = m.tensor_power(3).unwrap().dense_real().unwrap();
    assert!((k3 - dense).abs().max() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kappa_of_kronecker_square(seed in any::<u64>()) {
        let m = random_instrument(3, 12, seed);
        let k1 = condition_number(&m).unwrap().kappa;
        let k2 = condition_number(&m.tensor_power(2).unwrap()).unwrap().kappa;
        prop_assert!((k2 - k1 * k1).abs() <= 1e-8 * k1 * k1);
    }

    /// Consistent signal and in-range noise: 1/κ ≤ R_rec/R_mea ≤ κ.
    #[test]
    fn noise_amplification_is_bounded(seed in any::<u64>(), scale in 1e-4f64..1e-1) {
        let m = random_instrument(3, 20, seed);
        let kappa = condition_number(&m).unwrap().kappa;
        let mut r = rng::split(seed, 1);
        let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut r)).collect() };
        let y = gauss(9);
        let z: Vec<f64> = gauss(9).into_iter().map(|v| v * scale).collect();
        let gamma = m.apply(&y).unwrap();
        let eps = m.apply(&z).unwrap();
        let noisy: Vec<f64> = gamma.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let est = pseudo_inverse_reconstruct(&m, &data(noisy, &m)).unwrap();
        let err: Vec<f64> = est.iter().zip(&y).map(|(a, b)| a - b).collect();
        let ratio = (norm(&err) / norm(&y)) / (norm(&eps) / norm(&gamma));
        prop_assert!(ratio <= kappa * (1.0 + 1e-6));
        prop_assert!(ratio >= (1.0 - 1e-6) / kappa);
    }
}

#[test]
fn singular_vectors_attain_the_bound() {
    let m = random_instrument(3, 20, 7);
    let a = m.dense_real().unwrap();
    let svd = SVD::new(a.clone(), true, true);
    let s = &svd.singular_values;
    let imax = s.imax();
    let imin = s.imin();
    let kappa = s[imax] / s[imin];
    let vt = svd.v_t.unwrap();
    let y: DVector<f64> = vt.row(imax).transpose();
    let gamma = &a * &y;
    let eps = svd.u.unwrap().column(imin) * 1e-6;
    let noisy: Vec<f64> = (&gamma + &eps).iter().copied().collect();
    let est = pseudo_inverse_reconstruct(&m, &data(noisy, &m)).unwrap();
    let err = DVector::from_vec(est) - &y;
    let ratio = (err.norm() / y.norm()) / (eps.norm() / gamma.norm());
    assert!(
        ratio >= 0.99 * kappa && ratio <= kappa * (1.0 + 1e-6),
        "{ratio} vs {kappa}"
    );
}
