//! Acceptance suite. Each criterion prints one PASS/FAIL line to stderr
//! (uncaptured, so it shows up in plain `cargo test` output) and then
//! asserts. Run alone with
//!
//! ```text
//! cargo test -p metaqst-harness --test acceptance -- --test-threads=1
//! ```

use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use metaqst::forward::{backends, bin_channels, PixelBinning, TransmissionMatrix};
use metaqst::hg::HgBasis;
use metaqst::instrument::{condition_number, sic_povm_explicit, sic_reference, InstrumentMatrix};
use metaqst::measurement::{ideal_measurement, CorrelationData};
use metaqst::metasurface::{generate_random, GenerationParams};
use metaqst::state::{fidelity, flatten, DensityMatrix};
use metaqst::tomography::{
    calibrate, mle_reconstruct, pseudo_inverse_reconstruct, standard_probes, SolverConfig,
};
use metaqst::{rng, C64};
use metaqst_harness::campaign::{run_campaign, CampaignConfig, InstrumentSpec, StateSpec};
use metaqst_harness::pipeline::Reductions;
use metaqst_harness::stats::{mean, significantly_greater};
use metaqst_harness::sweep::{run_sweep, SweepConfig, SweepDataset, SweepOptions};
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Structure parameters of the well-conditioned designs used below.
const GOOD_HEIGHT_NM: f64 = 1000.0;
const GOOD_MEAN_NM: f64 = 667.0;

/// Runs `body`, prints the verdict line, then fails the test if the body
/// failed or overran `limit`.
fn criterion(n: u32, name: &str, limit: Duration, body: impl FnOnce() -> (bool, String)) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (ok, detail) = match &outcome {
        Ok((ok, detail)) => (*ok && elapsed < limit, detail.clone()),
        Err(_) => (false, "panicked".to_string()),
    };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n:>2} {:<4} {name}: {detail} [{:.2} s, limit {} s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    match outcome {
        Err(p) => resume_unwind(p),
        Ok((passed, detail)) => {
            assert!(passed, "criterion {n}: {detail}");
            assert!(
                elapsed < limit,
                "criterion {n}: took {elapsed:?}, limit {limit:?}"
            );
        }
    }
}

/// Random passive transmission: Gaussian entries, largest column norm 0.9.
fn random_transmission(channels: usize, modes: usize, seed: u64) -> TransmissionMatrix {
    let mut r = rng::seeded(seed);
    let mut a = DMatrix::from_fn(channels, modes, |_, _| {
        C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r))
    });
    let s = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max) / 0.9;
    a /= C64::new(s, 0.0);
    TransmissionMatrix::imported(a, vec![0.0; channels], 810.0).unwrap()
}

fn random_instrument(dim: usize, pixels: usize, seed: u64) -> InstrumentMatrix {
    let t = random_transmission(pixels, dim, seed);
    InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(pixels)).unwrap()
}

fn svd_kappa(a: &DMatrix<f64>) -> f64 {
    let s = SVD::new(a.clone(), false, false).singular_values;
    s.max() / s.min()
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

fn exact_data(values: Vec<f64>, m: &InstrumentMatrix) -> CorrelationData {
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

#[test]
fn criterion_01_sic_optimum() {
    criterion(1, "SIC-POVM optimum", Duration::from_secs(1), || {
        let (elements, m) = sic_povm_explicit(2).unwrap();
        let total = elements
            .iter()
            .fold(DMatrix::<C64>::zeros(2, 2), |acc, e| acc + e);
        assert!((total - DMatrix::identity(2, 2)).norm() < 1e-14);
        let kappa = svd_kappa(&m.dense_real().unwrap());
        let mut ok = (kappa - 3f64.sqrt()).abs() < 1e-10;
        ok &= (condition_number(&m).unwrap().kappa - 3f64.sqrt()).abs() < 1e-10;

        let mut worst: f64 = 0.0;
        for d in 2..=12usize {
            let n = d * d;
            let df = d as f64;
            // Gram of a SIC instrument, built here from its definition
            let g = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0 / (df * df)
                } else {
                    1.0 / (df * df * (df + 1.0))
                }
            });
            let mut oracle: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
            oracle.sort_by(f64::total_cmp);
            let reference = sic_reference(d).unwrap();
            let mut numeric = reference.numeric_eigenvalues.clone();
            numeric.sort_by(f64::total_cmp);
            let mut expected = vec![1.0 / (df * (df + 1.0)); n - 1];
            expected.push(1.0 / df);
            for ((a, b), e) in numeric.iter().zip(&oracle).zip(&expected) {
                worst = worst.max((a - e).abs()).max((b - e).abs());
            }
            let k = (numeric[n - 1] / numeric[0]).sqrt();
            ok &= (k - (df + 1.0).sqrt()).abs() < 1e-10;
            ok &= (reference.kappa - (df + 1.0).sqrt()).abs() < 1e-12;
        }
        ok &= worst < 1e-12;
        (
            ok,
            format!("κ(D=2) = {kappa:.15}, max Gram eigenvalue error {worst:.1e} over D=2..12"),
        )
    });
}

#[test]
fn criterion_02_kronecker_scaling() {
    criterion(2, "κ(M⊗M) = κ(M)²", Duration::from_secs(10), || {
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let m = random_instrument(3, 12, 1000 + seed);
            let single = m.dense_real().unwrap();
            let k1 = svd_kappa(&single);
            let k2_lib = condition_number(&m.tensor_power(2).unwrap()).unwrap().kappa;
            let k2_oracle = svd_kappa(&kron(&single, &single));
            worst = worst
                .max((k2_lib - k1 * k1).abs() / (k1 * k1))
                .max((k2_oracle - k1 * k1).abs() / (k1 * k1));
        }
        (
            worst < 1e-8,
            format!("20 instruments D=3 L=12, max relative error {worst:.1e}"),
        )
    });
}

#[test]
fn criterion_03_noise_amplification_bound() {
    criterion(
        3,
        "noise amplification bound",
        Duration::from_secs(30),
        || {
            let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut ok = true;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for seed in 0..100u64 {
                let dim = 2 + (seed % 3) as usize;
                let m = random_instrument(dim, 3 * dim * dim, 2000 + seed);
                let a = m.dense_real().unwrap();
                let kappa = svd_kappa(&a);
                let mut r = rng::split(seed, 3);
                let n = dim * dim;
                let scale = 10f64.powf(Uniform::new(-6.0, -1.0).unwrap().sample(&mut r));
                let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
                let z: Vec<f64> = (0..n)
                    .map(|_| -> f64 { StandardNormal.sample(&mut r) })
                    .map(|v| scale * v)
                    .collect();
                let gamma = m.apply(&y).unwrap();
                let eps = m.apply(&z).unwrap();
                let noisy = gamma.iter().zip(&eps).map(|(g, e)| g + e).collect();
                let est = pseudo_inverse_reconstruct(&m, &exact_data(noisy, &m)).unwrap();
                let err: Vec<f64> = est.iter().zip(&y).map(|(a, b)| a - b).collect();
                let ratio = (norm(&err) / norm(&y)) / (norm(&eps) / norm(&gamma));
                ok &= ratio <= kappa * (1.0 + 1e-6) && ratio >= (1.0 - 1e-6) / kappa;
                lo = lo.min(ratio * kappa);
                hi = hi.max(ratio / kappa);
            }

            // signal along the top singular vector, noise along the bottom one
            let m = random_instrument(3, 27, 77);
            let a = m.dense_real().unwrap();
            let svd = SVD::new(a.clone(), true, true);
            let (imax, imin) = (svd.singular_values.imax(), svd.singular_values.imin());
            let kappa = svd.singular_values[imax] / svd.singular_values[imin];
            let y: DVector<f64> = svd.v_t.as_ref().unwrap().row(imax).transpose();
            let gamma = &a * &y;
            let eps = svd.u.as_ref().unwrap().column(imin) * 1e-7;
            let noisy = (&gamma + &eps).iter().copied().collect();
            let est =
                DVector::from_vec(pseudo_inverse_reconstruct(&m, &exact_data(noisy, &m)).unwrap());
            let attained = ((est - &y).norm() / y.norm()) / (eps.norm() / gamma.norm()) / kappa;
            ok &= attained >= 0.99;
            (
            ok,
            format!(
                "100 triples: min ratio·κ {lo:.4}, max ratio/κ {hi:.4}; singular-vector pair attains {attained:.6}·κ"
            ),
        )
        },
    );
}

#[test]
fn criterion_04_instrument_correctness() {
    criterion(4, "Mρ = ⟨l|TρT†|l⟩", Duration::from_secs(5), || {
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let t = random_transmission(50, 5, 3000 + seed);
            let m = InstrumentMatrix::from_transmission(&t, &PixelBinning::identity(50)).unwrap();
            let rho = DensityMatrix::random(5, 1, 1 + (seed % 5) as usize, seed).unwrap();
            let r = rho.entries();
            let te = &t.entries;
            let direct: Vec<f64> = (0..50)
                .map(|l| {
                    let mut acc = C64::new(0.0, 0.0);
                    for u in 0..5 {
                        for v in 0..5 {
                            acc += te[(l, u)] * r[(u, v)] * te[(l, v)].conj();
                        }
                    }
                    worst = worst.max(acc.im.abs());
                    acc.re
                })
                .collect();
            let flat = m.single_complex() * DVector::from_vec(flatten(r));
            let gamma = ideal_measurement(&m, &rho).unwrap().values;
            for l in 0..50 {
                worst = worst
                    .max((flat[l] - C64::new(direct[l], 0.0)).norm())
                    .max((gamma[l] - direct[l]).abs());
            }
        }
        (
            worst < 1e-12,
            format!("100 (T, ρ) at D=5 L=50, max deviation {worst:.1e}"),
        )
    });
}

#[test]
fn criterion_05_noiseless_mle() {
    criterion(
        5,
        "noiseless MLE exactness",
        Duration::from_secs(60),
        || {
            let mut worst = f64::INFINITY;
            let mut kappa_max: f64 = 0.0;
            let mut all_converged = true;
            for seed in 0..20u64 {
                let m = random_instrument(4, 48, 5000 + seed);
                kappa_max = kappa_max.max(condition_number(&m).unwrap().kappa);
                let rho =
                    DensityMatrix::random(4, 1, 1 + (seed % 4) as usize, 6000 + seed).unwrap();
                let data = ideal_measurement(&m, &rho).unwrap();
                let r = mle_reconstruct(&m, &data, &SolverConfig::default()).unwrap();
                all_converged &= r.converged;
                worst = worst.min(fidelity(&r.rho_hat, &rho).unwrap());
            }
            (
                worst >= 1.0 - 1e-6 && all_converged,
                format!(
                    "20 states D=4 (κ ≤ {kappa_max:.2}), min fidelity 1 - {:.1e}",
                    1.0 - worst
                ),
            )
        },
    );
}

#[test]
fn criterion_06_single_photon_campaign() {
    criterion(
        6,
        "single-photon campaign",
        Duration::from_secs(600),
        || {
            let cfg = CampaignConfig {
                dim: 10,
                pixels: 987,
                photons: 1,
                reductions: Reductions::default(),
                instruments: vec![InstrumentSpec::BestOf {
                    label: None,
                    mean_size_nm: GOOD_MEAN_NM,
                    d_min_nm: 0.0,
                    height_nm: GOOD_HEIGHT_NM,
                    base_seed: 0,
                    count: 10,
                }],
                state: StateSpec::Superposition {
                    terms: vec![vec![0], vec![9]],
                },
                snr: vec![12.58, 0.5],
                trials: 50,
                seed: 0,
                solver: SolverConfig::default(),
                reconstructor: "mle".into(),
                backend: "thin-element".into(),
            };
            let r = run_campaign(&cfg, None).unwrap();
            let kappa = r.instruments[0].kappa;
            let high = r.summary_for(0, 12.58).unwrap().mean_fidelity;
            let low = r.summary_for(0, 0.5).unwrap().mean_fidelity;
            (
            kappa <= 20.0 && high >= 0.95 && low >= 0.75 && r.non_converged() == 0,
            format!(
                "κ = {kappa:.2}, mean F = {high:.4} at SNR 12.58, {low:.4} at SNR 0.50 (50 trials each)"
            ),
        )
        },
    );
}

#[test]
fn criterion_07_two_photon_reconstruction() {
    criterion(
        7,
        "two-photon reconstruction",
        Duration::from_secs(1800),
        || {
            let cfg = CampaignConfig {
                dim: 7,
                pixels: 987,
                photons: 2,
                reductions: Reductions {
                    click: true,
                    indistinguishable: true,
                },
                instruments: vec![InstrumentSpec::BestOf {
                    label: None,
                    mean_size_nm: GOOD_MEAN_NM,
                    d_min_nm: 0.0,
                    height_nm: GOOD_HEIGHT_NM,
                    base_seed: 0,
                    count: 10,
                }],
                state: StateSpec::Superposition {
                    terms: vec![vec![0, 0], vec![3, 3], vec![6, 6]],
                },
                snr: vec![0.64],
                trials: 20,
                seed: 0,
                solver: SolverConfig::default(),
                reconstructor: "mle".into(),
                backend: "thin-element".into(),
            };
            let r = run_campaign(&cfg, None).unwrap();
            let info = &r.instruments[0];
            let s = r.summary_for(0, 0.64).unwrap();
            (
            info.cols == 49 * 50 / 2 && s.mean_fidelity >= 0.80 && r.non_converged() == 0,
            format!(
                "{} parameters, κ1 = {:.2}, κ2 = {:.1}, mean F = {:.4} (min {:.4}) over {} trials at SNR 0.64",
                info.cols, info.kappa_single, info.kappa, s.mean_fidelity, s.min_fidelity, s.trials
            ),
        )
        },
    );
}

fn sweep(config: SweepConfig) -> SweepDataset {
    let dir = tempfile::TempDir::new().unwrap();
    let out = run_sweep(
        &config,
        &SweepOptions {
            output_dir: dir.path().to_path_buf(),
            stop_after: None,
        },
    )
    .unwrap();
    assert!(out.complete);
    out.dataset
}

fn grid(heights: &[f64], mus: &[f64], d_min: f64, dims: &[usize], pixels: &[usize]) -> SweepConfig {
    SweepConfig {
        heights_nm: heights.to_vec(),
        mean_sizes_nm: mus.to_vec(),
        dims: dims.to_vec(),
        pixels: pixels.to_vec(),
        d_min_nm: d_min,
        structures_per_point: 30,
        base_seed: 0,
        backend: "thin-element".into(),
        record_wall_time: false,
    }
}

#[test]
fn criterion_08_conditioning_trends() {
    criterion(8, "conditioning trends", Duration::from_secs(1800), || {
        let (h, mu) = (GOOD_HEIGHT_NM, GOOD_MEAN_NM);
        let k = |ds: &SweepDataset, h, mu, d, l| ds.point(h, mu, d, l).unwrap().kappas();

        let dims = [5, 8, 10, 12, 15];
        let a = sweep(grid(&[h], &[mu], 0.0, &dims, &[987]));
        let by_dim: Vec<Vec<f64>> = dims.iter().map(|&d| k(&a, h, mu, d, 987)).collect();
        let ok_a = by_dim
            .windows(2)
            .all(|w| significantly_greater(&w[1], &w[0], 0.95));

        let pixels = [100, 200, 400];
        let b = sweep(grid(&[h], &[mu], 0.0, &[10], &pixels));
        let by_l: Vec<Vec<f64>> = pixels.iter().map(|&l| k(&b, h, mu, 10, l)).collect();
        let ok_b = pixels
            .iter()
            .all(|&l| b.point(h, mu, 10, l).unwrap().well_posed)
            && significantly_greater(&by_l[0], &by_l[1], 0.95)
            && significantly_greater(&by_l[1], &by_l[2], 0.95);

        let heights = [800.0, 1000.0];
        let c = sweep(grid(&heights, &[120.0, 400.0], 100.0, &[10], &[987]));
        let ok_c: Vec<bool> = heights
            .iter()
            .map(|&h| {
                significantly_greater(&k(&c, h, 120.0, 10, 987), &k(&c, h, 400.0, 10, 987), 0.95)
            })
            .collect();

        let fmt = |v: &[Vec<f64>]| {
            v.iter()
                .map(|x| format!("{:.1}", mean(x)))
                .collect::<Vec<_>>()
                .join(" < ")
        };
        let c_means: Vec<String> = heights
            .iter()
            .map(|&h| {
                format!(
                    "h={h}: {:.0} vs {:.1}",
                    mean(&k(&c, h, 120.0, 10, 987)),
                    mean(&k(&c, h, 400.0, 10, 987))
                )
            })
            .collect();
        let mut l_desc = by_l.clone();
        l_desc.reverse();
        (
            ok_a && ok_b && ok_c.iter().any(|&x| x),
            format!(
                "(a) D=5..15: {} [{ok_a}]; (b) L=400,200,100: {} [{ok_b}]; (c) μ=120 vs 400 {} {ok_c:?}",
                fmt(&by_dim),
                fmt(&l_desc),
                c_means.join(", ")
            ),
        )
    });
}

#[test]
fn criterion_09_calibration() {
    criterion(9, "calibration recovery", Duration::from_secs(10), || {
        let g =
            generate_random(&GenerationParams::new(GOOD_MEAN_NM, 0.0, GOOD_HEIGHT_NM), 3).unwrap();
        let t = backends()
            .get("thin-element")
            .unwrap()
            .transmission(&g, &HgBasis::with_defaults(5).unwrap())
            .unwrap();
        let cases = [
            InstrumentMatrix::from_transmission(&t, &bin_channels(&t, 987).unwrap()).unwrap(),
            InstrumentMatrix::from_transmission(&t, &bin_channels(&t, 100).unwrap()).unwrap(),
            random_instrument(4, 30, 9),
        ];
        let mut worst: f64 = 0.0;
        for m in &cases {
            let probes = standard_probes(m.dim()).unwrap();
            let responses: Vec<CorrelationData> = probes
                .iter()
                .map(|p| ideal_measurement(m, p).unwrap())
                .collect();
            let est = calibrate(&probes, &responses).unwrap();
            let err =
                (est.single_complex() - m.single_complex()).norm() / m.single_complex().norm();
            worst = worst.max(err);
        }
        (
            worst < 1e-8,
            format!("3 instruments, max relative Frobenius error {worst:.1e}"),
        )
    });
}

#[test]
fn criterion_10_hg_basis() {
    criterion(10, "HG basis", Duration::from_secs(1), || {
        let basis = HgBasis::with_defaults(20).unwrap();
        let b = basis.matrix();
        let n = basis.samples();
        let gram = b.adjoint() * &b;
        let ortho = (gram - DMatrix::<C64>::identity(20, 20))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);

        let mut parity_ok = true;
        let mut nodes_ok = true;
        let mut shape_err: f64 = 0.0;
        let x = basis.positions();
        for m in 0..20 {
            let col: Vec<f64> = b.column(m).iter().map(|z| z.re).collect();
            parity_ok &= b.column(m).iter().all(|z| z.im == 0.0);
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            parity_ok &= (0..n).all(|i| col[n - 1 - i] == sign * col[i]);
            let signs: Vec<bool> = col
                .iter()
                .filter(|v| **v != 0.0)
                .map(|v| *v > 0.0)
                .collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            nodes_ok &= changes == m;

            // physicists' Hermite polynomial times the Gaussian envelope
            if m <= 6 {
                let raw: Vec<f64> = x
                    .iter()
                    .map(|&xi| {
                        let s = std::f64::consts::SQRT_2 * xi / basis.waist_um();
                        let (mut h0, mut h1) = (1.0, 2.0 * s);
                        let h = if m == 0 {
                            h0
                        } else {
                            for k in 1..m {
                                let h2 = 2.0 * s * h1 - 2.0 * k as f64 * h0;
                                h0 = h1;
                                h1 = h2;
                            }
                            h1
                        };
                        h * (-s * s / 2.0).exp()
                    })
                    .collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (a, r) in col.iter().zip(&raw) {
                    shape_err = shape_err.max((a - r / norm).abs());
                }
            }
        }
        (
            ortho < 1e-6 && parity_ok && nodes_ok && shape_err < 1e-12,
            format!(
                "D=20 on {n} samples: max |B†B - I| {ortho:.1e}, parity exact: {parity_ok}, node counts exact: {nodes_ok}, profile error {shape_err:.1e}"
            ),
        )
    });
}
