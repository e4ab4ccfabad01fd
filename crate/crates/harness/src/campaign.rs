//! Reconstruction campaigns: fidelity against SNR over repeated noise draws.
//!
//! Trial `t` at every SNR level and for every instrument uses noise seed
//! `seed + t`, so curves are compared on common random numbers.

use std::fs;
use std::path::{Path, PathBuf};

use metaqst::forward::TransmissionMatrix;
use metaqst::instrument::{condition_number, InstrumentMatrix};
use metaqst::measurement::{add_noise, ideal_measurement, CorrelationData};
use metaqst::metasurface::{generate_random, GenerationParams, MetasurfaceGeometry};
use metaqst::state::{basis_ket, fidelity, DensityMatrix};
use metaqst::tomography::{reconstructors, MleSolver, ReconstructionResult, SolverConfig};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};
use crate::pipeline::{self, Reductions};
use crate::plot::{Chart, Series};
use crate::provenance;
use crate::select::{select_best, Candidate, Criteria};
use crate::stats;
use crate::sweep::PointKey;

fn default_pixels() -> usize {
    metaqst::hg::DEFAULT_CHANNELS
}

fn one() -> usize {
    1
}

fn default_trials() -> usize {
    50
}

fn default_reconstructor() -> String {
    "mle".into()
}

fn default_backend() -> String {
    pipeline::DEFAULT_BACKEND.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub dim: usize,
    #[serde(default = "default_pixels")]
    pub pixels: usize,
    #[serde(default = "one")]
    pub photons: usize,
    #[serde(default)]
    pub reductions: Reductions,
    pub instruments: Vec<InstrumentSpec>,
    pub state: StateSpec,
    pub snr: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_reconstructor")]
    pub reconstructor: String,
    #[serde(default = "default_backend")]
    pub backend: String,
}

/// Where an instrument comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InstrumentSpec {
    /// One random structure.
    Generated {
        label: Option<String>,
        mean_size_nm: f64,
        #[serde(default)]
        d_min_nm: f64,
        height_nm: f64,
        seed: u64,
    },
    /// The lowest-κ structure among seeds `base_seed .. base_seed + count`.
    BestOf {
        label: Option<String>,
        mean_size_nm: f64,
        #[serde(default)]
        d_min_nm: f64,
        height_nm: f64,
        #[serde(default)]
        base_seed: u64,
        count: usize,
    },
    Geometry {
        label: Option<String>,
        path: PathBuf,
    },
    Transmission {
        label: Option<String>,
        path: PathBuf,
    },
    /// A single-photon, unreduced instrument file.
    Instrument {
        label: Option<String>,
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateSpec {
    /// Equal-amplitude superposition of basis kets, one mode per photon.
    Superposition {
        terms: Vec<Vec<usize>>,
    },
    Random {
        rank: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.instruments.is_empty() {
            return bad("at least one instrument is required");
        }
        if self.snr.is_empty() || self.snr.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("SNR levels must be finite and positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.dim == 0 || self.photons == 0 {
            return bad("D and N must be positive");
        }
        Ok(())
    }

    /// Reads TOML, or JSON when the extension is `.json`. Relative paths
    /// inside resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for spec in &mut self.instruments {
            match spec {
                InstrumentSpec::Geometry { path, .. }
                | InstrumentSpec::Transmission { path, .. }
                | InstrumentSpec::Instrument { path, .. } => fix(path),
                _ => {}
            }
        }
        if let StateSpec::File { path } = &mut self.state {
            fix(path);
        }
    }
}

/// The state a campaign reconstructs.
pub fn build_state(
    spec: &StateSpec,
    dim: usize,
    photons: usize,
    symmetric: bool,
) -> Result<DensityMatrix> {
    let rho = match spec {
        StateSpec::Superposition { terms } => {
            if terms.is_empty() {
                return Err(HarnessError::Config(
                    "superposition needs at least one term".into(),
                ));
            }
            let mut psi = DVector::zeros(dim.pow(photons as u32));
            for t in terms {
                if t.len() != photons || t.iter().any(|&m| m >= dim) {
                    return Err(HarnessError::Config(format!(
                        "term {t:?} needs {photons} modes below {dim}"
                    )));
                }
                psi += basis_ket(dim, t);
            }
            DensityMatrix::from_pure(&psi, dim, photons)?
        }
        StateSpec::Random { rank, seed } => DensityMatrix::random(dim, photons, *rank, *seed)?,
        StateSpec::File { path } => DensityMatrix::read(path)?,
    };
    if rho.dim() != dim || rho.photons() != photons {
        return Err(HarnessError::Config(format!(
            "state has D={}, N={}; campaign needs D={dim}, N={photons}",
            rho.dim(),
            rho.photons()
        )));
    }
    if symmetric && !rho.symmetric_sector() {
        return Ok(rho.with_symmetric_sector()?);
    }
    Ok(rho)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrumentInfo {
    pub label: String,
    /// κ of the single-photon instrument.
    #[serde(with = "crate::serde_ext::inf")]
    pub kappa_single: f64,
    /// κ of the instrument actually used (after N-photon power and reductions).
    #[serde(with = "crate::serde_ext::inf")]
    pub kappa: f64,
    pub t_avg: Option<f64>,
    pub rows: usize,
    pub cols: usize,
    pub geometry_seed: Option<u64>,
}

struct Prepared {
    info: InstrumentInfo,
    m: InstrumentMatrix,
}

fn structure_label(mu: f64, h: f64, seed: u64) -> String {
    format!("h={h} μ={mu} seed={seed}")
}

fn single_from_geometry(
    cfg: &CampaignConfig,
    geom: &MetasurfaceGeometry,
) -> Result<(InstrumentMatrix, TransmissionMatrix)> {
    let t = pipeline::transmission_for(geom, cfg.dim, &cfg.backend)?;
    let m = pipeline::build_instrument(&t, cfg.pixels, 1, Reductions::default(), None)?;
    Ok((m, t))
}

fn prepare(cfg: &CampaignConfig, spec: &InstrumentSpec) -> Result<Prepared> {
    let (label, single, t_avg, seed) = match spec {
        InstrumentSpec::Generated {
            label,
            mean_size_nm,
            d_min_nm,
            height_nm,
            seed,
        } => {
            let geom = generate_random(
                &GenerationParams::new(*mean_size_nm, *d_min_nm, *height_nm),
                *seed,
            )?;
            let (m, t) = single_from_geometry(cfg, &geom)?;
            let l = label
                .clone()
                .unwrap_or_else(|| structure_label(*mean_size_nm, *height_nm, *seed));
            (l, m, Some(t.average_transmission()), Some(*seed))
        }
        InstrumentSpec::BestOf {
            label,
            mean_size_nm,
            d_min_nm,
            height_nm,
            base_seed,
            count,
        } => {
            if *count == 0 {
                return Err(HarnessError::Config("best-of needs count ≥ 1".into()));
            }
            let params = GenerationParams::new(*mean_size_nm, *d_min_nm, *height_nm);
            let candidates: Result<Vec<Candidate>> = (0..*count as u64)
                .into_par_iter()
                .map(|i| {
                    let seed = base_seed + i;
                    let (m, t) = single_from_geometry(cfg, &generate_random(&params, seed)?)?;
                    Ok(Candidate {
                        key: PointKey {
                            h_nm: *height_nm,
                            mu_nm: *mean_size_nm,
                            d_min_nm: *d_min_nm,
                            dim: cfg.dim,
                            pixels: cfg.pixels,
                        },
                        seed,
                        kappa: condition_number(&m)?.kappa,
                        t_avg: t.average_transmission(),
                    })
                })
                .collect();
            let best = *select_best(&candidates?, &Criteria::default())?.candidate();
            let (m, t) = single_from_geometry(cfg, &best.geometry()?)?;
            let l = label
                .clone()
                .unwrap_or_else(|| structure_label(*mean_size_nm, *height_nm, best.seed));
            (l, m, Some(t.average_transmission()), Some(best.seed))
        }
        InstrumentSpec::Geometry { label, path } => {
            let geom = MetasurfaceGeometry::read(path)?;
            let (m, t) = single_from_geometry(cfg, &geom)?;
            let l = label.clone().unwrap_or_else(|| path.display().to_string());
            (l, m, Some(t.average_transmission()), Some(geom.rng_seed))
        }
        InstrumentSpec::Transmission { label, path } => {
            let t = TransmissionMatrix::read(path)?.truncate_modes(cfg.dim)?;
            let m = pipeline::build_instrument(&t, cfg.pixels, 1, Reductions::default(), None)?;
            let l = label.clone().unwrap_or_else(|| path.display().to_string());
            (l, m, Some(t.average_transmission()), None)
        }
        InstrumentSpec::Instrument { label, path } => {
            let m = InstrumentMatrix::read(path)?;
            if m.photons() != 1 || m.is_click() || m.is_indistinguishable() || m.dim() != cfg.dim {
                return Err(HarnessError::Config(format!(
                    "{} must be an unreduced single-photon instrument with D={}",
                    path.display(),
                    cfg.dim
                )));
            }
            let l = label.clone().unwrap_or_else(|| path.display().to_string());
            (l, m, None, None)
        }
    };
    let kappa_single = condition_number(&single)?.kappa;
    let m = pipeline::reduce(single, cfg.photons, cfg.reductions)?;
    let kappa = if cfg.photons == 1 {
        kappa_single
    } else {
        condition_number(&m)?.kappa
    };
    Ok(Prepared {
        info: InstrumentInfo {
            label,
            kappa_single,
            kappa,
            t_avg,
            rows: m.rows(),
            cols: m.cols(),
            geometry_seed: seed,
        },
        m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub instrument: usize,
    pub snr: f64,
    pub trial: usize,
    pub noise_seed: u64,
    pub fidelity: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub instrument: usize,
    pub snr: f64,
    pub trials: usize,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub min_fidelity: f64,
    pub non_converged: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CampaignResult {
    pub provenance: Value,
    pub instruments: Vec<InstrumentInfo>,
    pub summary: Vec<SnrSummary>,
    pub trials: Vec<TrialRecord>,
}

impl CampaignResult {
    pub fn summary_for(&self, instrument: usize, snr: f64) -> Option<&SnrSummary> {
        self.summary
            .iter()
            .find(|s| s.instrument == instrument && s.snr == snr)
    }

    pub fn fidelities(&self, instrument: usize, snr: f64) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.instrument == instrument && t.snr == snr)
            .map(|t| t.fidelity)
            .collect()
    }

    pub fn non_converged(&self) -> usize {
        self.trials.iter().filter(|t| !t.converged).count()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = provenance::csv_comment(&self.provenance);
        out.push_str(
            "instrument,kappa,snr,trials,mean_fidelity,std_fidelity,min_fidelity,non_converged\n",
        );
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&self.instruments[s.instrument].label),
                self.instruments[s.instrument].kappa,
                s.snr,
                s.trials,
                s.mean_fidelity,
                s.std_fidelity,
                s.min_fidelity,
                s.non_converged
            ));
        }
        out
    }

    pub fn trials_csv(&self) -> String {
        let mut out = provenance::csv_comment(&self.provenance);
        out.push_str(
            "instrument,snr,trial,noise_seed,fidelity,residual_norm,iterations,converged\n",
        );
        for t in &self.trials {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&self.instruments[t.instrument].label),
                t.snr,
                t.trial,
                t.noise_seed,
                t.fidelity,
                t.residual_norm,
                t.iterations,
                t.converged
            ));
        }
        out
    }

    pub fn chart(&self) -> Chart {
        Chart {
            title: format!(
                "Reconstruction fidelity, {} trials per SNR",
                self.trials_per_level()
            ),
            x_label: "SNR".into(),
            y_label: "mean fidelity".into(),
            log_x: true,
            log_y: false,
            series: self
                .instruments
                .iter()
                .enumerate()
                .map(|(i, info)| Series {
                    label: format!("{} (κ={:.1})", info.label, info.kappa),
                    points: self
                        .summary
                        .iter()
                        .filter(|s| s.instrument == i)
                        .map(|s| (s.snr, s.mean_fidelity))
                        .collect(),
                })
                .collect(),
        }
    }

    fn trials_per_level(&self) -> usize {
        self.summary.first().map_or(0, |s| s.trials)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

enum Engine {
    Mle(Box<MleSolver>),
    Other(std::sync::Arc<dyn metaqst::tomography::Reconstructor>),
}

impl Engine {
    fn run(
        &self,
        m: &InstrumentMatrix,
        data: &CorrelationData,
        cfg: &SolverConfig,
    ) -> Result<ReconstructionResult> {
        Ok(match self {
            Engine::Mle(s) => s.solve(data)?,
            Engine::Other(r) => r.reconstruct(m, data, cfg)?,
        })
    }
}

/// Runs the campaign and, when `output_dir` is given, writes `campaign.csv`,
/// `campaign_trials.csv`, `campaign.json` and `fidelity.svg` there.
pub fn run_campaign(cfg: &CampaignConfig, output_dir: Option<&Path>) -> Result<CampaignResult> {
    cfg.validate()?;
    let reconstructor = reconstructors().get(&cfg.reconstructor)?;
    let rho = build_state(
        &cfg.state,
        cfg.dim,
        cfg.photons,
        cfg.reductions.indistinguishable,
    )?;
    let prepared: Vec<Prepared> = cfg
        .instruments
        .iter()
        .map(|s| prepare(cfg, s))
        .collect::<Result<_>>()?;

    let mut trials = Vec::new();
    for (i, p) in prepared.iter().enumerate() {
        let ideal = ideal_measurement(&p.m, &rho)?;
        let engine = if cfg.reconstructor == "mle" {
            Engine::Mle(Box::new(MleSolver::new(&p.m, &cfg.solver)?))
        } else {
            Engine::Other(reconstructor.clone())
        };
        let jobs: Vec<(f64, usize)> = cfg
            .snr
            .iter()
            .flat_map(|&s| (0..cfg.trials).map(move |t| (s, t)))
            .collect();
        let done: Result<Vec<TrialRecord>> = jobs
            .par_iter()
            .map(|&(snr, trial)| {
                let noise_seed = cfg.seed + trial as u64;
                let noisy = add_noise(&ideal, snr, noise_seed)?;
                let r = engine.run(&p.m, &noisy, &cfg.solver)?;
                Ok(TrialRecord {
                    instrument: i,
                    snr,
                    trial,
                    noise_seed,
                    fidelity: fidelity(&r.rho_hat, &rho)?,
                    residual_norm: r.residual_norm,
                    iterations: r.iterations,
                    converged: r.converged,
                })
            })
            .collect();
        trials.extend(done?);
        log::info!("instrument {} done", p.info.label);
    }

    let mut summary = Vec::new();
    for i in 0..prepared.len() {
        for &snr in &cfg.snr {
            let sel: Vec<&TrialRecord> = trials
                .iter()
                .filter(|t| t.instrument == i && t.snr == snr)
                .collect();
            let f: Vec<f64> = sel.iter().map(|t| t.fidelity).collect();
            summary.push(SnrSummary {
                instrument: i,
                snr,
                trials: f.len(),
                mean_fidelity: stats::mean(&f),
                std_fidelity: stats::std_dev(&f),
                min_fidelity: f.iter().copied().fold(f64::INFINITY, f64::min),
                non_converged: sel.iter().filter(|t| !t.converged).count(),
            });
        }
    }

    let result = CampaignResult {
        provenance: provenance::block(
            cfg,
            json!({
                "kind": "campaign",
                "noise_seeds": [cfg.seed, cfg.seed + cfg.trials as u64 - 1],
                "reconstructor": cfg.reconstructor,
            }),
        ),
        instruments: prepared.into_iter().map(|p| p.info).collect(),
        summary,
        trials,
    };
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| HarnessError::io(path, e))
        };
        write("campaign.csv", result.summary_csv())?;
        write("campaign_trials.csv", result.trials_csv())?;
        write(
            "campaign.json",
            serde_json::to_string_pretty(&result).expect("serializable result"),
        )?;
        write("fidelity.svg", result.chart().to_svg())?;
    }
    Ok(result)
}
