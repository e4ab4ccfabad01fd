//! The `metaqst` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use metaqst::forward::TransmissionMatrix;
use metaqst::instrument::{condition_number, sic_reference, InstrumentMatrix};
use metaqst::measurement::{add_noise, ideal_measurement, measure_snr, CorrelationData};
use metaqst::metasurface::{generate_random, GenerationParams, MetasurfaceGeometry};
use metaqst::state::{fidelity, DensityMatrix};
use metaqst::tomography::{calibrate, reconstructors, standard_probes, SolverConfig};
use serde_json::{json, Value};

use crate::campaign::{build_state, run_campaign, CampaignConfig, StateSpec};
use crate::error::{HarnessError, Result};
use crate::pipeline::{self, Reductions};
use crate::select::{candidates, select_best, Criteria, Selection};
use crate::sweep::{run_sweep, SweepConfig, SweepDataset, SweepOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "metaqst",
    version,
    about = "Metasurface quantum state tomography toolkit"
)]
pub struct Cli {
    /// Directory for every file a command writes.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Format of reports printed to stdout and written by `conditioning`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random metasurface geometry.
    Generate(GenerateArgs),
    /// Compute the transmission matrix of a geometry.
    Transmit(TransmitArgs),
    /// Build an instrument matrix from a transmission matrix.
    Instrument(InstrumentArgs),
    /// Condition number and singular spectrum of an instrument.
    Conditioning(ConditioningArgs),
    /// Write a density matrix (or the standard probe set).
    State(StateArgs),
    /// Simulate ideal or noisy correlation data.
    Measure(MeasureArgs),
    /// Reconstruct a density matrix from correlation data.
    Reconstruct(ReconstructArgs),
    /// Estimate an instrument from probe states and their responses.
    Calibrate(CalibrateArgs),
    /// Run a conditioning sweep described by a config file.
    Sweep(SweepArgs),
    /// Pick the best structure from a sweep dataset.
    Select(SelectArgs),
    /// Run a reconstruction campaign described by a config file.
    Campaign(CampaignArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 222.0)]
    pub mean_size: f64,
    #[arg(long, default_value_t = 0.0)]
    pub d_min: f64,
    #[arg(long, default_value_t = 800.0)]
    pub height: f64,
    #[arg(long, default_value_t = metaqst::metasurface::DEFAULT_TARGET_WIDTH_UM)]
    pub target_width: f64,
    #[arg(long, default_value_t = metaqst::hg::DEFAULT_WAVELENGTH_NM)]
    pub wavelength: f64,
    #[arg(long, default_value_t = metaqst::metasurface::DEFAULT_RIDGE_INDEX)]
    pub ridge_index: f64,
    #[arg(long, default_value_t = metaqst::metasurface::DEFAULT_SUBSTRATE_INDEX)]
    pub substrate_index: f64,
    /// File name inside the output directory.
    #[arg(long, default_value = "geometry.json")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct TransmitArgs {
    #[arg(long)]
    pub geometry: PathBuf,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value = pipeline::DEFAULT_BACKEND)]
    pub backend: String,
    #[arg(long, default_value = "transmission.mat")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct InstrumentArgs {
    #[arg(long)]
    pub transmission: PathBuf,
    /// Keep only the first D modes of the transmission matrix.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Pixel count L; defaults to one pixel per channel.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub photons: usize,
    #[arg(long)]
    pub click: bool,
    #[arg(long)]
    pub indistinguishable: bool,
    /// Cap on dense materializations, in bytes.
    #[arg(long)]
    pub memory_cap: Option<u128>,
    #[arg(long, default_value = "instrument.mat")]
    pub out: String,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConditioningSource {
    #[arg(long)]
    pub instrument: Option<PathBuf>,
    /// Analytic SIC-POVM reference for dimension D.
    #[arg(long, value_name = "D")]
    pub sic: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConditioningArgs {
    #[command(flatten)]
    pub source: ConditioningSource,
    #[arg(long)]
    pub memory_cap: Option<u128>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct StateKind {
    /// Equal-amplitude superposition, e.g. "0;9" or "0,0;3,3;6,6".
    #[arg(long)]
    pub terms: Option<String>,
    /// Random state of this rank (seeded by --seed).
    #[arg(long)]
    pub random_rank: Option<usize>,
    #[arg(long)]
    pub maximally_mixed: bool,
    /// Write the 2D²−D standard calibration probes to `probes/`.
    #[arg(long)]
    pub standard_probes: bool,
}

#[derive(Debug, Args)]
pub struct StateArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub photons: usize,
    #[command(flatten)]
    pub kind: StateKind,
    /// Mark the state as exchange symmetric (two indistinguishable photons).
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, default_value = "density.mat")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub instrument: PathBuf,
    #[arg(long)]
    pub state: PathBuf,
    /// Add Gaussian noise at this SNR (seeded by --seed).
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value = "correlation.mat")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub instrument: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mle")]
    pub method: String,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub projector_tolerance: Option<f64>,
    #[arg(long)]
    pub no_warm_start: bool,
    /// Reference state; the report then includes the fidelity.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "rho_hat.mat")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long = "probe", required = true, num_args = 1..)]
    pub probes: Vec<PathBuf>,
    #[arg(long = "response", required = true, num_args = 1..)]
    pub responses: Vec<PathBuf>,
    #[arg(long, default_value = "instrument.mat")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    /// Stop after computing this many new points (resume by rerunning).
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Sweep output directory or its `sweep.json`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub max_kappa: Option<f64>,
    #[arg(long)]
    pub min_t_avg: Option<f64>,
    #[arg(long, default_value = "selected_geometry.json")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    pub config: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::debug!("thread pool already initialized");
        }
    }
    fs::create_dir_all(&cli.output_dir).map_err(|e| HarnessError::io(&cli.output_dir, e))?;
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Generate(a) => ctx.generate(a),
        Command::Transmit(a) => ctx.transmit(a),
        Command::Instrument(a) => ctx.instrument(a),
        Command::Conditioning(a) => ctx.conditioning(a),
        Command::State(a) => ctx.state(a),
        Command::Measure(a) => ctx.measure(a),
        Command::Reconstruct(a) => ctx.reconstruct(a),
        Command::Calibrate(a) => ctx.calibrate(a),
        Command::Sweep(a) => ctx.sweep(a),
        Command::Select(a) => ctx.select(a),
        Command::Campaign(a) => ctx.campaign(a),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

fn scalar_csv(v: &Value) -> String {
    let mut out = String::from("key,value\n");
    if let Value::Object(map) = v {
        for (k, val) in map {
            match val {
                Value::Object(_) | Value::Array(_) => {}
                Value::String(s) => out.push_str(&format!("{k},{s}\n")),
                other => out.push_str(&format!("{k},{other}\n")),
            }
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn parse_terms(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|t| {
            t.split(',')
                .map(|m| {
                    m.trim()
                        .parse::<usize>()
                        .map_err(|e| HarnessError::Config(format!("term `{t}`: {e}")))
                })
                .collect()
        })
        .collect()
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cli.output_dir.join(name)
    }

    fn emit(&self, report: &Value) {
        match self.cli.format {
            Format::Json => println!("{}", serde_json::to_string_pretty(report).expect("json")),
            Format::Csv => print!("{}", scalar_csv(report)),
        }
    }

    fn generate(&self, a: &GenerateArgs) -> Result<()> {
        let params = GenerationParams {
            mean_size_nm: a.mean_size,
            d_min_nm: a.d_min,
            height_nm: a.height,
            target_width_um: a.target_width,
            wavelength_nm: a.wavelength,
            ridge_index: a.ridge_index,
            substrate_index: a.substrate_index,
        };
        let g = generate_random(&params, self.cli.seed)?;
        let path = self.path(&a.out);
        g.write(&path)?;
        self.emit(&json!({
            "path": path,
            "elements": g.widths_nm.len(),
            "mean_width_nm": g.mean_width_nm(),
            "total_width_um": g.total_width_um(),
            "seed": g.rng_seed,
            "content_hash": g.content_hash(),
        }));
        Ok(())
    }

    fn transmit(&self, a: &TransmitArgs) -> Result<()> {
        let g = MetasurfaceGeometry::read(&a.geometry)?;
        let t = pipeline::transmission_for(&g, a.dim, &a.backend)?;
        let path = self.path(&a.out);
        t.write(&path)?;
        let max_norm = t.column_norms().into_iter().fold(0.0, f64::max);
        self.emit(&json!({
            "path": path,
            "channels": t.channels(),
            "modes": t.modes(),
            "t_avg": t.average_transmission(),
            "max_column_norm": max_norm,
            "backend": a.backend,
        }));
        Ok(())
    }

    fn instrument(&self, a: &InstrumentArgs) -> Result<()> {
        let mut t = TransmissionMatrix::read(&a.transmission)?;
        if let Some(d) = a.dim {
            t = t.truncate_modes(d)?;
        }
        let reductions = Reductions {
            click: a.click,
            indistinguishable: a.indistinguishable,
        };
        let bins = a.bins.unwrap_or(t.channels());
        let m = pipeline::build_instrument(&t, bins, a.photons, reductions, a.memory_cap)?;
        let path = self.path(&a.out);
        m.write(&path)?;
        self.emit(&json!({
            "path": path,
            "D": m.dim(),
            "L": m.pixels(),
            "N": m.photons(),
            "click": m.is_click(),
            "indistinguishable": m.is_indistinguishable(),
            "rows": m.rows(),
            "cols": m.cols(),
            "full_rows": m.full_rows(),
            "full_cols": m.full_cols(),
        }));
        Ok(())
    }

    fn conditioning(&self, a: &ConditioningArgs) -> Result<()> {
        let ext = match self.cli.format {
            Format::Json => "json",
            Format::Csv => "csv",
        };
        let path = self.path(&format!("conditioning.{ext}"));
        if let Some(d) = a.source.sic {
            let r = sic_reference(d)?;
            let report = json!({
                "D": r.dim,
                "kappa": r.kappa,
                "lambda_1": r.lambda_1,
                "multiplicity_1": r.multiplicity_1,
                "lambda_2": r.lambda_2,
                "multiplicity_2": r.multiplicity_2,
                "max_deviation": r.max_deviation,
                "eigenvalues": r.numeric_eigenvalues,
            });
            let text = match self.cli.format {
                Format::Json => serde_json::to_string_pretty(&report).expect("json"),
                Format::Csv => {
                    let mut s = String::from("index,eigenvalue\n");
                    for (i, v) in r.numeric_eigenvalues.iter().enumerate() {
                        s.push_str(&format!("{i},{v}\n"));
                    }
                    s
                }
            };
            write_text(&path, &text)?;
            self.emit(&report);
            return Ok(());
        }
        let file = a
            .source
            .instrument
            .as_ref()
            .expect("clap enforces one source");
        let mut m = InstrumentMatrix::read(file)?;
        if let Some(cap) = a.memory_cap {
            m = m.with_memory_cap(cap);
        }
        let c = condition_number(&m)?;
        let report = json!({
            "kappa": finite(c.kappa),
            "sigma_max": c.sigma_max,
            "sigma_min": c.sigma_min,
            "well_posed": c.well_posed,
            "note": c.note,
            "method": c.method,
            "rows": m.rows(),
            "cols": m.cols(),
            "spectrum": c.spectrum,
        });
        let text = match self.cli.format {
            Format::Json => serde_json::to_string_pretty(&report).expect("json"),
            Format::Csv => {
                let mut s = String::from("index,sigma\n");
                for (i, v) in c.spectrum.iter().enumerate() {
                    s.push_str(&format!("{i},{v}\n"));
                }
                s
            }
        };
        write_text(&path, &text)?;
        self.emit(&report);
        Ok(())
    }

    fn state(&self, a: &StateArgs) -> Result<()> {
        let k = &a.kind;
        if k.standard_probes {
            if a.photons != 1 {
                return Err(HarnessError::Config(
                    "standard probes are single-photon states".into(),
                ));
            }
            let dir = self.path("probes");
            fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
            let probes = standard_probes(a.dim)?;
            for (i, p) in probes.iter().enumerate() {
                p.write(&dir.join(format!("probe_{i:03}.mat")))?;
            }
            self.emit(&json!({ "directory": dir, "count": probes.len() }));
            return Ok(());
        }
        let rho = if let Some(t) = &k.terms {
            let spec = StateSpec::Superposition {
                terms: parse_terms(t)?,
            };
            build_state(&spec, a.dim, a.photons, a.symmetric)?
        } else if let Some(rank) = k.random_rank {
            let spec = StateSpec::Random {
                rank,
                seed: self.cli.seed,
            };
            build_state(&spec, a.dim, a.photons, a.symmetric)?
        } else {
            let rho = DensityMatrix::maximally_mixed(a.dim, a.photons)?;
            if a.symmetric {
                rho.with_symmetric_sector()?
            } else {
                rho
            }
        };
        let path = self.path(&a.out);
        rho.write(&path)?;
        self.emit(&json!({
            "path": path,
            "D": rho.dim(),
            "N": rho.photons(),
            "symmetric_sector": rho.symmetric_sector(),
            "purity": rho.purity(),
        }));
        Ok(())
    }

    fn measure(&self, a: &MeasureArgs) -> Result<()> {
        let m = InstrumentMatrix::read(&a.instrument)?;
        let rho = DensityMatrix::read(&a.state)?;
        let ideal = ideal_measurement(&m, &rho)?;
        let (data, realized) = match a.snr {
            Some(snr) => {
                let noisy = add_noise(&ideal, snr, self.cli.seed)?;
                let realized = measure_snr(&ideal.values, &noisy.values).ok();
                (noisy, realized)
            }
            None => (ideal, None),
        };
        let path = self.path(&a.out);
        data.write(&path)?;
        self.emit(&json!({
            "path": path,
            "values": data.values.len(),
            "mean": data.mean(),
            "snr": finite(data.snr),
            "noise_std": data.noise_std,
            "realized_snr": realized,
            "seed": data.seed,
        }));
        Ok(())
    }

    fn reconstruct(&self, a: &ReconstructArgs) -> Result<()> {
        let m = InstrumentMatrix::read(&a.instrument)?;
        let data = CorrelationData::read(&a.data)?;
        let mut cfg = SolverConfig::default();
        if let Some(v) = a.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = a.tolerance {
            cfg.tolerance = v;
        }
        if let Some(v) = a.projector_tolerance {
            cfg.projector_tolerance = v;
        }
        cfg.warm_start = !a.no_warm_start;
        let r = reconstructors()
            .get(&a.method)?
            .reconstruct(&m, &data, &cfg)?;
        let path = self.path(&a.out);
        r.rho_hat.write(&path)?;
        let mut report = r.report();
        report["method"] = json!(a.method);
        report["density_path"] = json!(path);
        if let Some(t) = &a.truth {
            report["fidelity"] = json!(fidelity(&r.rho_hat, &DensityMatrix::read(t)?)?);
        }
        write_text(
            &self.path("reconstruction.json"),
            &serde_json::to_string_pretty(&report).expect("json"),
        )?;
        self.emit(&report);
        if !r.converged {
            return Err(HarnessError::NonConvergence {
                failed: 1,
                total: 1,
            });
        }
        Ok(())
    }

    fn calibrate(&self, a: &CalibrateArgs) -> Result<()> {
        let probes: Vec<DensityMatrix> = a
            .probes
            .iter()
            .map(|p| DensityMatrix::read(p))
            .collect::<metaqst::Result<_>>()?;
        let responses: Vec<CorrelationData> = a
            .responses
            .iter()
            .map(|p| CorrelationData::read(p))
            .collect::<metaqst::Result<_>>()?;
        let m = calibrate(&probes, &responses)?;
        let path = self.path(&a.out);
        m.write(&path)?;
        self.emit(&json!({
            "path": path,
            "D": m.dim(),
            "L": m.pixels(),
            "probes": probes.len(),
        }));
        Ok(())
    }

    fn sweep(&self, a: &SweepArgs) -> Result<()> {
        let cfg = SweepConfig::load(&a.config)?;
        let out = run_sweep(
            &cfg,
            &SweepOptions {
                output_dir: self.cli.output_dir.clone(),
                stop_after: a.stop_after,
            },
        )?;
        let failed = out.dataset.points.iter().filter(|p| !p.is_ok()).count();
        self.emit(&json!({
            "points": out.dataset.points.len(),
            "computed": out.computed,
            "cached": out.cached,
            "failed": failed,
            "complete": out.complete,
            "csv": self.path("sweep.csv"),
        }));
        Ok(())
    }

    fn select(&self, a: &SelectArgs) -> Result<()> {
        let ds = SweepDataset::load(&a.dataset)?;
        let criteria = Criteria {
            max_kappa: a.max_kappa,
            min_t_avg: a.min_t_avg,
        };
        let sel = select_best(&candidates(&ds), &criteria)?;
        let report = json!({ "criteria": criteria, "selection": sel });
        write_text(
            &self.path("selection.json"),
            &serde_json::to_string_pretty(&report).expect("json"),
        )?;
        self.emit(&report);
        match &sel {
            Selection::Selected { candidate, .. } => {
                candidate.geometry()?.write(&self.path(&a.out))?;
                Ok(())
            }
            Selection::NearestMiss { candidate, .. } => Err(HarnessError::Infeasible(format!(
                "seed {} at {:?} (κ={}, T_avg={})",
                candidate.seed, candidate.key, candidate.kappa, candidate.t_avg
            ))),
        }
    }

    fn campaign(&self, a: &CampaignArgs) -> Result<()> {
        let cfg = CampaignConfig::load(&a.config)?;
        let r = run_campaign(&cfg, Some(&self.cli.output_dir))?;
        let summary: Vec<Value> = r
            .summary
            .iter()
            .map(|s| {
                json!({
                    "instrument": r.instruments[s.instrument].label,
                    "snr": s.snr,
                    "mean_fidelity": s.mean_fidelity,
                    "std_fidelity": s.std_fidelity,
                })
            })
            .collect();
        match self.cli.format {
            Format::Json => self.emit(&json!({ "instruments": r.instruments, "summary": summary })),
            Format::Csv => print!("{}", r.summary_csv()),
        }
        let failed = r.non_converged();
        if failed > 0 {
            return Err(HarnessError::NonConvergence {
                failed,
                total: r.trials.len(),
            });
        }
        Ok(())
    }
}
