//! Conditioning sweeps over random structures.
//!
//! Each grid point (h, μ, D, L) is evaluated on `structures_per_point`
//! geometries with seeds `base_seed + i`. Finished points are cached under
//! `points/<hash>.json`, keyed by everything that determines their content, so
//! an interrupted sweep resumes where it stopped and reruns are free.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use metaqst::instrument::condition_number;
use metaqst::metasurface::{generate_random, GenerationParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};
use crate::pipeline::{self, Reductions};
use crate::plot::{Chart, Series};
use crate::provenance;
use crate::stats;

const POINT_FORMAT: u32 = 1;
pub const CSV_HEADER: &str = "h_nm,mu_nm,d_min_nm,D,L,seed,kappa,t_avg,well_posed,wall_ms";

fn default_structures() -> usize {
    30
}

fn default_backend() -> String {
    pipeline::DEFAULT_BACKEND.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub heights_nm: Vec<f64>,
    pub mean_sizes_nm: Vec<f64>,
    pub dims: Vec<usize>,
    pub pixels: Vec<usize>,
    #[serde(default)]
    pub d_min_nm: f64,
    #[serde(default = "default_structures")]
    pub structures_per_point: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Wall times make reruns differ byte-wise, so they are off by default.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.heights_nm.is_empty()
            || self.mean_sizes_nm.is_empty()
            || self.dims.is_empty()
            || self.pixels.is_empty()
        {
            return bad("every parameter grid needs at least one value");
        }
        if self.structures_per_point == 0 {
            return bad("structures_per_point must be at least 1");
        }
        if self.heights_nm.iter().any(|h| !(*h > 0.0)) {
            return bad("heights must be positive");
        }
        if self.mean_sizes_nm.iter().any(|m| !(*m > self.d_min_nm)) || !(self.d_min_nm >= 0.0) {
            return bad("mean sizes must exceed d_min ≥ 0");
        }
        if self.dims.contains(&0) || self.pixels.contains(&0) {
            return bad("D and L must be positive");
        }
        Ok(())
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid points in nesting order h, μ, D, L.
    pub fn points(&self) -> Vec<PointKey> {
        let mut out = Vec::new();
        for &h_nm in &self.heights_nm {
            for &mu_nm in &self.mean_sizes_nm {
                for &dim in &self.dims {
                    for &pixels in &self.pixels {
                        out.push(PointKey {
                            h_nm,
                            mu_nm,
                            d_min_nm: self.d_min_nm,
                            dim,
                            pixels,
                        });
                    }
                }
            }
        }
        out
    }

    fn point_hash(&self, key: &PointKey) -> String {
        provenance::hash_json(&json!({
            "format": POINT_FORMAT,
            "version": provenance::VERSION,
            "key": key,
            "structures": self.structures_per_point,
            "base_seed": self.base_seed,
            "backend": self.backend,
            "record_wall_time": self.record_wall_time,
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointKey {
    pub h_nm: f64,
    pub mu_nm: f64,
    pub d_min_nm: f64,
    pub dim: usize,
    pub pixels: usize,
}

impl PointKey {
    pub fn well_posed(&self) -> bool {
        self.pixels >= self.dim * self.dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub seed: u64,
    #[serde(with = "crate::serde_ext::inf")]
    pub kappa: f64,
    pub t_avg: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub key: PointKey,
    pub well_posed: bool,
    #[serde(flatten)]
    pub status: PointStatus,
    pub structures: Vec<StructureRecord>,
    #[serde(with = "crate::serde_ext::inf")]
    pub kappa_mean: f64,
    #[serde(with = "crate::serde_ext::inf")]
    pub kappa_std: f64,
    #[serde(with = "crate::serde_ext::nan")]
    pub t_avg_mean: f64,
    #[serde(with = "crate::serde_ext::nan")]
    pub t_avg_std: f64,
}

impl PointRecord {
    fn new(key: PointKey, structures: Vec<StructureRecord>) -> Self {
        let (kappa_mean, kappa_std, t_avg_mean, t_avg_std) = aggregates(&structures);
        Self {
            key,
            well_posed: key.well_posed(),
            status: PointStatus::Ok,
            structures,
            kappa_mean,
            kappa_std,
            t_avg_mean,
            t_avg_std,
        }
    }

    fn failed(key: PointKey, reason: String) -> Self {
        Self {
            key,
            well_posed: key.well_posed(),
            status: PointStatus::Failed { reason },
            structures: Vec::new(),
            kappa_mean: f64::INFINITY,
            kappa_std: f64::INFINITY,
            t_avg_mean: f64::NAN,
            t_avg_std: f64::NAN,
        }
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.structures.iter().map(|s| s.kappa).collect()
    }

    pub fn is_ok(&self) -> bool {
        self.status == PointStatus::Ok
    }
}

/// (mean κ, std κ, mean T_avg, std T_avg); κ statistics are infinite when any
/// structure is ill-posed.
pub fn aggregates(structures: &[StructureRecord]) -> (f64, f64, f64, f64) {
    let k: Vec<f64> = structures.iter().map(|s| s.kappa).collect();
    let t: Vec<f64> = structures.iter().map(|s| s.t_avg).collect();
    let (km, ks) = if k.iter().all(|v| v.is_finite()) {
        (stats::mean(&k), stats::std_dev(&k))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    (km, ks, stats::mean(&t), stats::std_dev(&t))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepDataset {
    pub provenance: Value,
    pub config: SweepConfig,
    pub points: Vec<PointRecord>,
}

impl SweepDataset {
    /// Loads `sweep.json` from a directory or an explicit path.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join("sweep.json")
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| HarnessError::io(&file, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", file.display())))
    }

    pub fn point(&self, h_nm: f64, mu_nm: f64, dim: usize, pixels: usize) -> Option<&PointRecord> {
        self.points.iter().find(|p| {
            p.key.h_nm == h_nm && p.key.mu_nm == mu_nm && p.key.dim == dim && p.key.pixels == pixels
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = provenance::csv_comment(&self.provenance);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in self.points.iter().filter(|p| p.is_ok()) {
            let k = p.key;
            for s in &p.structures {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    k.h_nm,
                    k.mu_nm,
                    k.d_min_nm,
                    k.dim,
                    k.pixels,
                    s.seed,
                    s.kappa,
                    s.t_avg,
                    p.well_posed,
                    s.wall_ms
                ));
            }
        }
        out
    }

    /// Mean κ against the first grid parameter that varies, one series per
    /// combination of the others; ill-posed points are omitted.
    pub fn chart(&self) -> Chart {
        let c = &self.config;
        type Axis = (&'static str, usize, fn(&PointKey) -> f64);
        let axes: [Axis; 4] = [
            ("μ (nm)", c.mean_sizes_nm.len(), |k| k.mu_nm),
            ("D", c.dims.len(), |k| k.dim as f64),
            ("L", c.pixels.len(), |k| k.pixels as f64),
            ("h (nm)", c.heights_nm.len(), |k| k.h_nm),
        ];
        let x_axis = axes.iter().position(|a| a.1 > 1).unwrap_or(0);
        let (x_label, _, x_of) = axes[x_axis];
        let mut series: Vec<Series> = Vec::new();
        for p in self.points.iter().filter(|p| p.is_ok() && p.well_posed) {
            let k = p.key;
            let label: Vec<String> = [
                (1, format!("μ={}", k.mu_nm)),
                (2, format!("D={}", k.dim)),
                (3, format!("L={}", k.pixels)),
                (4, format!("h={}", k.h_nm)),
            ]
            .into_iter()
            .filter(|(i, _)| i - 1 != x_axis && axes[i - 1].1 > 1)
            .map(|(_, s)| s)
            .collect();
            let label = if label.is_empty() {
                "mean κ".to_string()
            } else {
                label.join(" ")
            };
            let point = (x_of(&k), p.kappa_mean);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(point),
                None => series.push(Series {
                    label,
                    points: vec![point],
                }),
            }
        }
        Chart {
            title: format!(
                "Condition number, {} structures per point",
                c.structures_per_point
            ),
            x_label: x_label.to_string(),
            y_label: "mean κ".to_string(),
            log_x: false,
            log_y: true,
            series,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub output_dir: PathBuf,
    /// Compute at most this many uncached points, then stop without writing
    /// the final dataset (used to exercise resumption).
    pub stop_after: Option<usize>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub dataset: SweepDataset,
    pub complete: bool,
    pub computed: usize,
    pub cached: usize,
}

fn evaluate_structure(config: &SweepConfig, key: &PointKey, i: usize) -> Result<StructureRecord> {
    let start = Instant::now();
    let seed = config.base_seed + i as u64;
    let geom = generate_random(
        &GenerationParams::new(key.mu_nm, key.d_min_nm, key.h_nm),
        seed,
    )?;
    let t = pipeline::transmission_for(&geom, key.dim, &config.backend)?;
    let m = pipeline::build_instrument(&t, key.pixels, 1, Reductions::default(), None)?;
    let kappa = condition_number(&m)?.kappa;
    let wall_ms = if config.record_wall_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(StructureRecord {
        seed,
        kappa,
        t_avg: t.average_transmission(),
        wall_ms,
    })
}

fn evaluate_point(config: &SweepConfig, key: &PointKey) -> Result<PointRecord> {
    let structures: Result<Vec<_>> = (0..config.structures_per_point)
        .into_par_iter()
        .map(|i| evaluate_structure(config, key, i))
        .collect();
    match structures {
        Ok(s) => Ok(PointRecord::new(*key, s)),
        Err(HarnessError::Core(e @ metaqst::Error::Resource { .. })) => {
            log::warn!("point {key:?} failed: {e}");
            Ok(PointRecord::failed(*key, e.to_string()))
        }
        Err(e) => Err(e),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn run_sweep(config: &SweepConfig, options: &SweepOptions) -> Result<SweepOutcome> {
    config.validate()?;
    let points_dir = options.output_dir.join("points");
    fs::create_dir_all(&points_dir).map_err(|e| HarnessError::io(&points_dir, e))?;

    let keys = config.points();
    let mut records: Vec<Option<PointRecord>> = vec![None; keys.len()];
    let mut todo = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        let path = points_dir.join(format!("{}.json", config.point_hash(key)));
        match fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
        {
            Some(r) => records[i] = Some(r),
            None => todo.push((i, path)),
        }
    }
    let cached = keys.len() - todo.len();
    let budget = options.stop_after.unwrap_or(usize::MAX).min(todo.len());
    let complete = budget == todo.len();

    let fresh: Result<Vec<(usize, PointRecord)>> = todo[..budget]
        .par_iter()
        .map(|(i, path)| {
            let record = evaluate_point(config, &keys[*i])?;
            if record.is_ok() {
                let text = serde_json::to_string_pretty(&record).expect("serializable record");
                write_atomic(path, &text)?;
            }
            log::info!("point {:?} done", keys[*i]);
            Ok((*i, record))
        })
        .collect();
    for (i, r) in fresh? {
        records[i] = Some(r);
    }

    let dataset = SweepDataset {
        provenance: provenance::block(
            config,
            json!({
                "kind": "sweep",
                "base_seed": config.base_seed,
                "seeds": [config.base_seed, config.base_seed + config.structures_per_point as u64 - 1],
                "backend": config.backend,
            }),
        ),
        config: config.clone(),
        points: records.into_iter().flatten().collect(),
    };
    if complete {
        let dir = &options.output_dir;
        write_atomic(&dir.join("sweep.csv"), &dataset.to_csv())?;
        let text = serde_json::to_string_pretty(&dataset).expect("serializable dataset");
        write_atomic(&dir.join("sweep.json"), &text)?;
        write_atomic(&dir.join("kappa.svg"), &dataset.chart().to_svg())?;
    }
    Ok(SweepOutcome {
        dataset,
        complete,
        computed: budget,
        cached,
    })
}
