//! Picking the best structure out of a sweep.

use metaqst::metasurface::{generate_random, GenerationParams, MetasurfaceGeometry};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::sweep::{PointKey, SweepDataset};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub max_kappa: Option<f64>,
    pub min_t_avg: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub key: PointKey,
    pub seed: u64,
    pub kappa: f64,
    pub t_avg: f64,
}

impl Candidate {
    /// Regenerates the geometry this candidate was evaluated on.
    pub fn geometry(&self) -> metaqst::Result<MetasurfaceGeometry> {
        let k = self.key;
        generate_random(
            &GenerationParams::new(k.mu_nm, k.d_min_nm, k.h_nm),
            self.seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Selection {
    Selected {
        candidate: Candidate,
        feasible_count: usize,
    },
    NearestMiss {
        candidate: Candidate,
        kappa_excess: f64,
        t_avg_shortfall: f64,
    },
}

impl Selection {
    pub fn candidate(&self) -> &Candidate {
        match self {
            Selection::Selected { candidate, .. } | Selection::NearestMiss { candidate, .. } => {
                candidate
            }
        }
    }
}

/// Every well-posed structure of the successful points.
pub fn candidates(ds: &SweepDataset) -> Vec<Candidate> {
    ds.points
        .iter()
        .filter(|p| p.is_ok() && p.well_posed)
        .flat_map(|p| {
            p.structures.iter().map(|s| Candidate {
                key: p.key,
                seed: s.seed,
                kappa: s.kappa,
                t_avg: s.t_avg,
            })
        })
        .filter(|c| c.kappa.is_finite())
        .collect()
}

fn violation(c: &Candidate, crit: &Criteria) -> (f64, f64) {
    let excess = crit.max_kappa.map_or(0.0, |m| (c.kappa - m).max(0.0));
    let shortfall = crit.min_t_avg.map_or(0.0, |m| (m - c.t_avg).max(0.0));
    (excess, shortfall)
}

/// Lower κ first, then higher T_avg, then lower seed.
fn better(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.kappa
        .total_cmp(&b.kappa)
        .then(b.t_avg.total_cmp(&a.t_avg))
        .then(a.seed.cmp(&b.seed))
}

/// Minimum-κ structure with T_avg ≥ min_t_avg and κ ≤ max_kappa. When none
/// qualifies, the structure with the smallest relative violation is reported
/// as a nearest miss.
pub fn select_best(candidates: &[Candidate], criteria: &Criteria) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(HarnessError::Config(
            "dataset has no well-posed structures".into(),
        ));
    }
    let feasible: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| violation(c, criteria) == (0.0, 0.0))
        .collect();
    if let Some(best) = feasible.iter().copied().min_by(|a, b| better(a, b)) {
        return Ok(Selection::Selected {
            candidate: *best,
            feasible_count: feasible.len(),
        });
    }
    let relative = |c: &Candidate| {
        let (e, s) = violation(c, criteria);
        e / criteria.max_kappa.unwrap_or(1.0).max(f64::MIN_POSITIVE)
            + s / criteria.min_t_avg.unwrap_or(1.0).max(f64::MIN_POSITIVE)
    };
    let miss = candidates
        .iter()
        .min_by(|a, b| relative(a).total_cmp(&relative(b)).then(better(a, b)))
        .expect("non-empty");
    let (kappa_excess, t_avg_shortfall) = violation(miss, criteria);
    Ok(Selection::NearestMiss {
        candidate: *miss,
        kappa_excess,
        t_avg_shortfall,
    })
}
