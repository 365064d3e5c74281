//! End-to-end covariance separation: scree over candidate ranks, rank
//! selection, the smooth low-rank estimate L̂, the banded remainder B̂ from
//! alternating projections, and the spectra of L̂ and R̂ = L̂ + B̂.

use serde::{Deserialize, Serialize};

use crate::banded::{estimate_banded, DykstraConfig};
use crate::completion::{
    default_max_rank, scree, select_rank, RankRule, RankSelection, ScreeResult, SolverConfig,
};
use crate::covmodel::{build_band_mask, SymCov};
use crate::error::Result;
use crate::spectra::{spectrum, Spectrum, DEFAULT_CUTOFF};

/// Knobs for the full pipeline. `half_band` and `max_rank` fall back to the
/// resolution-driven defaults when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct DecomposeConfig {
    pub half_band: Option<usize>,
    pub max_rank: Option<usize>,
    pub rule: RankRule,
    pub solver: SolverConfig,
    pub dykstra: DykstraConfig,
    /// Relative eigenvalue cutoff used for both output spectra.
    pub cutoff: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            half_band: None,
            max_rank: None,
            rule: RankRule::Threshold { c: 1e-4 },
            solver: SolverConfig::default(),
            dykstra: DykstraConfig::default(),
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

/// The fitted triple (L̂, B̂, R̂) plus everything the fit produced on the
/// way: the scree, the rank choice, and both spectra.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub lhat: SymCov,
    pub bhat: SymCov,
    pub rhat: SymCov,
    pub selection: RankSelection,
    pub scree: ScreeResult,
    pub l_spectrum: Spectrum,
    pub r_spectrum: Spectrum,
    pub half_band: usize,
    pub completion_converged: bool,
    pub dykstra_converged: bool,
    pub dykstra_iterations: usize,
    pub dykstra_last_change: f64,
}

impl Decomposition {
    /// True when both the completion at the selected rank and the banded
    /// projection hit their stopping rules before the iteration caps.
    pub fn converged(&self) -> bool {
        self.completion_converged && self.dykstra_converged
    }

    pub fn selected_rank(&self) -> usize {
        self.selection.selected_rank
    }
}

pub fn decompose(rn: &SymCov, cfg: &DecomposeConfig) -> Result<Decomposition> {
    let mask = build_band_mask(rn.k(), cfg.half_band)?;
    let mut max_rank = cfg.max_rank.unwrap_or_else(|| default_max_rank(rn.k()));
    if let RankRule::Fixed { rank } = cfg.rule {
        max_rank = max_rank.max(rank);
    }
    let scree = scree(rn, &mask, Some(max_rank), &cfg.solver)?;
    let selection = select_rank(&scree, cfg.rule)?;
    let rank = selection.selected_rank;
    let factor = scree
        .factor_at(rank)
        .expect("selected rank is always a fitted rank");
    let lhat = SymCov::new(factor.product())?;
    let est = estimate_banded(rn, &lhat, mask.half_band(), &cfg.dykstra)?;
    let rhat = SymCov::new(lhat.values() + est.bhat.values())?;
    let l_spectrum = spectrum(&lhat, cfg.cutoff)?;
    let r_spectrum = spectrum(&rhat, cfg.cutoff)?;
    let completion_converged = scree.entries()[rank - 1].converged;
    Ok(Decomposition {
        lhat,
        bhat: est.bhat,
        rhat,
        selection,
        scree,
        l_spectrum,
        r_spectrum,
        half_band: mask.half_band(),
        completion_converged,
        dykstra_converged: est.converged,
        dykstra_iterations: est.iterations,
        dykstra_last_change: est.last_change,
    })
}
