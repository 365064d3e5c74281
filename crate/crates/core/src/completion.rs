//! Band-masked low-rank completion: fit a rank-i factor C so that C*C'
//! matches a covariance R on the entries outside the band, by first-order
//! descent with Armijo backtracking on the factorized objective
//!
//! ```text
//! g(C) = || P o (R - C C') ||_F^2,
//! ```
//!
//! where P keeps entries with |i - j| > half-band. The scree of achieved
//! fits over candidate ranks drives rank selection by a threshold or
//! penalty rule.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covmodel::{BandMask, SymCov};
use crate::error::{Error, Result};
use crate::linalg;

/// Armijo backtracking parameters: step shrink factor and slope fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    pub shrink: f64,
    pub slope: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            slope: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SolverConfig {
    /// Relative objective decrease over a 5-iteration window below which
    /// the run is declared converged.
    pub tol: f64,
    /// Gradient threshold scale: stop when the gradient max-norm is below
    /// grad_tol * (1 + ||P o R||_F).
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Extra random starts beyond the spectral (and warm) candidates.
    pub restarts: usize,
    pub seed: u64,
    pub line_search: LineSearchConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            grad_tol: 1e-8,
            max_iter: 5000,
            restarts: 0,
            seed: 0,
            line_search: LineSearchConfig::default(),
        }
    }
}

/// Converged K x i factor of the completed low-rank part.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    factor: DMatrix<f64>,
}

impl LowRankFactor {
    pub fn new(factor: DMatrix<f64>) -> Self {
        Self { factor }
    }

    pub fn k(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// The completed matrix C * C', exactly symmetric.
    pub fn product(&self) -> DMatrix<f64> {
        let mut p = &self.factor * self.factor.transpose();
        linalg::symmetrize(&mut p);
        p
    }
}

#[derive(Debug, Clone)]
pub struct CompletionDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Final fit of every candidate start, in the order they were run.
    pub candidate_fits: Vec<f64>,
    /// Objective after every accepted step of the winning run.
    pub fit_trace: Vec<f64>,
    /// False when the converged factor has a numerically deficient column
    /// rank; callers should surface this rather than ignore it.
    pub full_column_rank: bool,
}

#[derive(Debug, Clone)]
pub struct CompletionOutcome {
    pub factor: LowRankFactor,
    pub fit: f64,
    pub diagnostics: CompletionDiagnostics,
}

/// Sum of squared masked residuals at factor C (a K x i matrix).
pub fn masked_objective(r: &SymCov, c: &DMatrix<f64>, mask: &BandMask) -> Result<f64> {
    check_dims(r, c, mask, c.ncols())?;
    let ft = c.transpose();
    Ok(objective_only(r.values(), &ft, mask))
}

/// Gradient of the masked objective: 4 (P o (C C' - R)) C.
pub fn masked_gradient(r: &SymCov, c: &DMatrix<f64>, mask: &BandMask) -> Result<DMatrix<f64>> {
    check_dims(r, c, mask, c.ncols())?;
    let ft = c.transpose();
    let mut e = DMatrix::zeros(r.k(), r.k());
    fill_masked_residual(r.values(), &ft, mask, &mut e);
    let mut grad_t = DMatrix::zeros(c.ncols(), r.k());
    grad_t.gemm(4.0, &ft, &e, 0.0);
    Ok(grad_t.transpose())
}

fn check_dims(r: &SymCov, c: &DMatrix<f64>, mask: &BandMask, rank: usize) -> Result<()> {
    let k = r.k();
    if mask.k() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("mask of size {k}"),
            got: format!("{}", mask.k()),
        });
    }
    if c.nrows() != k || c.ncols() != rank {
        return Err(Error::DimensionMismatch {
            expected: format!("{k}x{rank} factor"),
            got: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    if rank == 0 || rank > k {
        return Err(Error::InvalidConfig(format!(
            "rank {rank} outside 1..={k}"
        )));
    }
    Ok(())
}

/// Spectral initializer: top-i eigenpairs of R with negative eigenvalues
/// clamped to zero, C0 = U_i diag(sqrt(max(lambda, 0))).
pub fn spectral_start(r: &SymCov, rank: usize) -> DMatrix<f64> {
    let (vals, vecs) = linalg::sym_eigen_desc(r.values());
    let k = r.k();
    let mut c = DMatrix::zeros(k, rank);
    for j in 0..rank.min(k) {
        let s = vals[j].max(0.0).sqrt();
        if s > 0.0 {
            for i in 0..k {
                c[(i, j)] = vecs[(i, j)] * s;
            }
        }
    }
    c
}

/// Residual fill: e keeps P o (C C' - R); in-band entries stay zero.
/// Factors are handled transposed (i x K) so row dots are contiguous.
fn fill_masked_residual(rm: &DMatrix<f64>, ft: &DMatrix<f64>, mask: &BandMask, e: &mut DMatrix<f64>) {
    let k = rm.nrows();
    let rank = ft.nrows();
    let w = mask.half_band();
    let fs = ft.as_slice();
    e.fill(0.0);
    for j in (w + 1)..k {
        let cj = &fs[j * rank..(j + 1) * rank];
        for i in 0..(j - w) {
            let ci = &fs[i * rank..(i + 1) * rank];
            let mut dot = 0.0;
            for t in 0..rank {
                dot += ci[t] * cj[t];
            }
            let res = dot - rm[(i, j)];
            e[(i, j)] = res;
            e[(j, i)] = res;
        }
    }
}

fn objective_only(rm: &DMatrix<f64>, ft: &DMatrix<f64>, mask: &BandMask) -> f64 {
    let k = rm.nrows();
    let rank = ft.nrows();
    let w = mask.half_band();
    let fs = ft.as_slice();
    let mut acc = 0.0;
    for j in 0..k {
        if j < w + 1 {
            continue;
        }
        let cj = &fs[j * rank..(j + 1) * rank];
        for i in 0..(j - w) {
            let ci = &fs[i * rank..(i + 1) * rank];
            let mut dot = 0.0;
            for t in 0..rank {
                dot += ci[t] * cj[t];
            }
            let res = dot - rm[(i, j)];
            acc += res * res;
        }
    }
    2.0 * acc
}

struct Descent {
    ft: DMatrix<f64>,
    fit: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// First-order descent with Barzilai-Borwein trial steps safeguarded by
/// Armijo backtracking. The objective trace is non-increasing.
fn descend(
    rm: &DMatrix<f64>,
    mask: &BandMask,
    mut ft: DMatrix<f64>,
    cfg: &SolverConfig,
    grad_floor: f64,
) -> Descent {
    let k = rm.nrows();
    let rank = ft.nrows();
    let mut e = DMatrix::zeros(k, k);
    fill_masked_residual(rm, &ft, mask, &mut e);
    let mut fit = e.iter().map(|v| v * v).sum::<f64>();
    let mut trace = vec![fit];
    let mut grad_t = DMatrix::zeros(rank, k);
    let mut prev_ft: Option<DMatrix<f64>> = None;
    let mut prev_grad: Option<DMatrix<f64>> = None;
    let mut last_step = 0.0_f64;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iter {
        iterations = iter + 1;
        grad_t.gemm(4.0, &ft, &e, 0.0);
        let gmax = grad_t.amax();
        if gmax < grad_floor || fit == 0.0 {
            converged = true;
            break;
        }
        let gg: f64 = grad_t.iter().map(|v| v * v).sum();

        // Barzilai-Borwein trial step; first iteration falls back to a
        // magnitude-matched guess that Armijo then corrects.
        let mut step = match (&prev_ft, &prev_grad) {
            (Some(pf), Some(pg)) => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for ((f_new, f_old), (g_new, g_old)) in ft
                    .iter()
                    .zip(pf.iter())
                    .zip(grad_t.iter().zip(pg.iter()))
                {
                    let s = f_new - f_old;
                    let y = g_new - g_old;
                    ss += s * s;
                    sy += s * y;
                }
                if sy > 0.0 && ss > 0.0 {
                    (ss / sy).clamp(1e-16, 1e16)
                } else {
                    (last_step * 2.0).max(1e-16)
                }
            }
            _ => {
                let fnorm = ft.norm();
                if fnorm > 0.0 {
                    fnorm / gg.sqrt()
                } else {
                    1.0 / (1.0 + gg.sqrt())
                }
            }
        };

        prev_ft = Some(ft.clone());
        prev_grad = Some(grad_t.clone());

        let slope = cfg.line_search.slope;
        let shrink = cfg.line_search.shrink;
        let mut accepted = false;
        let mut trial = DMatrix::zeros(rank, k);
        for _ in 0..120 {
            for ((t, &f), &g) in trial
                .iter_mut()
                .zip(ft.iter())
                .zip(grad_t.iter())
            {
                *t = f - step * g;
            }
            let f_try = objective_only(rm, &trial, mask);
            if f_try.is_finite() && f_try <= fit - slope * step * gg {
                accepted = true;
                break;
            }
            step *= shrink;
        }
        if !accepted {
            // No descent at any representable step: numerically stationary.
            converged = gmax < grad_floor;
            break;
        }
        last_step = step;
        std::mem::swap(&mut ft, &mut trial);
        fill_masked_residual(rm, &ft, mask, &mut e);
        fit = e.iter().map(|v| v * v).sum::<f64>();
        trace.push(fit);

        let len = trace.len();
        if len > 5 {
            let old = trace[len - 6];
            let rel = (old - fit) / old.max(f64::MIN_POSITIVE);
            if rel < cfg.tol {
                converged = true;
                break;
            }
        }
    }

    Descent {
        ft,
        fit,
        iterations,
        converged,
        trace,
    }
}

/// Runs the descent from one caller-supplied K x i start.
pub fn complete_from_start(
    r: &SymCov,
    mask: &BandMask,
    start: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<CompletionOutcome> {
    check_dims(r, start, mask, start.ncols())?;
    let grad_floor = cfg.grad_tol * (1.0 + masked_frobenius(r, mask));
    let d = descend(r.values(), mask, start.transpose(), cfg, grad_floor);
    Ok(outcome_from(vec![d], 0))
}

/// Best completion at the given rank over the spectral start, an optional
/// warm start padded with zero columns, and `cfg.restarts` random starts.
pub fn complete_at_rank(
    r: &SymCov,
    rank: usize,
    mask: &BandMask,
    cfg: &SolverConfig,
    warm: Option<&LowRankFactor>,
) -> Result<CompletionOutcome> {
    if rank == 0 || rank > r.k() {
        return Err(Error::InvalidConfig(format!(
            "rank {rank} outside 1..={}",
            r.k()
        )));
    }
    if mask.k() != r.k() {
        return Err(Error::DimensionMismatch {
            expected: format!("mask of size {}", r.k()),
            got: format!("{}", mask.k()),
        });
    }
    let grad_floor = cfg.grad_tol * (1.0 + masked_frobenius(r, mask));
    let mut starts: Vec<DMatrix<f64>> = vec![spectral_start(r, rank)];
    if let Some(w) = warm {
        if w.k() != r.k() || w.rank() > rank {
            return Err(Error::DimensionMismatch {
                expected: format!("warm start with K = {} and rank <= {rank}", r.k()),
                got: format!("{}x{}", w.k(), w.rank()),
            });
        }
        let mut padded = DMatrix::zeros(r.k(), rank);
        padded.view_mut((0, 0), (r.k(), w.rank())).copy_from(w.factor());
        starts.push(padded);
    }
    if cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scale = random_start_scale(r, mask, rank);
        for _ in 0..cfg.restarts {
            starts.push(DMatrix::from_fn(r.k(), rank, |_, _| {
                scale * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }));
        }
    }

    let runs: Vec<Descent> = starts
        .into_iter()
        .map(|c0| descend(r.values(), mask, c0.transpose(), cfg, grad_floor))
        .collect();
    let mut best = 0;
    for (idx, run) in runs.iter().enumerate() {
        if run.fit < runs[best].fit {
            best = idx;
        }
    }
    Ok(outcome_from(runs, best))
}

fn outcome_from(runs: Vec<Descent>, best: usize) -> CompletionOutcome {
    let candidate_fits: Vec<f64> = runs.iter().map(|r| r.fit).collect();
    let winner = runs.into_iter().nth(best).expect("at least one run");
    let factor = winner.ft.transpose();
    let full_column_rank = has_full_column_rank(&factor);
    CompletionOutcome {
        fit: winner.fit,
        diagnostics: CompletionDiagnostics {
            iterations: winner.iterations,
            converged: winner.converged,
            candidate_fits,
            fit_trace: winner.trace,
            full_column_rank,
        },
        factor: LowRankFactor::new(factor),
    }
}

fn has_full_column_rank(c: &DMatrix<f64>) -> bool {
    // Column rank via the spectrum of the small Gram matrix C'C.
    let gram = c.transpose() * c;
    let (vals, _) = linalg::sym_eigen_desc(&gram);
    let top = vals[0].max(0.0);
    if top == 0.0 {
        return false;
    }
    vals.last().copied().unwrap_or(0.0) > 1e-14 * top
}

fn random_start_scale(r: &SymCov, mask: &BandMask, rank: usize) -> f64 {
    let ones = mask.ones_count().max(1);
    let mean_sq = masked_frobenius_sq(r, mask) / ones as f64;
    // Entry scale so that C C' has roughly the magnitude of the data.
    (mean_sq.sqrt() / rank as f64).sqrt().max(1e-8)
}

fn masked_frobenius_sq(r: &SymCov, mask: &BandMask) -> f64 {
    let m = r.values();
    let k = r.k();
    let mut acc = 0.0;
    for j in 0..k {
        for i in 0..k {
            if mask.is_off_band(i, j) {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc
}

fn masked_frobenius(r: &SymCov, mask: &BandMask) -> f64 {
    masked_frobenius_sq(r, mask).sqrt()
}

#[derive(Debug, Clone)]
pub struct ScreeEntry {
    pub rank: usize,
    pub fit: f64,
    pub normalized_fit: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits over ranks 1..=max_rank, each warm-started from the previous
/// factor, so the sequence is non-increasing by construction.
#[derive(Debug, Clone)]
pub struct ScreeResult {
    entries: Vec<ScreeEntry>,
    factors: Vec<LowRankFactor>,
    normalizer: f64,
}

impl ScreeResult {
    pub fn entries(&self) -> &[ScreeEntry] {
        &self.entries
    }

    /// ||P o R||_F^2, the normalizer of the fit sequence.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn factor_at(&self, rank: usize) -> Option<&LowRankFactor> {
        self.factors.get(rank.checked_sub(1)?)
    }

    pub fn max_rank(&self) -> usize {
        self.entries.len()
    }
}

/// Default largest candidate rank: min(ceil(K/4) - 1, 10).
pub fn default_max_rank(k: usize) -> usize {
    (k.div_ceil(4).saturating_sub(1)).min(10).max(1)
}

pub fn scree(
    r: &SymCov,
    mask: &BandMask,
    max_rank: Option<usize>,
    cfg: &SolverConfig,
) -> Result<ScreeResult> {
    let k = r.k();
    let max_rank = max_rank.unwrap_or_else(|| default_max_rank(k));
    if max_rank == 0 || max_rank > k {
        return Err(Error::InvalidConfig(format!(
            "max rank {max_rank} outside 1..={k}"
        )));
    }
    let normalizer = masked_frobenius_sq(r, mask);
    let mut entries = Vec::with_capacity(max_rank);
    let mut factors: Vec<LowRankFactor> = Vec::with_capacity(max_rank);
    for rank in 1..=max_rank {
        let warm = factors.last();
        let out = complete_at_rank(r, rank, mask, cfg, warm)?;
        let normalized_fit = if normalizer > 0.0 {
            out.fit / normalizer
        } else {
            0.0
        };
        entries.push(ScreeEntry {
            rank,
            fit: out.fit,
            normalized_fit,
            converged: out.diagnostics.converged,
            iterations: out.diagnostics.iterations,
        });
        factors.push(out.factor);
    }
    Ok(ScreeResult {
        entries,
        factors,
        normalizer,
    })
}

/// Rank choice rules over a normalized scree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RankRule {
    /// Smallest rank whose normalized fit drops below c.
    Threshold { c: f64 },
    /// argmin over ranks of normalized fit + tau * rank, ties to smaller.
    Penalty { tau: f64 },
    Fixed { rank: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankSelection {
    pub selected_rank: usize,
    pub rule: RankRule,
    /// Set when a threshold never fires: the scree has not leveled out
    /// below c and the reported rank is the largest candidate.
    pub not_leveled: bool,
}

pub fn select_rank(scree: &ScreeResult, rule: RankRule) -> Result<RankSelection> {
    let entries = scree.entries();
    if entries.is_empty() {
        return Err(Error::InvalidConfig("empty scree".into()));
    }
    match rule {
        RankRule::Threshold { c } => {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "threshold constant c = {c} must be positive"
                )));
            }
            for e in entries {
                if e.normalized_fit < c {
                    return Ok(RankSelection {
                        selected_rank: e.rank,
                        rule,
                        not_leveled: false,
                    });
                }
            }
            Ok(RankSelection {
                selected_rank: entries.last().unwrap().rank,
                rule,
                not_leveled: true,
            })
        }
        RankRule::Penalty { tau } => {
            if !(tau > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "penalty tau = {tau} must be positive"
                )));
            }
            let mut best = &entries[0];
            let mut best_score = best.normalized_fit + tau;
            for e in &entries[1..] {
                let score = e.normalized_fit + tau * e.rank as f64;
                if score < best_score {
                    best = e;
                    best_score = score;
                }
            }
            Ok(RankSelection {
                selected_rank: best.rank,
                rule,
                not_leveled: false,
            })
        }
        RankRule::Fixed { rank } => {
            if rank == 0 || rank > entries.last().unwrap().rank {
                return Err(Error::InvalidConfig(format!(
                    "fixed rank {rank} outside the computed scree 1..={}",
                    entries.last().unwrap().rank
                )));
            }
            Ok(RankSelection {
                selected_rank: rank,
                rule,
                not_leveled: false,
            })
        }
    }
}
