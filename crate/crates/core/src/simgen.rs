//! Synthetic two-scale functional data: smooth curves from a low-rank
//! expansion in an analytic basis, rough curves from a short-memory
//! process, the analytic population covariances of both, and the error
//! metrics and spectral-truncation baseline used to judge estimators.
//!
//! All randomness flows through seeded ChaCha streams: stream 0 draws the
//! structural quantities fixed per configuration (moving-average weights,
//! bridge paths), stream 1 the smooth scores, stream 2 the rough draws.
//! Identical configurations therefore reproduce identical datasets bit for
//! bit, and two configurations differing only in the rough kind share their
//! smooth curves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covmodel::{empirical_covariance, Grid, SampleMatrix, SymCov};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectra::spectrum;

/// Variance of the white-noise rough process.
pub const WHITE_NOISE_VARIANCE: f64 = 0.09;

/// Smooth eigenfunction families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SmoothBasis {
    /// Fourier basis, with sqrt(2) sin(2 pi t) substituted when r = 1.
    Fb,
    /// Gram-Schmidt orthonormalization of five fixed analytic curves.
    Ac,
    /// Shifted Legendre polynomials, orthonormalized on the grid.
    Lp,
}

/// Rough process families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RoughKind {
    /// Moving average of order ceil(K delta / 2) with unit leading weight.
    Ma,
    /// Unit-norm triangular bumps on consecutive delta-length supports.
    Tri,
    /// Reflected Brownian bridge shapes on the same supports.
    Rbb,
    /// Independent N(0, 0.09) noise at every grid point.
    White,
}

/// Eigenvalue regimes: well separated (1) or interlaced with the rough
/// spectrum (2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    One,
    Two,
}

impl Regime {
    pub fn as_number(self) -> u8 {
        match self {
            Regime::One => 1,
            Regime::Two => 2,
        }
    }

    pub fn from_number(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Regime::One),
            2 => Ok(Regime::Two),
            other => Err(Error::InvalidConfig(format!(
                "regime {other} is not 1 or 2"
            ))),
        }
    }
}

impl Serialize for Regime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_number())
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Regime::from_number(v).map_err(serde::de::Error::custom)
    }
}

/// Full description of one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    pub smooth: SmoothBasis,
    pub rough: RoughKind,
    pub r: usize,
    pub delta: f64,
    pub regime: Regime,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

/// Letter cells of the scenario table, plus the white-noise check.
pub fn scenario_cell(letter: &str) -> Result<(SmoothBasis, RoughKind)> {
    use RoughKind::*;
    use SmoothBasis::*;
    Ok(match letter {
        "A" => (Fb, Ma),
        "B" => (Ac, Ma),
        "C" => (Lp, Ma),
        "D" => (Fb, Tri),
        "E" => (Ac, Tri),
        "F" => (Lp, Tri),
        "G" => (Fb, Rbb),
        "H" => (Ac, Rbb),
        "I" => (Lp, Rbb),
        "WHITE" => (Fb, White),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown scenario {other:?}; expected A..I or WHITE"
            )))
        }
    })
}

/// The six numbered (rank, delta) combinations.
pub fn combination(index: usize) -> Result<(usize, f64)> {
    const TABLE: [(usize, f64); 6] = [
        (1, 0.05),
        (1, 0.1),
        (3, 0.05),
        (3, 0.1),
        (5, 0.05),
        (5, 0.1),
    ];
    TABLE
        .get(index.checked_sub(1).ok_or_else(|| {
            Error::InvalidConfig("combination numbering starts at 1".into())
        })?)
        .copied()
        .ok_or_else(|| Error::InvalidConfig(format!("combination {index} outside 1..=6")))
}

impl ScenarioConfig {
    /// Builds a config from the scenario letter and combination number.
    pub fn from_table(
        letter: &str,
        combo: usize,
        regime: Regime,
        n: usize,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let (smooth, rough) = scenario_cell(letter)?;
        let (r, delta) = combination(combo)?;
        let cfg = Self {
            smooth,
            rough,
            r,
            delta,
            regime,
            n,
            k,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidConfig("rank must be positive".into()));
        }
        if matches!(self.smooth, SmoothBasis::Ac | SmoothBasis::Lp) && self.r > 5 {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds the 5 listed basis functions",
                self.r
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "delta {} outside (0, 0.5)",
                self.delta
            )));
        }
        if self.regime == Regime::Two && self.r < 2 {
            return Err(Error::InvalidConfig(
                "regime 2 interlaces eigenvalues and needs rank > 1".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if self.k < 4 {
            return Err(Error::InsufficientData {
                needed: 4,
                got: self.k,
            });
        }
        Ok(())
    }
}

/// Smooth eigenvalues per regime: equally spaced from 1.45 down to 0.25
/// (regime 1) or from 1.0 down to 0.04 (regime 2), with the
/// single-component substitution in regime 1.
pub fn smooth_eigenvalues(regime: Regime, r: usize) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::InvalidConfig("rank must be positive".into()));
    }
    match regime {
        Regime::One => {
            if r == 1 {
                return Ok(vec![0.25]);
            }
            Ok(linspace(1.45, 0.25, r))
        }
        Regime::Two => {
            if r < 2 {
                return Err(Error::InvalidConfig(
                    "regime 2 interlaces eigenvalues and needs rank > 1".into(),
                ));
            }
            Ok(linspace(1.0, 0.04, r))
        }
    }
}

/// Rough eigenvalues: 0.09 leading, then 0.04 halving toward zero.
pub fn rough_eigenvalues(d: usize) -> Vec<f64> {
    (1..=d)
        .map(|a| {
            if a == 1 {
                0.09
            } else {
                0.04 * 0.5_f64.powi(a as i32 - 2)
            }
        })
        .collect()
}

fn linspace(from: f64, to: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| from + (to - from) * i as f64 / (count - 1) as f64)
        .collect()
}

fn eval_on_grid(grid: &Grid, f: impl Fn(f64) -> f64) -> DVector<f64> {
    DVector::from_iterator(grid.k(), grid.points().iter().map(|&t| f(t)))
}

fn fourier_element(m: usize, t: f64) -> f64 {
    use std::f64::consts::TAU;
    if m == 0 {
        return 1.0;
    }
    let freq = (m + 1) / 2;
    let phase = TAU * freq as f64 * t;
    if m % 2 == 1 {
        2.0_f64.sqrt() * phase.sin()
    } else {
        2.0_f64.sqrt() * phase.cos()
    }
}

fn analytic_curves(grid: &Grid, r: usize) -> Result<Vec<DVector<f64>>> {
    use std::f64::consts::TAU;
    let fns: [&dyn Fn(f64) -> f64; 5] = [
        &|t| 5.0 * t * (TAU * t).sin(),
        &|t| t * (TAU * t).cos() - 3.0,
        &|t| 5.0 * t + (TAU * t).sin() - 2.0,
        &|t| (2.0 * TAU * t).cos() + (t / 2.0) * (t / 2.0),
        &|t| 6.0 * t * (1.0 - t),
    ];
    take_curves(grid, r, &fns)
}

fn legendre_curves(grid: &Grid, r: usize) -> Result<Vec<DVector<f64>>> {
    let fns: [&dyn Fn(f64) -> f64; 5] = [
        &|t| 6.0 * t * t - 6.0 * t + 1.0,
        &|t| 2.0 * t - 1.0,
        &|_| 1.0,
        &|t| ((20.0 * t - 30.0) * t + 12.0) * t - 1.0,
        &|t| (((70.0 * t - 140.0) * t + 90.0) * t - 20.0) * t + 1.0,
    ];
    take_curves(grid, r, &fns)
}

fn take_curves(
    grid: &Grid,
    r: usize,
    fns: &[&dyn Fn(f64) -> f64],
) -> Result<Vec<DVector<f64>>> {
    if r > fns.len() {
        return Err(Error::InvalidConfig(format!(
            "rank {r} exceeds the {} listed basis functions",
            fns.len()
        )));
    }
    Ok(fns[..r].iter().map(|f| eval_on_grid(grid, f)).collect())
}

/// Orthonormalizes the curves under the (1/K) inner product, in order.
fn gram_schmidt(curves: Vec<DVector<f64>>, k: usize) -> Result<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(curves.len());
    for (idx, mut v) in curves.into_iter().enumerate() {
        // Two passes keep the basis orthogonal to machine precision.
        for _ in 0..2 {
            for u in &out {
                let c = v.dot(u) / k as f64;
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = (v.dot(&v) / k as f64).sqrt();
        if norm < 1e-10 {
            return Err(Error::InvalidConfig(format!(
                "basis function {} is linearly dependent on the grid",
                idx + 1
            )));
        }
        v /= norm;
        out.push(v);
    }
    Ok(out)
}

/// The r smooth eigenfunctions evaluated on the grid, as columns,
/// orthonormal under the (1/K) inner product.
pub fn smooth_basis(kind: SmoothBasis, r: usize, grid: &Grid) -> Result<DMatrix<f64>> {
    if r == 0 {
        return Err(Error::InvalidConfig("rank must be positive".into()));
    }
    let k = grid.k();
    let columns = match kind {
        SmoothBasis::Fb => {
            if r == 1 {
                vec![eval_on_grid(grid, |t| fourier_element(1, t))]
            } else {
                (0..r)
                    .map(|m| eval_on_grid(grid, |t| fourier_element(m, t)))
                    .collect()
            }
        }
        SmoothBasis::Ac => gram_schmidt(analytic_curves(grid, r)?, k)?,
        SmoothBasis::Lp => gram_schmidt(legendre_curves(grid, r)?, k)?,
    };
    let mut m = DMatrix::zeros(k, r);
    for (j, col) in columns.iter().enumerate() {
        m.set_column(j, col);
    }
    Ok(m)
}

/// Structural description of the rough process actually drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum RoughStructure {
    /// Moving-average order and weights theta_0..theta_q.
    MovingAverage { q: usize, theta: Vec<f64> },
    /// Component curves (columns) and their eigenvalues.
    Components { psi: DMatrix<f64>, beta: Vec<f64> },
    /// Noise variance at each grid point.
    WhiteNoise { sigma2: f64 },
}

/// One generated dataset with its population and empirical truths.
#[derive(Debug, Clone)]
pub struct PopulationTruth {
    pub config: ScenarioConfig,
    pub grid: Grid,
    /// Smooth eigenfunctions on the grid, K x r.
    pub eta: DMatrix<f64>,
    pub smooth_eigenvalues: Vec<f64>,
    pub rough: RoughStructure,
    pub ltrue: SymCov,
    pub btrue: SymCov,
    pub rtrue: SymCov,
    pub lsample: SymCov,
    pub bsample: SymCov,
    pub rsample: SymCov,
    pub ysample: SampleMatrix,
    pub wsample: SampleMatrix,
    /// Observed curves: ysample + wsample, row by row.
    pub xsample: SampleMatrix,
}

/// Number of disjoint bump supports tiling [0, 1].
fn component_count(delta: f64) -> usize {
    (1.0 / delta).floor() as usize
}

/// Moving-average order.
pub fn ma_order(k: usize, delta: f64) -> usize {
    (k as f64 * delta / 2.0).ceil() as usize
}

fn tri_components(grid: &Grid, delta: f64) -> DMatrix<f64> {
    let d = component_count(delta);
    let k = grid.k();
    let height = (3.0 / delta).sqrt();
    let mut psi = DMatrix::zeros(k, d);
    for a in 0..d {
        let center = (a as f64 + 0.5) * delta;
        for (j, &t) in grid.points().iter().enumerate() {
            let dist = 1.0 - (t - center).abs() / (delta / 2.0);
            if dist > 0.0 {
                psi[(j, a)] = height * dist;
            }
        }
    }
    psi
}

fn rbb_components(grid: &Grid, delta: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = component_count(delta);
    let k = grid.k();
    // 10x oversampling over the grid points a support can contain.
    let m = 10 * ((delta * k as f64).ceil() as usize).max(2);
    let mut psi = DMatrix::zeros(k, d);
    for a in 0..d {
        // Brownian bridge on m+1 nodes, pinned to zero at both ends.
        let mut walk = Vec::with_capacity(m + 1);
        let step = (1.0 / m as f64).sqrt();
        let mut acc = 0.0;
        walk.push(0.0);
        for _ in 0..m {
            acc += step * rng.sample::<f64, _>(StandardNormal);
            walk.push(acc);
        }
        let last = walk[m];
        let bridge: Vec<f64> = walk
            .iter()
            .enumerate()
            .map(|(j, &w)| (w - last * j as f64 / m as f64).abs())
            .collect();
        // Unit L2 norm over the support, by fine-grid quadrature.
        let norm2: f64 = delta / m as f64 * bridge.iter().map(|b| b * b).sum::<f64>();
        let scale = 1.0 / norm2.sqrt();
        let lo = a as f64 * delta;
        for (j, &t) in grid.points().iter().enumerate() {
            let u = (t - lo) / delta;
            if (0.0..1.0).contains(&u) {
                let pos = u * m as f64;
                let idx = (pos.floor() as usize).min(m - 1);
                let frac = pos - idx as f64;
                psi[(j, a)] = scale * (bridge[idx] * (1.0 - frac) + bridge[idx + 1] * frac);
            }
        }
    }
    psi
}

fn component_population(psi: &DMatrix<f64>, beta: &[f64]) -> DMatrix<f64> {
    let k = psi.nrows();
    let mut b = DMatrix::zeros(k, k);
    for (a, &lam) in beta.iter().enumerate() {
        let col = psi.column(a);
        for y in 0..k {
            if col[y] == 0.0 {
                continue;
            }
            for x in 0..k {
                b[(x, y)] += lam * col[x] * col[y];
            }
        }
    }
    linalg::symmetrize(&mut b);
    b
}

fn ma_population(theta: &[f64], k: usize) -> DMatrix<f64> {
    let q = theta.len() - 1;
    let mut b = DMatrix::zeros(k, k);
    for j in 1..=k {
        for i in 1..=j {
            if j - i > q {
                continue;
            }
            let lo = 1.max(j.saturating_sub(q));
            let mut acc = 0.0;
            for m in lo..=i {
                acc += theta[j - m] * theta[i - m];
            }
            b[(i - 1, j - 1)] = acc;
            b[(j - 1, i - 1)] = acc;
        }
    }
    b
}

fn component_samples(
    psi: &DMatrix<f64>,
    beta: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let k = psi.nrows();
    let d = beta.len();
    let mut w = DMatrix::zeros(n, k);
    for i in 0..n {
        for (a, &lam) in beta.iter().enumerate().take(d) {
            let b: f64 = rng.sample(StandardNormal);
            let coeff = b * lam.sqrt();
            let col = psi.column(a);
            for j in 0..k {
                w[(i, j)] += coeff * col[j];
            }
        }
    }
    w
}

/// Generates the dataset for a configuration, with the smooth eigenvalues
/// taken from the regime.
pub fn generate(cfg: &ScenarioConfig) -> Result<PopulationTruth> {
    let lams = smooth_eigenvalues(cfg.regime, cfg.r)?;
    generate_with_eigenvalues(cfg, &lams)
}

/// Same, with explicit smooth eigenvalues (zero entries allowed); used to
/// probe degenerate populations.
pub fn generate_with_eigenvalues(
    cfg: &ScenarioConfig,
    lams: &[f64],
) -> Result<PopulationTruth> {
    cfg.validate()?;
    if lams.len() != cfg.r {
        return Err(Error::DimensionMismatch {
            expected: format!("{} eigenvalues", cfg.r),
            got: format!("{}", lams.len()),
        });
    }
    if lams.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(
            "smooth eigenvalues must be finite and nonnegative".into(),
        ));
    }
    let k = cfg.k;
    let n = cfg.n;
    let grid = Grid::midpoint(k)?;
    let eta = smooth_basis(cfg.smooth, cfg.r, &grid)?;

    let mut ltrue = DMatrix::zeros(k, k);
    for (a, &lam) in lams.iter().enumerate() {
        let col = eta.column(a);
        for y in 0..k {
            for x in 0..k {
                ltrue[(x, y)] += lam * col[x] * col[y];
            }
        }
    }
    linalg::symmetrize(&mut ltrue);

    let mut structural = ChaCha8Rng::seed_from_u64(cfg.seed);
    structural.set_stream(0);
    let (rough, btrue) = match cfg.rough {
        RoughKind::Ma => {
            let q = ma_order(k, cfg.delta);
            let mut theta = vec![1.0];
            for _ in 0..q {
                theta.push(structural.random_range(-1.0..1.0));
            }
            let btrue = ma_population(&theta, k);
            (RoughStructure::MovingAverage { q, theta }, btrue)
        }
        RoughKind::Tri => {
            let psi = tri_components(&grid, cfg.delta);
            let beta = rough_eigenvalues(psi.ncols());
            let btrue = component_population(&psi, &beta);
            (RoughStructure::Components { psi, beta }, btrue)
        }
        RoughKind::Rbb => {
            let psi = rbb_components(&grid, cfg.delta, &mut structural);
            let beta = rough_eigenvalues(psi.ncols());
            let btrue = component_population(&psi, &beta);
            (RoughStructure::Components { psi, beta }, btrue)
        }
        RoughKind::White => (
            RoughStructure::WhiteNoise {
                sigma2: WHITE_NOISE_VARIANCE,
            },
            DMatrix::identity(k, k) * WHITE_NOISE_VARIANCE,
        ),
    };

    let mut smooth_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    smooth_rng.set_stream(1);
    let mut y = DMatrix::zeros(n, k);
    for i in 0..n {
        for (a, &lam) in lams.iter().enumerate() {
            let c: f64 = smooth_rng.sample(StandardNormal);
            let coeff = c * lam.sqrt();
            let col = eta.column(a);
            for j in 0..k {
                y[(i, j)] += coeff * col[j];
            }
        }
    }

    let mut rough_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rough_rng.set_stream(2);
    let w = match &rough {
        RoughStructure::MovingAverage { theta, .. } => {
            let mut w = DMatrix::zeros(n, k);
            for i in 0..n {
                let eps: Vec<f64> = (0..k).map(|_| rough_rng.sample(StandardNormal)).collect();
                for j in 0..k {
                    let mut acc = 0.0;
                    for (a, &th) in theta.iter().enumerate().take(j + 1) {
                        acc += th * eps[j - a];
                    }
                    w[(i, j)] = acc;
                }
            }
            w
        }
        RoughStructure::Components { psi, beta } => {
            component_samples(psi, beta, n, &mut rough_rng)
        }
        RoughStructure::WhiteNoise { sigma2 } => {
            let sd = sigma2.sqrt();
            DMatrix::from_fn(n, k, |_, _| sd * rough_rng.sample::<f64, _>(StandardNormal))
        }
    };

    let x = &y + &w;
    let ysample = SampleMatrix::new(y)?;
    let wsample = SampleMatrix::new(w)?;
    let xsample = SampleMatrix::new(x)?;
    let lsample = empirical_covariance(&ysample, false)?;
    let bsample = empirical_covariance(&wsample, false)?;
    let rsample = SymCov::new(lsample.values() + bsample.values())?;
    let btrue = SymCov::new(btrue)?;
    let ltrue = SymCov::new(ltrue)?;
    let rtrue = SymCov::new(ltrue.values() + btrue.values())?;

    Ok(PopulationTruth {
        config: *cfg,
        grid,
        eta,
        smooth_eigenvalues: lams.to_vec(),
        rough,
        ltrue,
        btrue,
        rtrue,
        lsample,
        bsample,
        rsample,
        ysample,
        wsample,
        xsample,
    })
}

/// Relative Frobenius error of an estimate against a reference.
pub fn err(u: &SymCov, reference: &SymCov) -> Result<f64> {
    if u.k() != reference.k() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", reference.k()),
            got: format!("{0}x{0}", u.k()),
        });
    }
    let denom = reference.values().norm();
    if denom == 0.0 {
        return Err(Error::InvalidConfig(
            "error metric needs a nonzero reference".into(),
        ));
    }
    Ok(linalg::frob_diff(u.values(), reference.values()) / denom)
}

/// Mean over curves of the normalized squared prediction error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelMise {
    pub value: f64,
    /// Curves dropped because the reference row had zero norm.
    pub excluded: usize,
}

pub fn rel_mise(yhat: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<RelMise> {
    if yhat.shape() != reference.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", reference.nrows(), reference.ncols()),
            got: format!("{}x{}", yhat.nrows(), yhat.ncols()),
        });
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for i in 0..yhat.nrows() {
        let denom = reference.row(i).norm_squared();
        if denom == 0.0 {
            excluded += 1;
            continue;
        }
        let num = (yhat.row(i) - reference.row(i)).norm_squared();
        acc += num / denom;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
        });
    }
    Ok(RelMise {
        value: acc / used as f64,
        excluded,
    })
}

/// Spectral-truncation baseline: the smallest leading eigenblock whose
/// eigenvalue sum reaches the target share of the trace.
pub fn kl_truncate(rn: &SymCov, variance_target: f64) -> Result<SymCov> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "variance target {variance_target} outside (0, 1]"
        )));
    }
    let spec = spectrum(rn, 0.0)?;
    let trace: f64 = spec.eigenvalues().iter().sum();
    if trace <= 0.0 {
        return Err(Error::InvalidConfig(
            "spectral truncation needs a positive trace".into(),
        ));
    }
    let mut cum = 0.0;
    let mut count = spec.k();
    for (j, &v) in spec.eigenvalues().iter().enumerate() {
        cum += v;
        if cum >= variance_target * trace {
            count = j + 1;
            break;
        }
    }
    SymCov::new(spec.reconstruct_leading(count))
}
