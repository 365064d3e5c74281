//! Grids, sample matrices, covariance containers, band masks, and the
//! resolution budget that says how fine a grid the two-scale split needs.
//!
//! Conventions used throughout the crate: curves are observed at K grid
//! points in [0, 1], one curve per row of a sample matrix; a band mask with
//! half-band w selects the entries with |i - j| > w; the empirical
//! covariance divides by n, not n - 1.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for accepting a matrix as symmetric.
pub const SYM_TOL: f64 = 1e-12;

/// How grid points are placed inside the K equal subintervals of [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridPlacement {
    Midpoint,
    UniformRandom { seed: u64 },
}

/// K strictly increasing design points, one per subinterval [(j-1)/K, j/K].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    placement: GridPlacement,
}

impl Grid {
    /// Midpoint placement: t_j = (j - 1/2) / K.
    pub fn midpoint(k: usize) -> Result<Self> {
        let points = (0..k).map(|j| (j as f64 + 0.5) / k as f64).collect();
        Self::validated(points, GridPlacement::Midpoint, k)
    }

    /// One point drawn uniformly inside each subinterval, reproducible by seed.
    pub fn uniform_random(k: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..k)
            .map(|j| {
                let lo = j as f64 / k as f64;
                let hi = (j + 1) as f64 / k as f64;
                rng.random_range(lo..hi)
            })
            .collect();
        Self::validated(points, GridPlacement::UniformRandom { seed }, k)
    }

    fn validated(points: Vec<f64>, placement: GridPlacement, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("grid needs at least one point".into()));
        }
        for (j, &t) in points.iter().enumerate() {
            let lo = j as f64 / k as f64;
            let hi = (j + 1) as f64 / k as f64;
            if !t.is_finite() || t < lo || t > hi {
                return Err(Error::InvalidConfig(format!(
                    "grid point {j} = {t} outside its subinterval [{lo}, {hi}]"
                )));
            }
            if j > 0 && points[j - 1] >= t {
                return Err(Error::InvalidConfig(format!(
                    "grid points not strictly increasing at index {j}"
                )));
            }
        }
        Ok(Self { points, placement })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn placement(&self) -> GridPlacement {
        self.placement
    }
}

/// n observed curves by K grid values, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InsufficientData {
                needed: 1,
                got: values.nrows().min(values.ncols()),
            });
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Square covariance matrix, stored exactly symmetric.
///
/// The constructor accepts inputs that are symmetric to within a relative
/// tolerance of 1e-12 and then averages mirrored entries so every
/// downstream computation sees bit-exact symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymCov {
    values: DMatrix<f64>,
}

impl SymCov {
    pub fn new(mut values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: "nonempty square matrix".into(),
                got: format!("{}x{}", values.nrows(), values.ncols()),
            });
        }
        check_finite(&values)?;
        let mut max_abs = 0.0_f64;
        let mut max_asym = 0.0_f64;
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                max_abs = max_abs.max(values[(i, j)].abs());
                if i < j {
                    max_asym = max_asym.max((values[(i, j)] - values[(j, i)]).abs());
                }
            }
        }
        let tol = SYM_TOL * max_abs.max(f64::MIN_POSITIVE);
        if max_asym > tol {
            return Err(Error::NotSymmetric { max_asym, tol });
        }
        linalg::symmetrize(&mut values);
        Ok(Self { values })
    }

    pub fn k(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Implicit 0/1 matrix selecting the entries farther than `half_band` from
/// the diagonal: value(i, j) = 1 exactly when |i - j| > half_band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandMask {
    k: usize,
    half_band: usize,
}

impl BandMask {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn half_band(&self) -> usize {
        self.half_band
    }

    pub fn is_off_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) > self.half_band
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.is_off_band(i, j) {
            1.0
        } else {
            0.0
        }
    }

    /// Number of ones: K^2 minus the band cardinality, in closed form.
    pub fn ones_count(&self) -> usize {
        let k = self.k;
        let w = self.half_band.min(k - 1);
        let band = k + 2 * (w * k - w * (w + 1) / 2);
        k * k - band
    }

    /// Zeroes every in-band entry of `m`, i.e. applies the mask entrywise.
    pub fn keep_off_band(&self, m: &mut DMatrix<f64>) {
        let k = self.k;
        for j in 0..k {
            for i in 0..k {
                if !self.is_off_band(i, j) {
                    m[(i, j)] = 0.0;
                }
            }
        }
    }
}

/// Default half-band is ceil(K/4); a wider band would erase the far
/// off-diagonal entries the completion step needs.
pub fn build_band_mask(k: usize, half_band: Option<usize>) -> Result<BandMask> {
    if k == 0 {
        return Err(Error::InvalidConfig("mask needs K >= 1".into()));
    }
    let w = half_band.unwrap_or(k.div_ceil(4));
    if w >= k {
        return Err(Error::InvalidBand { half_band: w, k });
    }
    Ok(BandMask { k, half_band: w })
}

/// Empirical covariance (1/n) sum of outer products, optionally centering
/// the curves by the pointwise mean first.
pub fn empirical_covariance(samples: &SampleMatrix, center: bool) -> Result<SymCov> {
    let n = samples.n();
    if center && n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let x = samples.values();
    let mut centered;
    let data = if center {
        centered = x.clone();
        let means = x.row_mean();
        for mut row in centered.row_iter_mut() {
            row -= &means;
        }
        &centered
    } else {
        x
    };
    let mut cov = data.transpose() * data;
    cov.unscale_mut(n as f64);
    SymCov::new(cov)
}

/// Smallest grid size at which rank r and band fraction delta are separable,
/// together with the quarter-band feasibility flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionBudget {
    pub r: usize,
    pub delta: f64,
    pub kstar: usize,
    /// True when delta < 1/4, the regime where the default quarter band
    /// retains enough off-band entries.
    pub quarter_feasible: bool,
}

impl ResolutionBudget {
    pub fn identifiable(&self, k: usize) -> bool {
        k >= self.kstar
    }
}

/// K* = ceil(max((2r + 2) / (1 - 2 delta), 4r + 4)).
pub fn critical_resolution(r: usize, delta: f64) -> Result<ResolutionBudget> {
    if r == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "band fraction delta = {delta} must be positive"
        )));
    }
    if delta >= 0.5 {
        return Err(Error::Unidentifiable { delta });
    }
    let ratio = (2.0 * r as f64 + 2.0) / (1.0 - 2.0 * delta);
    // Tiny slack so exact integer ratios do not round up through float error.
    let from_band = (ratio - 1e-9).ceil() as usize;
    let kstar = from_band.max(4 * r + 4);
    Ok(ResolutionBudget {
        r,
        delta,
        kstar,
        quarter_feasible: delta < 0.25,
    })
}
