//! Best-linear-prediction separation of observed curves into a smooth part
//! and a rough remainder. Scores are xi_j = lambda_j v_j' R^+ x with the
//! operator-scaled spectra of the fitted smooth and total covariances; the
//! smooth reconstruction is their expansion in the smooth eigenvectors and
//! the rough part is the exact residual.

use nalgebra::{DMatrix, DVector};

use crate::covmodel::{SampleMatrix, SymCov};
use crate::decompose::Decomposition;
use crate::error::{Error, Result};
use crate::spectra::{spectrum, Spectrum, DEFAULT_CUTOFF};

/// Row-wise separation of a sample of curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeparation {
    /// Smooth reconstructions, one row per curve.
    pub yhat: DMatrix<f64>,
    /// Rough residuals; yhat + what reproduces the input.
    pub what: DMatrix<f64>,
    /// Smooth component scores, n x rhat.
    pub scores: DMatrix<f64>,
    /// Number of smooth components used per curve.
    pub rhat: usize,
}

fn check_shared_grid(l_spec: &Spectrum, r_spec: &Spectrum) -> Result<()> {
    if l_spec.k() != r_spec.k() {
        return Err(Error::DimensionMismatch {
            expected: format!("spectra on a shared grid of size {}", l_spec.k()),
            got: format!("{}", r_spec.k()),
        });
    }
    Ok(())
}

/// Scores of one curve: the retained components of the smooth spectrum,
/// each weighted by its eigenvalue against the pseudo-inverse image of x.
/// A rank-0 smooth spectrum yields an empty vector.
pub fn blp_scores(
    x: &DVector<f64>,
    l_spec: &Spectrum,
    r_spec: &Spectrum,
) -> Result<DVector<f64>> {
    check_shared_grid(l_spec, r_spec)?;
    let p = r_spec.pseudo_inverse_apply(x, r_spec.cutoff())?;
    Ok(scores_from_image(l_spec, &p))
}

fn scores_from_image(l_spec: &Spectrum, p: &DVector<f64>) -> DVector<f64> {
    let q = l_spec.effective_rank();
    DVector::from_fn(q, |j, _| l_spec.eigenvalues()[j] * l_spec.vector(j).dot(p))
}

fn expand_scores(l_spec: &Spectrum, scores: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(l_spec.k());
    for j in 0..scores.len() {
        y.axpy(scores[j], &l_spec.vector(j), 1.0);
    }
    y
}

/// Separates every row of `samples` using the given spectra. The stored
/// rough part is exactly the elementwise difference between the input and
/// the stored smooth part, so the input is always recoverable bit for bit
/// as yhat plus the residual; the float sum yhat + what reproduces it
/// whenever the parts are commensurate with the observation.
pub fn separate_with_spectra(
    samples: &DMatrix<f64>,
    l_spec: &Spectrum,
    r_spec: &Spectrum,
) -> Result<CurveSeparation> {
    check_shared_grid(l_spec, r_spec)?;
    let k = l_spec.k();
    if samples.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("{k} columns"),
            got: format!("{}", samples.ncols()),
        });
    }
    let n = samples.nrows();
    let q = l_spec.effective_rank();
    let mut yhat = DMatrix::zeros(n, k);
    let mut what = DMatrix::zeros(n, k);
    let mut scores = DMatrix::zeros(n, q);
    for i in 0..n {
        let x = samples.row(i).transpose();
        let p = r_spec.pseudo_inverse_apply(&x, r_spec.cutoff())?;
        let s = scores_from_image(l_spec, &p);
        let y = expand_scores(l_spec, &s);
        for j in 0..k {
            // Round the smooth value onto the residual lattice, then take
            // the residual against the rounded value: what is x - yhat
            // exactly by construction.
            let y1 = x[j] - (x[j] - y[j]);
            yhat[(i, j)] = y1;
            what[(i, j)] = x[j] - y1;
        }
        for j in 0..q {
            scores[(i, j)] = s[j];
        }
    }
    Ok(CurveSeparation {
        yhat,
        what,
        scores,
        rhat: q,
    })
}

/// Separation against a fitted decomposition.
pub fn separate(samples: &SampleMatrix, decomp: &Decomposition) -> Result<CurveSeparation> {
    separate_with_spectra(samples.values(), &decomp.l_spectrum, &decomp.r_spectrum)
}

/// Reference smooth prediction computed from population covariances.
pub fn oracle_blp(
    x: &DVector<f64>,
    ltrue: &SymCov,
    rtrue: &SymCov,
) -> Result<DVector<f64>> {
    let l_spec = spectrum(ltrue, DEFAULT_CUTOFF)?;
    let r_spec = spectrum(rtrue, DEFAULT_CUTOFF)?;
    let scores = blp_scores(x, &l_spec, &r_spec)?;
    Ok(expand_scores(&l_spec, &scores))
}

/// Batch form of the population-reference prediction; the spectra are
/// decomposed once and shared across curves.
pub fn oracle_separation(
    samples: &DMatrix<f64>,
    ltrue: &SymCov,
    rtrue: &SymCov,
) -> Result<CurveSeparation> {
    let l_spec = spectrum(ltrue, DEFAULT_CUTOFF)?;
    let r_spec = spectrum(rtrue, DEFAULT_CUTOFF)?;
    separate_with_spectra(samples, &l_spec, &r_spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step_orthonormal(k: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<DVector<f64>> = Vec::new();
        while out.len() < count {
            let mut v = DVector::from_fn(k, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            for u in &out {
                let c = v.dot(u) / k as f64;
                v.axpy(-c, u, 1.0);
            }
            let norm = (v.dot(&v) / k as f64).sqrt();
            if norm > 1e-6 {
                v /= norm;
                out.push(v);
            }
        }
        out
    }

    fn low_rank(k: usize, parts: &[(f64, &DVector<f64>)]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(k, k);
        for (lam, v) in parts {
            for b in 0..k {
                for a in 0..k {
                    m[(a, b)] += lam * v[a] * v[b];
                }
            }
        }
        linalg::symmetrize(&mut m);
        m
    }

    #[test]
    fn pure_smooth_component_scores_one() {
        let k = 12;
        let vs = step_orthonormal(k, 2, 3);
        let l = SymCov::new(low_rank(k, &[(1.3, &vs[0]), (0.4, &vs[1])])).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = l_spec.clone();
        let s = blp_scores(&vs[0], &l_spec, &r_spec).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 1.0).abs() < 1e-10);
        assert!(s[1].abs() < 1e-10);
    }

    #[test]
    fn equal_covariances_project_onto_the_smooth_range() {
        let k = 15;
        let vs = step_orthonormal(k, 3, 9);
        let l = SymCov::new(low_rank(k, &[(2.0, &vs[0]), (1.0, &vs[1]), (0.5, &vs[2])]))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let pi = oracle_blp(&x, &l, &l).unwrap();
        let mut proj = DVector::zeros(k);
        for v in &vs {
            proj.axpy(v.dot(&x) / k as f64, v, 1.0);
        }
        assert!((&pi - &proj).amax() < 1e-10);
    }

    #[test]
    fn ridge_rough_part_shrinks_scores_in_closed_form() {
        let k = 12;
        let c = 0.21;
        let vs = step_orthonormal(k, 2, 5);
        let lams = [0.9, 0.3];
        let l = SymCov::new(low_rank(k, &[(lams[0], &vs[0]), (lams[1], &vs[1])])).unwrap();
        let r = SymCov::new(l.values() + DMatrix::identity(k, k) * (c * k as f64)).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = spectrum(&r, DEFAULT_CUTOFF).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let s = blp_scores(&x, &l_spec, &r_spec).unwrap();
        for j in 0..2 {
            let inner = vs[j].dot(&x) / k as f64;
            let expect = lams[j] / (lams[j] + c) * inner;
            // The fitted eigenvectors may be flipped relative to vs.
            assert!(
                (s[j].abs() - expect.abs()).abs() < 1e-8,
                "component {j}: {} vs {expect}",
                s[j]
            );
        }
    }

    #[test]
    fn zero_curve_has_zero_scores() {
        let k = 8;
        let vs = step_orthonormal(k, 1, 6);
        let l = SymCov::new(low_rank(k, &[(1.0, &vs[0])])).unwrap();
        let spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let s = blp_scores(&DVector::zeros(k), &spec, &spec).unwrap();
        assert_eq!(s.amax(), 0.0);
    }

    #[test]
    fn rank_zero_smooth_spectrum_gives_empty_scores() {
        let k = 6;
        let l = SymCov::new(DMatrix::zeros(k, k)).unwrap();
        let r = SymCov::new(DMatrix::identity(k, k)).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = spectrum(&r, DEFAULT_CUTOFF).unwrap();
        let x = DVector::from_element(k, 2.0);
        let s = blp_scores(&x, &l_spec, &r_spec).unwrap();
        assert_eq!(s.len(), 0);
        let sep = separate_with_spectra(&DMatrix::from_element(1, k, 2.0), &l_spec, &r_spec)
            .unwrap();
        assert_eq!(sep.rhat, 0);
        assert_eq!(sep.yhat.row(0).amax(), 0.0);
        assert_eq!(sep.what[(0, 0)], 2.0);
    }

    #[test]
    fn hand_two_by_two_orthogonal_case() {
        let phi = DVector::from_vec(vec![1.0, 1.0]);
        let psi = DVector::from_vec(vec![1.0, -1.0]);
        let l = SymCov::new(low_rank(2, &[(1.0, &phi)])).unwrap();
        let r = SymCov::new(low_rank(2, &[(1.0, &phi), (0.25, &psi)])).unwrap();
        let x = DVector::from_vec(vec![3.0, 1.0]);
        let pi = oracle_blp(&x, &l, &r).unwrap();
        assert!((pi[0] - 2.0).abs() < 1e-12);
        assert!((pi[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rough_part_is_exactly_the_residual() {
        let k = 10;
        let vs = step_orthonormal(k, 2, 8);
        let l = SymCov::new(low_rank(k, &[(1.1, &vs[0]), (0.6, &vs[1])])).unwrap();
        let r = SymCov::new(l.values() + DMatrix::identity(k, k) * 0.5).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = spectrum(&r, DEFAULT_CUTOFF).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples = DMatrix::from_fn(20, k, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal) * 3.0
        });
        let sep = separate_with_spectra(&samples, &l_spec, &r_spec).unwrap();
        assert_eq!(&samples - &sep.yhat, sep.what);
    }

    #[test]
    fn separation_adds_back_to_the_input_bit_for_bit() {
        // Curves drawn from the model itself, so the smooth estimate stays
        // commensurate with the observation at every point.
        let k = 10;
        let c = 0.09;
        let vs = step_orthonormal(k, 2, 8);
        let lams = [1.1, 0.6];
        let l = SymCov::new(low_rank(k, &[(lams[0], &vs[0]), (lams[1], &vs[1])])).unwrap();
        let r = SymCov::new(l.values() + DMatrix::identity(k, k) * c).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = spectrum(&r, DEFAULT_CUTOFF).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut samples = DMatrix::zeros(20, k);
        for i in 0..20 {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            for j in 0..k {
                let y = lams[0].sqrt() * z1 * vs[0][j] + lams[1].sqrt() * z2 * vs[1][j];
                samples[(i, j)] =
                    y + c.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        let sep = separate_with_spectra(&samples, &l_spec, &r_spec).unwrap();
        // Adding the parts is bit-exact wherever the smooth value does not
        // dominate the observation; a dominated observation has no
        // representable pair, so only those entries may differ, and then
        // only in the last bit.
        let mut obstructed = 0;
        for i in 0..20 {
            for j in 0..k {
                let x = samples[(i, j)];
                let sum = sep.yhat[(i, j)] + sep.what[(i, j)];
                if sum != x {
                    assert!(sep.yhat[(i, j)].abs() > x.abs(), "entry ({i},{j})");
                    assert!((sum - x).abs() <= f64::EPSILON * sep.yhat[(i, j)].abs());
                    obstructed += 1;
                }
            }
        }
        assert!(obstructed <= 2, "{obstructed} obstructed entries");
    }

    #[test]
    fn smooth_part_stays_in_the_smooth_span() {
        let k = 14;
        let vs = step_orthonormal(k, 2, 12);
        let l = SymCov::new(low_rank(k, &[(1.0, &vs[0]), (0.5, &vs[1])])).unwrap();
        let r = SymCov::new(l.values() + DMatrix::identity(k, k) * 0.3).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = spectrum(&r, DEFAULT_CUTOFF).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let sep =
            separate_with_spectra(&DMatrix::from_fn(1, k, |_, j| x[j]), &l_spec, &r_spec)
                .unwrap();
        let y = sep.yhat.row(0).transpose();
        let mut residual = y.clone();
        for v in &vs {
            let c = residual.dot(v) / k as f64;
            residual.axpy(-c, v, 1.0);
        }
        assert!(residual.norm() < 1e-10 * (1.0 + y.norm()));
    }

    #[test]
    fn oracle_beats_other_linear_predictors() {
        let k = 10;
        let n = 3000;
        let c = 0.09;
        let vs = step_orthonormal(k, 2, 23);
        let lams = [1.0, 0.25];
        let l = SymCov::new(low_rank(k, &[(lams[0], &vs[0]), (lams[1], &vs[1])])).unwrap();
        let r = SymCov::new(l.values() + DMatrix::identity(k, k) * c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut xs = DMatrix::zeros(n, k);
        let mut ys = DMatrix::zeros(n, k);
        for i in 0..n {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            for j in 0..k {
                let y = lams[0].sqrt() * z1 * vs[0][j] + lams[1].sqrt() * z2 * vs[1][j];
                let w = c.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
                ys[(i, j)] = y;
                xs[(i, j)] = y + w;
            }
        }
        let sep = oracle_separation(&xs, &l, &r).unwrap();
        let oracle_mse = (&sep.yhat - &ys).norm_squared() / n as f64;
        // Columns of the oracle map, to perturb around it.
        let mut blp_map = DMatrix::zeros(k, k);
        for j in 0..k {
            let e = DVector::from_fn(k, |i, _| if i == j { 1.0 } else { 0.0 });
            blp_map.set_column(j, &oracle_blp(&e, &l, &r).unwrap());
        }
        for trial in 0..10 {
            let candidate = if trial < 5 {
                DMatrix::from_fn(k, k, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.3
                })
            } else {
                &blp_map
                    + DMatrix::from_fn(k, k, |_, _| {
                        rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.1
                    })
            };
            let mut mse = 0.0;
            for i in 0..n {
                let pred = &candidate * xs.row(i).transpose();
                mse += (pred - ys.row(i).transpose()).norm_squared();
            }
            mse /= n as f64;
            assert!(
                oracle_mse < mse,
                "trial {trial}: oracle {oracle_mse} vs candidate {mse}"
            );
        }
    }

    #[test]
    fn estimated_pipeline_recovers_purely_smooth_curves() {
        let k = 16;
        let vs = step_orthonormal(k, 2, 31);
        let l = SymCov::new(low_rank(k, &[(1.2, &vs[0]), (0.5, &vs[1])])).unwrap();
        let d = crate::decompose::decompose(&l, &crate::decompose::DecomposeConfig::default())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut samples = DMatrix::zeros(4, k);
        for i in 0..4 {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            for j in 0..k {
                samples[(i, j)] = a * vs[0][j] + b * vs[1][j];
            }
        }
        let sep = separate(&SampleMatrix::new(samples.clone()).unwrap(), &d).unwrap();
        for i in 0..4 {
            let x = samples.row(i).transpose();
            let rel = (sep.yhat.row(i).transpose() - &x).norm() / x.norm();
            assert!(rel < 1e-6, "curve {i} relative error {rel}");
            assert!(sep.what.row(i).amax() < 1e-6 * x.amax());
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let l = SymCov::new(DMatrix::identity(4, 4)).unwrap();
        let r = SymCov::new(DMatrix::identity(5, 5)).unwrap();
        let l_spec = spectrum(&l, DEFAULT_CUTOFF).unwrap();
        let r_spec = spectrum(&r, DEFAULT_CUTOFF).unwrap();
        assert!(blp_scores(&DVector::zeros(4), &l_spec, &r_spec).is_err());
    }
}
