//! Spectral decomposition of covariance matrices in the step-kernel
//! convention: a K x K matrix M represents an integral operator on [0, 1]
//! whose eigenvalues are the matrix eigenvalues divided by K and whose
//! eigenfunctions are step functions normalized so (1/K) sum v_j^2 = 1.
//! Under that convention M = sum_j lambda_j v_j v_j', and the matrix
//! pseudo-inverse applied to a vector is sum_j v_j (v_j' x) / (K^2 lambda_j).

use nalgebra::{DMatrix, DVector};

use crate::covmodel::SymCov;
use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::linalg;

/// Default relative eigenvalue cutoff for the effective rank.
pub const DEFAULT_CUTOFF: f64 = 1e-10;

/// Full eigendecomposition of a covariance matrix, operator-scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    k: usize,
    /// Operator eigenvalues, descending; length K.
    eigenvalues: Vec<f64>,
    /// Step-normalized eigenvectors as columns, matching `eigenvalues`.
    vectors: DMatrix<f64>,
    /// Number of leading eigenvalues above cutoff * lambda_1.
    effective_rank: usize,
    cutoff: f64,
}

/// Decomposes M, scaling matrix eigenvalues by 1/K and eigenvectors by
/// sqrt(K). Signs are fixed so the entry of largest magnitude in each
/// eigenvector is positive, making reruns bit-identical.
pub fn spectrum(m: &SymCov, cutoff: f64) -> Result<Spectrum> {
    if !(cutoff >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cutoff {cutoff} must be nonnegative"
        )));
    }
    let k = m.k();
    let (raw_vals, raw_vecs) = linalg::sym_eigen_desc(m.values());
    let scale = (k as f64).sqrt();
    let eigenvalues: Vec<f64> = raw_vals.iter().map(|v| v / k as f64).collect();
    let mut vectors = raw_vecs;
    for j in 0..k {
        let mut arg = 0;
        let mut best = 0.0_f64;
        for i in 0..k {
            let a = vectors[(i, j)].abs();
            if a > best {
                best = a;
                arg = i;
            }
        }
        let sign = if vectors[(arg, j)] < 0.0 { -scale } else { scale };
        for i in 0..k {
            vectors[(i, j)] *= sign;
        }
    }
    let effective_rank = count_retained(&eigenvalues, cutoff);
    Ok(Spectrum {
        k,
        eigenvalues,
        vectors,
        effective_rank,
        cutoff,
    })
}

fn count_retained(eigenvalues: &[f64], cutoff: f64) -> usize {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    eigenvalues
        .iter()
        .take_while(|&&v| v > cutoff * top && v > 0.0)
        .count()
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Step-normalized eigenvector for component j: (1/K) ||v||^2 = 1.
    pub fn vector(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.vectors.column(j)
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Sum over components of lambda_j v_j v_j'; reproduces the input.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_leading(self.k)
    }

    /// Same sum truncated to the first `count` components.
    pub fn reconstruct_leading(&self, count: usize) -> DMatrix<f64> {
        let count = count.min(self.k);
        let mut m = DMatrix::zeros(self.k, self.k);
        for j in 0..count {
            let v = self.vectors.column(j);
            let lam = self.eigenvalues[j];
            for b in 0..self.k {
                for a in 0..self.k {
                    m[(a, b)] += lam * v[a] * v[b];
                }
            }
        }
        linalg::symmetrize(&mut m);
        m
    }

    /// Number of components the pseudo-inverse keeps at a given cutoff.
    pub fn retained(&self, rank_cutoff: f64) -> usize {
        count_retained(&self.eigenvalues, rank_cutoff)
    }

    /// Applies the matrix pseudo-inverse of the decomposed M to x, keeping
    /// components with lambda_j > rank_cutoff * lambda_1. When nothing is
    /// retained the result is the zero vector.
    pub fn pseudo_inverse_apply(&self, x: &DVector<f64>, rank_cutoff: f64) -> Result<DVector<f64>> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: format!("vector of length {}", self.k),
                got: format!("{}", x.len()),
            });
        }
        let kept = self.retained(rank_cutoff);
        let mut out = DVector::zeros(self.k);
        let kk = (self.k * self.k) as f64;
        for j in 0..kept {
            let v = self.vectors.column(j);
            let coeff = v.dot(x) / (kk * self.eigenvalues[j]);
            out.axpy(coeff, &v, 1.0);
        }
        Ok(out)
    }

    /// CSV export: first row the eigenvalues, then K rows of eigenvector
    /// values with one column per component.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (j, v) in self.eigenvalues.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
        for i in 0..self.k {
            for j in 0..self.k {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format_f64(self.vectors[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}
