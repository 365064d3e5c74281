//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Returns `(values, vectors)` where column `j` of `vectors` is the unit
/// eigenvector for `values[j]`. Input must be symmetric; only the actual
/// entries are used, no symmetrization is applied here.
pub(crate) fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let k = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps tied eigenvalues in a deterministic order.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Frobenius norm of the entrywise difference of two equally sized matrices.
pub(crate) fn frob_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// Forces exact symmetry by averaging mirrored entries in place.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for j in 0..k {
        for i in (j + 1)..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
