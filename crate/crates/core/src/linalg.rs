//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{ComplexField, DMatrix, DMatrixView, DVector, SymmetricEigen};

use crate::C64;

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    sort_eigen(eig.eigenvalues.as_slice(), eig.eigenvectors)
}

/// Eigen-decomposition of a real symmetric matrix; eigenvalues ascending.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    sort_eigen(eig.eigenvalues.as_slice(), eig.eigenvectors)
}

fn sort_eigen<T: nalgebra::Scalar + Copy>(
    values: &[f64],
    vectors: DMatrix<T>,
) -> (Vec<f64>, DMatrix<T>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let cols: Vec<_> = order
        .iter()
        .map(|&i| vectors.column(i).into_owned())
        .collect();
    (sorted, DMatrix::from_columns(&cols))
}

/// (A + A†)/2.
pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

/// Euclidean projection of `values` onto the simplex {v ≥ 0, Σv = total}.
pub fn project_simplex(values: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - total) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    values.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Nearest unit-trace positive semidefinite matrix in Frobenius norm.
pub fn project_density(m: &DMatrix<C64>) -> DMatrix<C64> {
    let (values, vectors) = hermitian_eigen(m);
    let clipped = project_simplex(&values, 1.0);
    reassemble(&clipped, &vectors)
}

/// V diag(λ) V†, Hermitian by construction.
pub fn reassemble(values: &[f64], vectors: &DMatrix<C64>) -> DMatrix<C64> {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let out = scaled * vectors.adjoint();
    debug_assert_eq!(out.nrows(), n);
    hermitian_part(&out)
}

/// Principal square root of a PSD matrix. Eigenvalues in `[-tol, 0)` are
/// clipped to zero; anything more negative is reported back as `Err(λ_min)`.
pub fn psd_sqrt(m: &DMatrix<C64>, tol: f64) -> std::result::Result<DMatrix<C64>, f64> {
    let (values, vectors) = hermitian_eigen(m);
    if let Some(&min) = values.first() {
        if min < -tol {
            return Err(min);
        }
    }
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(reassemble(&roots, &vectors))
}

/// Applies `a` along axis `mode` of a row-major tensor with the given shape.
/// The result has `shape[mode]` replaced by `a.nrows()`.
pub fn mode_product<T>(data: &[T], shape: &[usize], mode: usize, a: &DMatrix<T>) -> Vec<T>
where
    T: ComplexField + Copy,
{
    let nk = shape[mode];
    assert_eq!(a.ncols(), nk, "mode size mismatch");
    let outer: usize = shape[..mode].iter().product();
    let inner: usize = shape[mode + 1..].iter().product();
    assert_eq!(data.len(), outer * nk * inner);
    let m = a.nrows();
    let at = a.transpose();
    let mut out = Vec::with_capacity(outer * m * inner);
    if inner == 1 {
        // rows of an (outer × nk) row-major block are columns of its column-major view
        let x = DMatrixView::from_slice(data, nk, outer);
        let y = a * x;
        // y is m × outer column-major == outer × m row-major
        out.extend_from_slice(y.as_slice());
        return out;
    }
    for o in 0..outer {
        let block = &data[o * nk * inner..(o + 1) * nk * inner];
        let x = DMatrixView::from_slice(block, inner, nk);
        let y = x * &at;
        out.extend_from_slice(y.as_slice());
    }
    out
}

/// Repeated Kronecker product `m ⊗ m ⊗ …` (n factors).
pub fn kron_power(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for _ in 1..n {
        out = out.kronecker(m);
    }
    out
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn largest_eigenvalue(g: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * (i % 7) as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = g * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub fn frobenius_max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
