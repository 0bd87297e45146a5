//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalue cutoff separating the radical of a PSD form.
pub const GRAM_CUTOFF: f64 = 1e-10;

/// Spectral pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// `cutoff · max(1, λ_max)` are treated as zero. Returns `(G⁺, rank)`.
pub fn sym_pinv(g: &DMatrix<f64>, cutoff: f64) -> (DMatrix<f64>, usize) {
    let n = g.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, &x| m.max(x));
    let thr = cutoff * top.max(1.0);
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > thr {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / l;
        }
    }
    (out, rank)
}

/// Coefficient matrix `C` (n × r) such that the vectors `B C` are orthonormal
/// for the PSD form with Gram `g` (radical directions dropped).
pub fn orthonormalizer(g: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let n = g.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, &x| m.max(x));
    let thr = cutoff * top.max(1.0);
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > thr).collect();
    let mut c = DMatrix::zeros(n, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        c.set_column(j, &(eig.eigenvectors.column(k) / s));
    }
    c
}

/// Largest eigenvalue modulus of a symmetric matrix.
pub fn sym_spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Removes from `v` its components along the orthonormal family `ortho`
/// (two passes, for stability).
fn strip(v: &mut [f64], ortho: &[Vec<f64>]) {
    for _ in 0..2 {
        for o in ortho {
            let c: f64 = v.iter().zip(o).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(o).for_each(|(a, b)| *a -= c * b);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Greedy Gram–Schmidt in the given order: a vector is kept when its
/// residual against the kept ones exceeds `tol` relative to its own norm.
/// Returns the kept indices and the orthonormalized kept vectors.
fn greedy_orthonormal(vectors: &[Vec<f64>], tol: f64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let n0 = norm(v);
        if n0 == 0.0 {
            continue;
        }
        let mut r = v.clone();
        strip(&mut r, &ortho);
        let rn = norm(&r);
        if rn > tol * n0 {
            r.iter_mut().for_each(|x| *x /= rn);
            ortho.push(r);
            kept.push(i);
        }
    }
    (kept, ortho)
}

/// Greedy selection of linearly independent vectors in the given order.
pub fn greedy_independent(vectors: &[Vec<f64>], tol: f64) -> Vec<usize> {
    greedy_orthonormal(vectors, tol).0
}

/// Least-squares residual `min_c ‖A c − b‖₂` where the columns of A are
/// `cols`; numerically dependent columns are dropped.
pub fn lstsq_residual(cols: &[Vec<f64>], b: &[f64]) -> f64 {
    let (_, ortho) = greedy_orthonormal(cols, 1e-10);
    let mut r = b.to_vec();
    strip(&mut r, &ortho);
    norm(&r)
}

/// Orthonormal q × q matrix whose first row is the normalized constant.
pub fn anova_transform(q: usize) -> DMatrix<f64> {
    let mut a = DMatrix::identity(q, q);
    for i in 0..q {
        a[(i, 0)] = 1.0;
    }
    let qr = a.qr();
    let mut qm = qr.q();
    if qm[(0, 0)] < 0.0 {
        qm.column_mut(0).neg_mut();
    }
    qm.transpose()
}
