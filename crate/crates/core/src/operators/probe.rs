use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::Model;
use crate::error::{check_states, Error, Result};
use crate::functions::{weighted_gram, DenseFunction};
use crate::linalg::{orthonormalizer, sym_spectral_radius, GRAM_CUTOFF};
use crate::tensor::{digits, kron, permute_axes};

/// Measured contraction of `D_u(fg)` on `T_K(u)`, by height.
#[derive(Clone, Debug, Serialize)]
pub struct DecayProbeReport {
    pub q: usize,
    pub lambda: f64,
    pub k: usize,
    /// `(h, δ(h))`, ascending in h.
    pub per_height: Vec<(usize, f64)>,
    /// Least-squares slope of `ln δ` against h.
    pub fitted_rate: f64,
    /// Smallest probed h with `δ(h) ≤ 1`.
    pub h_k_empirical: Option<usize>,
}

/// `max_θ ‖Qᵀ diag(row_θ − p) Q‖₂` for an orthonormal family Q (columns as vectors).
fn worst_bilinear(q_vecs: &[Vec<f64>], rows: &[Vec<f64>], p: &[f64]) -> f64 {
    let r = q_vecs.len();
    rows.par_iter()
        .map(|row| {
            let w: Vec<f64> = row.iter().zip(p).map(|(a, b)| a - b).collect();
            let weighted: Vec<Vec<f64>> = q_vecs.iter().map(|v| v.iter().zip(&w).map(|(a, b)| a * b).collect()).collect();
            let mut a = DMatrix::zeros(r, r);
            for i in 0..r {
                for j in 0..=i {
                    let x = crate::tensor::dot(&weighted[i], &q_vecs[j]);
                    a[(i, j)] = x;
                    a[(j, i)] = x;
                }
            }
            sym_spectral_radius(&a)
        })
        .reduce(|| 0.0, f64::max)
}

fn orthonormal(vectors: &[DenseFunction], p: &[f64]) -> Vec<Vec<f64>> {
    let g = weighted_gram(vectors, p);
    let c = orthonormalizer(&g, GRAM_CUTOFF);
    (0..c.ncols())
        .map(|j| {
            let mut out = vec![0.0; p.len()];
            for (i, v) in vectors.iter().enumerate() {
                let ci = c[(i, j)];
                if ci != 0.0 {
                    out.iter_mut().zip(&v.values).for_each(|(o, x)| *o += ci * x);
                }
            }
            out
        })
        .collect()
}

/// `δ(u)`: largest `|D_u(fg)(θ)|` over `f, g ∈ T_K(u)` of unit `E_u`-norm.
pub fn vertex_delta(model: &Model, u: usize, kk: usize) -> Result<f64> {
    let proj = model.projector(u, kk)?;
    let law = &proj.law;
    let qv = proj.orthonormal_basis();
    let rows: Vec<Vec<f64>> = (0..model.q()).map(|th| law.row(th).to_vec()).collect();
    Ok(worst_bilinear(&qv, &rows, &law.law))
}

pub fn decay_probe(model: &Model, kk: usize, heights: &[usize]) -> Result<DecayProbeReport> {
    let mut hs = heights.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let mut per_height = Vec::new();
    for &h in &hs {
        let vs = model.tree.at_height(h);
        if vs.is_empty() {
            return Err(Error::TooShallow(0, h));
        }
        let mut best = 0.0_f64;
        for v in vs {
            best = best.max(vertex_delta(model, v, kk)?);
        }
        per_height.push((h, best));
    }
    let pts: Vec<(f64, f64)> = per_height.iter().filter(|(_, d)| *d > 0.0).map(|&(h, d)| (h as f64, d.ln())).collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let h_k_empirical = per_height.iter().find(|(_, d)| *d <= 1.0).map(|x| x.0);
    Ok(DecayProbeReport { q: model.q(), lambda: model.chain.lambda, k: kk, per_height, fitted_rate, h_k_empirical })
}

/// Measured `c = max_{x_A} sup |Ê_A[fg](x_A) − E_A[fg]|` over `f, g` in the
/// span of `w` with unit `E_A`-norm; `w` lives on the leaves of the antichain.
pub fn contraction_constant(model: &Model, a: &[usize], w: &[DenseFunction]) -> Result<f64> {
    let mut a = a.to_vec();
    a.sort_unstable();
    model.tree.is_antichain(&a)?;
    let q = model.q();
    let (axes, p) = model.product_law(&a)?;
    if w.iter().any(|f| f.domain != axes) {
        return Err(Error::DomainMismatch("subspace must live on the antichain's leaves".into()));
    }
    let nconf = check_states(q, a.len(), "antichain states")?;
    let laws = a.iter().map(|&v| model.vertex_law(v)).collect::<Result<Vec<_>>>()?;
    let mut cat = Vec::new();
    for l in &laws {
        cat.extend(&l.leaves);
    }
    let rows: Vec<Vec<f64>> = (0..nconf)
        .map(|idx| {
            let x = digits(idx, q, a.len());
            let mut row = vec![1.0];
            for (l, &s) in laws.iter().zip(&x) {
                row = kron(&row, l.row(s));
            }
            permute_axes(&row, q, &cat, &axes)
        })
        .collect();
    let qv = orthonormal(w, &p);
    Ok(worst_bilinear(&qv, &rows, &p))
}
