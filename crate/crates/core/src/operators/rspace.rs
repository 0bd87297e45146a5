use super::Model;
use crate::error::Result;
use crate::functions::{tensor_identify, tk_basis, weighted_gram, DenseFunction, SubspaceBasis};
use crate::linalg::{greedy_independent, sym_pinv, GRAM_CUTOFF};

/// `Ψ_k = (I − Π_{anc(u,k)}) ∘ … ∘ (I − Π_u)`, each factor acting on its own
/// leaf block of `f` (identity on the remaining coordinates).
pub fn psi_apply(model: &Model, u: usize, k: usize, kk: usize, f: &DenseFunction) -> Result<DenseFunction> {
    let mut cur = f.clone();
    for j in 0..=k {
        let a = model.tree.anc(u, j)?;
        cur = model.projector(a, kk)?.complement_on(&cur);
    }
    Ok(cur)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Keep the numerically nonzero images, then reduce to an independent set.
fn reduce(images: Vec<(f64, DenseFunction)>) -> Vec<DenseFunction> {
    let nonzero: Vec<DenseFunction> = images
        .into_iter()
        .filter(|(pre, img)| norm2(&img.values) > 1e-9 * pre.max(1e-300))
        .map(|(_, img)| img)
        .collect();
    let raw: Vec<Vec<f64>> = nonzero.iter().map(|f| f.values.clone()).collect();
    greedy_independent(&raw, 1e-10).into_iter().map(|i| nonzero[i].clone()).collect()
}

/// Spanning set of `ℛ(W; k)` on `L_{anc(u,k)}`:
/// `ℛ(W;0) = (I − Π_u) W`, `ℛ(W;j) = (I − Π_{anc(u,j)})(ℛ(W;j−1) ⊗ 𝒯𝒯(u, j−1))`.
pub fn r_space_basis(model: &Model, u: usize, w: &SubspaceBasis, k: usize, kk: usize) -> Result<SubspaceBasis> {
    let q = model.q();
    let tree = model.tree;
    let top = tree.anc(u, k)?;
    let pu = model.projector(u, kk)?;
    let mut cur = reduce(
        w.vectors
            .iter()
            .map(|v| (norm2(&v.values), DenseFunction { q, domain: v.domain.clone(), values: pu.complement(&v.values) }))
            .collect(),
    );
    for j in 1..=k {
        let a = tree.anc(u, j)?;
        let pa = model.projector(a, kk)?;
        let others = tree.o_set(u, j as i64 - 1)?;
        let factor_bases = others
            .iter()
            .map(|&o| tk_basis(tree, q, o, kk, None).map(|b| b.vectors))
            .collect::<Result<Vec<_>>>()?;
        let mut images = Vec::new();
        for r in &cur {
            let mut partial = vec![r.clone()];
            for fb in &factor_bases {
                let mut next = Vec::with_capacity(partial.len() * fb.len());
                for p in &partial {
                    for b in fb {
                        next.push(tensor_identify(&[p.clone(), b.clone()])?);
                    }
                }
                partial = next;
            }
            for p in partial {
                let pre = norm2(&p.values);
                let img = pa.complement(&p.values);
                images.push((pre, DenseFunction { q, domain: p.domain, values: img }));
            }
        }
        cur = reduce(images);
    }
    let law = model.vertex_law(top)?;
    let gram_rank = if cur.is_empty() { 0 } else { sym_pinv(&weighted_gram(&cur, &law.law), GRAM_CUTOFF).1 };
    Ok(SubspaceBasis { q, domain: law.leaves.clone(), vectors: cur, gram_rank })
}
