use std::sync::Arc;

use super::{LinearMapMatrix, Model, VertexLaw};
use crate::error::{Error, Result};
use crate::functions::{tk_basis, weighted_gram, DenseFunction, SubspaceBasis};
use crate::linalg::{orthonormalizer, sym_pinv, GRAM_CUTOFF};
use crate::tensor::apply_block;
use crate::tree::RootedTree;
use crate::chain::TransitionChain;

/// `Π_{u,K}`: the minimal-norm map onto `T_K(u)` that reproduces every
/// `E_u`-inner product against `T_K(u)`.
#[derive(Debug)]
pub struct Projector {
    pub u: usize,
    pub k: usize,
    pub basis: SubspaceBasis,
    pub law: Arc<VertexLaw>,
    /// Rows of `G⁺ Bᵀ diag(p)`.
    coef: Vec<Vec<f64>>,
    pub rank: usize,
}

fn solve_rows(basis: &SubspaceBasis, p: &[f64]) -> (Vec<Vec<f64>>, usize) {
    let g = weighted_gram(&basis.vectors, p);
    let (gp, rank) = sym_pinv(&g, GRAM_CUTOFF);
    let weighted: Vec<Vec<f64>> = basis
        .vectors
        .iter()
        .map(|b| b.values.iter().zip(p).map(|(x, w)| x * w).collect())
        .collect();
    let r = basis.vectors.len();
    let n = p.len();
    let coef = (0..r)
        .map(|i| {
            let mut row = vec![0.0; n];
            for (j, wj) in weighted.iter().enumerate() {
                let c = gp[(i, j)];
                if c != 0.0 {
                    row.iter_mut().zip(wj).for_each(|(a, b)| *a += c * b);
                }
            }
            row
        })
        .collect();
    (coef, rank)
}

fn combine(basis: &SubspaceBasis, c: &[f64]) -> Vec<f64> {
    let n = basis.vectors.first().map_or(0, |b| b.values.len());
    let mut out = vec![0.0; n];
    for (b, &ci) in basis.vectors.iter().zip(c) {
        if ci != 0.0 {
            out.iter_mut().zip(&b.values).for_each(|(o, x)| *o += ci * x);
        }
    }
    out
}

impl Projector {
    pub fn new(model: &Model, u: usize, k: usize) -> Result<Self> {
        let law = model.vertex_law(u)?;
        let basis = tk_basis(model.tree, model.q(), u, k, Some(&law.law))?;
        let (coef, rank) = solve_rows(&basis, &law.law);
        Ok(Projector { u, k, basis, law, coef, rank })
    }

    pub fn domain(&self) -> &[usize] {
        &self.law.leaves
    }

    /// Basis coefficients of `Π f`.
    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        self.coef.iter().map(|row| crate::tensor::dot(row, f)).collect()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        combine(&self.basis, &self.coefficients(f))
    }

    /// `f − Π f`.
    pub fn complement(&self, f: &[f64]) -> Vec<f64> {
        let p = self.apply(f);
        f.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// `(I − Π)` applied along the block `L_u` of a function on `domain`.
    pub fn complement_on(&self, f: &DenseFunction) -> DenseFunction {
        let (dom, values) = apply_block(&f.values, f.q, &f.domain, self.domain(), self.domain(), |s| self.complement(s));
        DenseFunction { q: f.q, domain: dom, values }
    }

    /// `E_u`-orthonormal basis of `T_K(u)` (radical removed), as dense vectors.
    pub fn orthonormal_basis(&self) -> Vec<Vec<f64>> {
        let g = weighted_gram(&self.basis.vectors, &self.law.law);
        let c = orthonormalizer(&g, GRAM_CUTOFF);
        (0..c.ncols())
            .map(|j| combine(&self.basis, &c.column(j).iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    pub fn matrix(&self) -> Result<LinearMapMatrix> {
        let n = self.law.law.len();
        super::check_entries(n, n)?;
        let mut e = vec![0.0; n * n];
        for (b, row) in self.basis.vectors.iter().zip(&self.coef) {
            for x in 0..n {
                let bx = b.values[x];
                if bx != 0.0 {
                    e[x * n..(x + 1) * n].iter_mut().zip(row).for_each(|(a, c)| *a += bx * c);
                }
            }
        }
        LinearMapMatrix::new(self.basis.q, self.law.leaves.clone(), self.law.leaves.clone(), e)
    }
}

/// Per-root-state projections `Γ_{u,θ}` and their assembly `P_T`.
#[derive(Debug)]
pub struct StrongProjector {
    pub u: usize,
    pub k: usize,
    pub basis: SubspaceBasis,
    pub law: Arc<VertexLaw>,
    coef: Vec<Vec<Vec<f64>>>,
}

impl StrongProjector {
    pub fn new(model: &Model, u: usize, k: usize) -> Result<Self> {
        let law = model.vertex_law(u)?;
        let basis = tk_basis(model.tree, model.q(), u, k, Some(&law.law))?;
        let coef = (0..model.q()).map(|th| solve_rows(&basis, law.row(th)).0).collect();
        Ok(StrongProjector { u, k, basis, law, coef })
    }

    pub fn gamma(&self, th: usize, f: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = self.coef[th].iter().map(|row| crate::tensor::dot(row, f)).collect();
        combine(&self.basis, &c)
    }

    /// `P_T f` as a table on `{u} ∪ L_u` (u is the first axis).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.coef.len()).flat_map(|th| self.gamma(th, f)).collect()
    }

    pub fn output_domain(&self) -> Vec<usize> {
        let mut d = vec![self.u];
        d.extend(&self.law.leaves);
        d
    }

    pub fn matrix(&self) -> Result<LinearMapMatrix> {
        let q = self.basis.q;
        let n = self.law.law.len();
        super::check_entries(q * n, n)?;
        let mut e = vec![0.0; q * n * n];
        for th in 0..q {
            for (b, row) in self.basis.vectors.iter().zip(&self.coef[th]) {
                for x in 0..n {
                    let bx = b.values[x];
                    if bx != 0.0 {
                        let r = th * n + x;
                        e[r * n..(r + 1) * n].iter_mut().zip(row).for_each(|(a, c)| *a += bx * c);
                    }
                }
            }
        }
        LinearMapMatrix::new(q, self.law.leaves.clone(), self.output_domain(), e)
    }
}

pub fn projection_pi(tree: &RootedTree, chain: &TransitionChain, u: usize, k: usize) -> Result<LinearMapMatrix> {
    Projector::new(&Model::new(tree, chain), u, k)?.matrix()
}

pub fn strong_projection_pt(tree: &RootedTree, chain: &TransitionChain, u: usize, k: usize) -> Result<LinearMapMatrix> {
    StrongProjector::new(&Model::new(tree, chain), u, k)?.matrix()
}

fn dm_members(model: &Model, u: usize, m: usize) -> Result<Vec<usize>> {
    let dm = model.tree.dm_set(u, m)?;
    if model.tree.height[u] <= m {
        // P_T at a leaf would need two copies of the same variable.
        return Err(Error::TooShallow(u, m + 1));
    }
    Ok(dm)
}

/// `P_{D_m(u)} f = (⊗_{v ∈ D_m(u)} P_T v) f` on `D_m(u) ∪ L_u`.
pub fn p_dm_apply(model: &Model, u: usize, m: usize, k: usize, f: &DenseFunction) -> Result<DenseFunction> {
    let dm = dm_members(model, u, m)?;
    crate::error::check_states(model.q(), dm.len() + model.tree.leaves_under(u).len(), "P_Dm output")?;
    if f.domain != model.tree.leaves_under(u) {
        return Err(Error::DomainMismatch("P_Dm expects a function of L_u".into()));
    }
    let mut cur = f.clone();
    for &v in &dm {
        let sp = StrongProjector::new(model, v, k)?;
        let (dom, values) = apply_block(&cur.values, cur.q, &cur.domain, &sp.law.leaves, &sp.output_domain(), |s| sp.apply(s));
        cur = DenseFunction { q: cur.q, domain: dom, values };
    }
    Ok(cur)
}

pub fn p_dm_operator(tree: &RootedTree, chain: &TransitionChain, u: usize, m: usize, k: usize) -> Result<LinearMapMatrix> {
    let model = Model::new(tree, chain);
    let dm = dm_members(&model, u, m)?;
    let factors = dm
        .iter()
        .map(|&v| StrongProjector::new(&model, v, k)?.matrix())
        .collect::<Result<Vec<_>>>()?;
    LinearMapMatrix::kron_all(chain.q, &factors)
}
