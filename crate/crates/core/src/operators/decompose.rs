use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use super::rspace::psi_apply;
use super::Model;
use crate::error::{check_states, Error, Result};
use crate::functions::{to_dense, DenseFunction, EsPolynomial, LocalFunction, SupportFamily};
use crate::tensor::lift;

/// Per-component membership diagnostics, all relative to `‖f‖_max`.
#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub u: usize,
    pub layer: i64,
    /// Distance from the admissible support family of the component's space.
    pub support: f64,
    /// `‖Π_{ρ′} f_u‖_{ρ′}`: failure of orthogonality to `T_K(ρ′)`.
    pub orthogonality: f64,
    /// `‖Ψ(f_u) − f_u‖_{ρ′}`: failure to be a fixed point of the R-map.
    pub fixed_point: f64,
    /// Distance of the part passed upward from `T_K(u) ⊗ 𝒯𝒯(u, ·)`.
    pub carry: f64,
}

impl MembershipReport {
    pub fn max(&self) -> f64 {
        self.support.max(self.orthogonality).max(self.fixed_point).max(self.carry)
    }
}

/// Layered decomposition `f = Σ_u f_u` below a base vertex.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionResult {
    pub base_vertex: usize,
    pub k: usize,
    pub h_probe: usize,
    pub domain: Vec<usize>,
    pub components: BTreeMap<usize, DenseFunction>,
    pub layer_index: BTreeMap<usize, i64>,
    /// `‖Σ f_u − f‖_max`.
    pub residual: f64,
    pub membership: Vec<MembershipReport>,
}

impl DecompositionResult {
    pub fn max_membership_residual(&self) -> f64 {
        self.membership.iter().fold(0.0, |m, r| m.max(r.max()))
    }
}

impl Serialize for DenseFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("DenseFunction", 2)?;
        st.serialize_field("domain", &self.domain)?;
        st.serialize_field("values", &self.values)?;
        st.end()
    }
}

/// Split `f` (degree ≤ 2^{K+1}, supported on `L_{ρ′}`) into components
/// indexed by vertices whose relative height `h(u) − h_probe` is ≥ 0.
///
/// Each term goes to its pivot vertex; pivots at or below the probe height
/// are merged into their ancestor on the bottom layer. Layer by layer, a
/// bucket `φ_u` is replaced by `Ψ(φ_u)` (projecting out low-degree parts at
/// `u` and each ancestor up to `ρ′`) and the remainder is handed to the parent.
pub fn decompose_f(model: &Model, rho_prime: usize, kk: usize, f: &EsPolynomial, h_probe: usize) -> Result<DecompositionResult> {
    let tree = model.tree;
    let q = model.q();
    tree.check_vertex(rho_prime)?;
    let h_top = tree.height[rho_prime];
    if h_top < h_probe {
        return Err(Error::TooShallow(rho_prime, h_probe));
    }
    let k_top = (h_top - h_probe) as i64;
    let domain = tree.leaves_under(rho_prime).to_vec();
    check_states(q, domain.len(), "decomposition domain")?;
    let small = 1usize << kk;
    let rel = |v: usize| tree.height[v] as i64 - h_probe as i64;

    let mut vertices: Vec<usize> = tree.subtree(rho_prime).into_iter().filter(|&v| rel(v) >= 0).collect();
    vertices.sort_unstable();
    let mut buckets: BTreeMap<usize, DenseFunction> =
        vertices.iter().map(|&v| (v, DenseFunction::constant(q, &domain, 0.0))).collect();

    for t in &f.terms {
        if t.support.len() > 2 * small {
            return Err(Error::DegreeTooHigh(t.support.len(), 2 * small));
        }
        let p = if t.support.is_empty() { rho_prime } else { tree.pivot_vertex(&t.support, rho_prime, kk)? };
        let target = if tree.height[p] <= h_probe { tree.anc(p, h_probe - tree.height[p])? } else { p };
        if k_top == 0 && t.support.len() > small && p != rho_prime {
            return Err(Error::DegreeTooHigh(t.support.len(), small));
        }
        let b = buckets.get_mut(&target).expect("target is indexed");
        let l = lift(&t.table, q, &t.support, &domain);
        b.values.iter_mut().zip(&l).for_each(|(a, x)| *a += x);
    }

    let mut components: BTreeMap<usize, DenseFunction> = BTreeMap::new();
    let mut carries: BTreeMap<usize, DenseFunction> = BTreeMap::new();
    for layer in 0..k_top {
        let members: Vec<usize> = vertices.iter().copied().filter(|&v| rel(v) == layer).collect();
        let k = (k_top - layer) as usize;
        let done = members
            .par_iter()
            .map(|&u| {
                let phi = &buckets[&u];
                let fu = if phi.is_zero() { phi.clone() } else { psi_apply(model, u, k, kk, phi)? };
                let carry = phi.sub(&fu);
                Ok((u, fu, carry))
            })
            .collect::<Result<Vec<_>>>()?;
        for (u, fu, carry) in done {
            let parent = tree.parent[u].expect("below the base vertex");
            buckets.get_mut(&parent).unwrap().axpy(1.0, &carry);
            components.insert(u, fu);
            carries.insert(u, carry);
        }
    }
    components.insert(rho_prime, buckets.remove(&rho_prime).unwrap());

    let dense_f = to_dense(f, &domain)?;
    let mut total = DenseFunction::constant(q, &domain, 0.0);
    for c in components.values() {
        total.axpy(1.0, c);
    }
    let residual = total.sub(&dense_f).max_norm();
    let scale = if dense_f.max_norm() > 0.0 { dense_f.max_norm() } else { 1.0 };

    let top_law = model.vertex_law(rho_prime)?;
    let top_basis = model.projector(rho_prime, kk)?.orthonormal_basis();
    let e_norm = |g: &DenseFunction| -> f64 {
        g.values.iter().zip(&top_law.law).map(|(x, p)| p * x * x).sum::<f64>().max(0.0).sqrt()
    };
    let mut membership = Vec::new();
    for (&u, fu) in &components {
        let layer = rel(u);
        if u == rho_prime {
            let fam = SupportFamily::tensor_tk(tree, &tree.children[u], kk);
            let fam = if tree.children[u].is_empty() { SupportFamily::new().block(domain.clone(), small) } else { fam };
            membership.push(MembershipReport {
                u,
                layer,
                support: fam.abs_residual(fu) / scale,
                orthogonality: 0.0,
                fixed_point: 0.0,
                carry: 0.0,
            });
            continue;
        }
        let k = (k_top - layer) as usize;
        let upper = tree.o_range(u, 0, k as i64 - 1)?;
        let own = if layer == 0 {
            SupportFamily::new().block(tree.leaves_under(u).to_vec(), 2 * small)
        } else {
            SupportFamily::tensor_tk(tree, &tree.children[u], kk)
        };
        let mut fam = own;
        let mut carry_fam = SupportFamily::new().block(tree.leaves_under(u).to_vec(), small);
        for &w in &upper {
            fam = fam.block(tree.leaves_under(w).to_vec(), small);
            carry_fam = carry_fam.block(tree.leaves_under(w).to_vec(), small);
        }
        let weighted: Vec<f64> = fu.values.iter().zip(&top_law.law).map(|(a, b)| a * b).collect();
        let orth = top_basis.iter().map(|b| crate::tensor::dot(b, &weighted).powi(2)).sum::<f64>().sqrt();
        let fixed = if fu.is_zero() { 0.0 } else { e_norm(&psi_apply(model, u, k, kk, fu)?.sub(fu)) };
        membership.push(MembershipReport {
            u,
            layer,
            support: fam.abs_residual(fu) / scale,
            orthogonality: orth / scale,
            fixed_point: fixed / scale,
            carry: carry_fam.abs_residual(&carries[&u]) / scale,
        });
    }
    let layer_index = components.keys().map(|&u| (u, rel(u))).collect();
    Ok(DecompositionResult { base_vertex: rho_prime, k: kk, h_probe, domain, components, layer_index, residual, membership })
}

/// One `(u, v)` cell of a pairwise correlation table.
#[derive(Clone, Debug, Serialize)]
pub struct PairwiseEntry {
    pub u: usize,
    pub v: usize,
    pub k_u: i64,
    pub k_v: i64,
    pub k_w: i64,
    /// `|E_{ρ′}[f_u g_v]|`.
    pub e_abs: f64,
    /// `max_θ |D_{ρ′}[f_u g_v](θ)|`.
    pub d_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairwiseReport {
    pub base_vertex: usize,
    pub entries: Vec<PairwiseEntry>,
    /// Largest violation of `|E f_u g_v| ≤ ‖f_u‖ ‖g_v‖`.
    pub cauchy_schwarz_excess: f64,
}

impl PairwiseReport {
    pub fn get(&self, u: usize, v: usize) -> Option<&PairwiseEntry> {
        self.entries.iter().find(|e| e.u == u && e.v == v)
    }
}

/// Correlation tables between components of two decompositions over the
/// same base vertex (pass the same one twice for `(f, f)`).
pub fn pairwise_report(model: &Model, f: &DecompositionResult, g: &DecompositionResult) -> Result<PairwiseReport> {
    if f.base_vertex != g.base_vertex || f.domain != g.domain {
        return Err(Error::DomainMismatch("decompositions have different base vertices".into()));
    }
    let tree = model.tree;
    let rho = f.base_vertex;
    let law = model.vertex_law(rho)?;
    let q = model.q();
    let rel = |v: usize| tree.height[v] as i64 - f.h_probe as i64;
    let norm = |h: &DenseFunction| h.values.iter().zip(&law.law).map(|(x, p)| p * x * x).sum::<f64>().max(0.0).sqrt();
    let pairs: Vec<(usize, usize)> =
        f.components.keys().flat_map(|&u| g.components.keys().map(move |&v| (u, v))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(u, v)| {
            let a = &f.components[&u];
            let b = &g.components[&v];
            let prod: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
            let e: f64 = crate::tensor::dot(&prod, &law.law);
            let mut d_max = 0.0_f64;
            for th in 0..q {
                d_max = d_max.max((crate::tensor::dot(&prod, law.row(th)) - e).abs());
            }
            let w = tree.nearest_common_ancestor(u, v);
            let excess = (e.abs() - norm(a) * norm(b)).max(0.0);
            (PairwiseEntry { u, v, k_u: rel(u), k_v: rel(v), k_w: rel(w), e_abs: e.abs(), d_max }, excess)
        })
        .collect::<Vec<_>>();
    let cauchy_schwarz_excess = rows.iter().fold(0.0_f64, |m, r| m.max(r.1));
    Ok(PairwiseReport { base_vertex: rho, entries: rows.into_iter().map(|r| r.0).collect(), cauchy_schwarz_excess })
}

/// Random polynomial of degree ≤ `deg` on the given leaves (test support).
pub fn random_polynomial<R: rand::Rng>(rng: &mut R, q: usize, leaves: &[usize], deg: usize, terms: usize) -> EsPolynomial {
    let mut out = Vec::with_capacity(terms);
    for _ in 0..terms {
        let size = rng.gen_range(0..=deg.min(leaves.len()));
        let mut s: Vec<usize> = rand::seq::index::sample(rng, leaves.len(), size).into_iter().map(|i| leaves[i]).collect();
        s.sort_unstable();
        let table = (0..q.pow(size as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out.push(LocalFunction { support: s, table });
    }
    EsPolynomial::new(q, out)
}
