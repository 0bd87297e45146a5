//! Operator calculus on leaf-function spaces: conditional expectations and
//! their tensorizations, norms, projections, R-spaces, the layered
//! decomposition, decay probes and exact variance ratios.

mod decompose;
mod moments;
mod norms;
mod probe;
mod projection;
mod rspace;

pub use decompose::{decompose_f, pairwise_report, random_polynomial, DecompositionResult, MembershipReport, PairwiseEntry, PairwiseReport};
pub use moments::{var_ratio, var_ratio_with, MomentEngine, VarianceParts};
pub use norms::{norm_eval, u_law, NormKind};
pub use probe::{contraction_constant, decay_probe, DecayProbeReport};
pub use projection::{p_dm_apply, p_dm_operator, projection_pi, strong_projection_pt, Projector, StrongProjector};
pub use rspace::{psi_apply, r_space_basis};

use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use crate::broadcast::{conditional_kernel, mix_rows};
use crate::chain::TransitionChain;
use crate::error::{size_cap, Error, Result};
use crate::tensor::permute_axes;
use crate::tree::RootedTree;

/// Cap on the number of entries of a materialized operator matrix.
pub const ENTRY_CAP: usize = 1 << 24;

/// A linear map `ℱ(input_domain) → ℱ(output_domain)` as an explicit matrix
/// (rows indexed by output states, columns by input states).
#[derive(Clone, Debug, Serialize)]
pub struct LinearMapMatrix {
    pub q: usize,
    pub input_domain: Vec<usize>,
    pub output_domain: Vec<usize>,
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<f64>,
}

/// Which per-vertex operator to place in a tensorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum OpKind {
    /// `Ê_u`: conditional expectation given `X_u`.
    Ehat,
    /// `E_u`: expectation with `Y_u ∼ π`.
    E,
    /// `D_u = Ê_u − E_u`.
    D,
    /// Identity on `ℱ(L_u)`.
    I,
}

fn check_entries(rows: usize, cols: usize) -> Result<()> {
    let cap = ENTRY_CAP.max(size_cap());
    if (rows as f64) * (cols as f64) > cap as f64 {
        return Err(Error::SizeLimit { what: "operator matrix".into(), needed: rows as f64 * cols as f64, cap });
    }
    Ok(())
}

impl LinearMapMatrix {
    pub fn new(q: usize, input_domain: Vec<usize>, output_domain: Vec<usize>, entries: Vec<f64>) -> Result<Self> {
        let nrows = q.pow(output_domain.len() as u32);
        let ncols = q.pow(input_domain.len() as u32);
        if entries.len() != nrows * ncols {
            return Err(Error::DomainMismatch("entry count does not match domains".into()));
        }
        Ok(LinearMapMatrix { q, input_domain, output_domain, nrows, ncols, entries })
    }

    pub fn identity(q: usize, domain: &[usize]) -> Result<Self> {
        let n = q.pow(domain.len() as u32);
        check_entries(n, n)?;
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = 1.0;
        }
        Self::new(q, domain.to_vec(), domain.to_vec(), e)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.ncols + c]
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.ncols, "input length mismatch");
        self.entries.chunks(self.ncols).map(|row| crate::tensor::dot(row, f)).collect()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinearMapMatrix) -> Result<LinearMapMatrix> {
        if self.input_domain != inner.output_domain {
            return Err(Error::DomainMismatch(format!(
                "cannot compose: {:?} vs {:?}",
                self.input_domain, inner.output_domain
            )));
        }
        check_entries(self.nrows, inner.ncols)?;
        let mut e = vec![0.0; self.nrows * inner.ncols];
        for r in 0..self.nrows {
            let out = &mut e[r * inner.ncols..(r + 1) * inner.ncols];
            for k in 0..self.ncols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(&inner.entries[k * inner.ncols..(k + 1) * inner.ncols]) {
                    *o += a * b;
                }
            }
        }
        Self::new(self.q, inner.input_domain.clone(), self.output_domain.clone(), e)
    }

    pub fn add(&self, other: &LinearMapMatrix, scale: f64) -> Result<LinearMapMatrix> {
        if self.input_domain != other.input_domain || self.output_domain != other.output_domain {
            return Err(Error::DomainMismatch("operator domains differ".into()));
        }
        let mut out = self.clone();
        out.entries.iter_mut().zip(&other.entries).for_each(|(a, b)| *a += scale * b);
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &LinearMapMatrix) -> f64 {
        if self.entries.len() != other.entries.len() {
            return f64::INFINITY;
        }
        self.entries.iter().zip(&other.entries).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Kronecker product of maps on disjoint domains; both domains of the
    /// result are sorted ascending.
    pub fn kron_all(q: usize, factors: &[LinearMapMatrix]) -> Result<LinearMapMatrix> {
        let rows: f64 = factors.iter().map(|f| f.nrows as f64).product();
        let cols: f64 = factors.iter().map(|f| f.ncols as f64).product();
        check_entries(rows as usize, cols as usize).map_err(|_| Error::SizeLimit {
            what: "operator matrix".into(),
            needed: rows * cols,
            cap: ENTRY_CAP,
        })?;
        let mut acc = LinearMapMatrix { q, input_domain: vec![], output_domain: vec![], nrows: 1, ncols: 1, entries: vec![1.0] };
        for f in factors {
            let nr = acc.nrows * f.nrows;
            let nc = acc.ncols * f.ncols;
            let mut e = vec![0.0; nr * nc];
            for r1 in 0..acc.nrows {
                for c1 in 0..acc.ncols {
                    let a = acc.get(r1, c1);
                    if a == 0.0 {
                        continue;
                    }
                    for r2 in 0..f.nrows {
                        let row = (r1 * f.nrows + r2) * nc + c1 * f.ncols;
                        for c2 in 0..f.ncols {
                            e[row + c2] = a * f.get(r2, c2);
                        }
                    }
                }
            }
            acc.input_domain.extend(&f.input_domain);
            acc.output_domain.extend(&f.output_domain);
            acc.nrows = nr;
            acc.ncols = nc;
            acc.entries = e;
        }
        acc.sort_domains()
    }

    fn sort_domains(self) -> Result<LinearMapMatrix> {
        let q = self.q;
        let mut out_sorted = self.output_domain.clone();
        out_sorted.sort_unstable();
        let mut in_sorted = self.input_domain.clone();
        in_sorted.sort_unstable();
        if out_sorted.windows(2).any(|w| w[0] == w[1]) || in_sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::OverlappingDomains(0));
        }
        let row_idx: Vec<f64> = (0..self.nrows).map(|i| i as f64).collect();
        let row_perm = permute_axes(&row_idx, q, &self.output_domain, &out_sorted);
        let col_idx: Vec<f64> = (0..self.ncols).map(|i| i as f64).collect();
        let col_perm = permute_axes(&col_idx, q, &self.input_domain, &in_sorted);
        let mut e = vec![0.0; self.entries.len()];
        for (r, &src_r) in row_perm.iter().enumerate() {
            for (c, &src_c) in col_perm.iter().enumerate() {
                e[r * self.ncols + c] = self.get(src_r as usize, src_c as usize);
            }
        }
        Ok(LinearMapMatrix { entries: e, output_domain: out_sorted, input_domain: in_sorted, ..self })
    }

    /// Write `row,col,value` CSV plus a JSON descriptor of the domains.
    pub fn dump<W: Write, J: Write>(&self, csv_out: W, json_out: J, name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(csv_out);
        w.write_record(["row", "col", "value"])?;
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                let v = self.get(r, c);
                if v != 0.0 {
                    w.write_record([r.to_string(), c.to_string(), format!("{v:.17e}")])?;
                }
            }
        }
        w.flush()?;
        let desc = serde_json::json!({
            "operator": name,
            "q": self.q,
            "input_domain": self.input_domain,
            "output_domain": self.output_domain,
            "nrows": self.nrows,
            "ncols": self.ncols,
            "index_order": "lexicographic over domain states, last vertex fastest",
        });
        serde_json::to_writer_pretty(json_out, &desc)?;
        Ok(())
    }
}

/// Law of `X_{L_u}` given `X_u`, and its π-mixture.
#[derive(Debug)]
pub struct VertexLaw {
    pub u: usize,
    pub leaves: Vec<usize>,
    /// `q × q^|L_u|` row-major: row θ is `P(X_{L_u} = · | X_u = θ)`.
    pub kernel: Vec<f64>,
    /// `Σ_θ π_θ · kernel[θ]`.
    pub law: Vec<f64>,
}

impl VertexLaw {
    pub fn row(&self, th: usize) -> &[f64] {
        let w = self.law.len();
        &self.kernel[th * w..(th + 1) * w]
    }
}

/// A tree and channel with per-vertex caches of leaf laws.
pub struct Model<'a> {
    pub tree: &'a RootedTree,
    pub chain: &'a TransitionChain,
    laws: Mutex<HashMap<usize, Arc<VertexLaw>>>,
    projectors: Mutex<HashMap<(usize, usize), Arc<Projector>>>,
}

impl<'a> Model<'a> {
    pub fn new(tree: &'a RootedTree, chain: &'a TransitionChain) -> Self {
        Model { tree, chain, laws: Mutex::new(HashMap::new()), projectors: Mutex::new(HashMap::new()) }
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.chain.q
    }

    pub fn vertex_law(&self, u: usize) -> Result<Arc<VertexLaw>> {
        self.tree.check_vertex(u)?;
        if let Some(l) = self.laws.lock().unwrap().get(&u) {
            return Ok(l.clone());
        }
        let leaves = self.tree.leaves_under(u).to_vec();
        let kernel = conditional_kernel(self.tree, self.chain, u, &leaves)?;
        let law = mix_rows(&kernel, &self.chain.pi);
        let l = Arc::new(VertexLaw { u, leaves, kernel, law });
        self.laws.lock().unwrap().insert(u, l.clone());
        Ok(l)
    }

    /// Cached `Π_{u,K}`.
    pub fn projector(&self, u: usize, k: usize) -> Result<Arc<Projector>> {
        if let Some(p) = self.projectors.lock().unwrap().get(&(u, k)) {
            return Ok(p.clone());
        }
        let p = Arc::new(Projector::new(self, u, k)?);
        self.projectors.lock().unwrap().insert((u, k), p.clone());
        Ok(p)
    }

    /// Product law of the independent processes below each member of `a`,
    /// on the ascending union of their leaves.
    pub fn product_law(&self, a: &[usize]) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut axes = Vec::new();
        let mut law = vec![1.0];
        for &v in a {
            let l = self.vertex_law(v)?;
            crate::error::check_states(self.q(), axes.len() + l.leaves.len(), "product law")?;
            axes.extend(&l.leaves);
            law = crate::tensor::kron(&law, &l.law);
        }
        let mut sorted = axes.clone();
        sorted.sort_unstable();
        Ok((sorted.clone(), permute_axes(&law, self.q(), &axes, &sorted)))
    }

    /// Per-vertex operator on `ℱ(L_u)`.
    pub fn vertex_op(&self, u: usize, kind: OpKind) -> Result<LinearMapMatrix> {
        let l = self.vertex_law(u)?;
        let q = self.q();
        let n = l.law.len();
        match kind {
            OpKind::Ehat => LinearMapMatrix::new(q, l.leaves.clone(), vec![u], l.kernel.clone()),
            OpKind::E => LinearMapMatrix::new(q, l.leaves.clone(), vec![], l.law.clone()),
            OpKind::D => {
                let mut e = l.kernel.clone();
                for th in 0..q {
                    e[th * n..(th + 1) * n].iter_mut().zip(&l.law).for_each(|(a, b)| *a -= b);
                }
                LinearMapMatrix::new(q, l.leaves.clone(), vec![u], e)
            }
            OpKind::I => LinearMapMatrix::identity(q, &l.leaves),
        }
    }
}

/// Matrix of `Ê_u`, `E_u` or `D_u` on `ℱ(L_u)`.
pub fn cond_expect_op(tree: &RootedTree, chain: &TransitionChain, u: usize, kind: OpKind) -> Result<LinearMapMatrix> {
    Model::new(tree, chain).vertex_op(u, kind)
}

/// `⊗_{v ∈ A} op_v` assembled in ascending vertex order.
pub fn antichain_tensor(model: &Model, ops: &[(usize, OpKind)]) -> Result<LinearMapMatrix> {
    let mut ops = ops.to_vec();
    ops.sort_by_key(|x| x.0);
    let members: Vec<usize> = ops.iter().map(|x| x.0).collect();
    model.tree.is_antichain(&members)?;
    let factors = ops.iter().map(|&(v, k)| model.vertex_op(v, k)).collect::<Result<Vec<_>>>()?;
    LinearMapMatrix::kron_all(model.q(), &factors)
}

/// `Ê` from the vertices `lower` up to the antichain `upper`: the kernel
/// `P(X_lower | X_upper)` as a map `ℱ(lower) → ℱ(upper)`. Every member of
/// `lower` must lie below some member of `upper`.
pub fn ehat_between(model: &Model, upper: &[usize], lower: &[usize]) -> Result<LinearMapMatrix> {
    let tree = model.tree;
    let q = model.q();
    tree.is_antichain(upper)?;
    let mut factors = Vec::new();
    let mut covered = 0;
    for &a in upper {
        let mut below: Vec<usize> = lower.iter().copied().filter(|&v| tree.is_below(v, a)).collect();
        below.sort_unstable();
        covered += below.len();
        let k = conditional_kernel(tree, model.chain, a, &below)?;
        factors.push(LinearMapMatrix::new(q, below, vec![a], k)?);
    }
    if covered != lower.len() {
        return Err(Error::DomainMismatch("lower set not covered by the antichain".into()));
    }
    LinearMapMatrix::kron_all(q, &factors)
}
