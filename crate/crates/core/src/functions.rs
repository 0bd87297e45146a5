//! Function representations: local tables, Efron–Stein polynomials, dense
//! functions on explicit variable sets, and indicator bases of T_K(u).

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{check_states, Error, Result};
use crate::linalg::{anova_transform, greedy_independent};
use crate::tensor::{kron, lift, permute_axes};
use crate::tree::RootedTree;

/// `φ_S`: a table over `[q]^S`, support ascending, last vertex fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFunction {
    pub support: Vec<usize>,
    pub table: Vec<f64>,
}

/// A sum of local functions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EsPolynomial {
    pub q: usize,
    pub terms: Vec<LocalFunction>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionFile {
    terms: Vec<LocalFunction>,
}

/// A function of `x_domain` stored as a full table.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFunction {
    pub q: usize,
    pub domain: Vec<usize>,
    pub values: Vec<f64>,
}

/// A spanning family of dense functions on a common domain.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    pub q: usize,
    pub domain: Vec<usize>,
    pub vectors: Vec<DenseFunction>,
    pub gram_rank: usize,
}

impl LocalFunction {
    /// Builds a local function, sorting the support (and permuting the table).
    pub fn new(q: usize, support: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if table.len() != q.pow(support.len() as u32) {
            return Err(Error::SupportMismatch(format!(
                "table of length {} for support of size {}",
                table.len(),
                support.len()
            )));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::SupportMismatch("repeated vertex in support".into()));
        }
        let table = permute_axes(&table, q, &support, &sorted);
        Ok(LocalFunction { support: sorted, table })
    }

    /// Indicator of `x_S = states`.
    pub fn indicator(q: usize, support: &[usize], states: &[usize]) -> Self {
        let mut table = vec![0.0; q.pow(support.len() as u32)];
        table[crate::tensor::index_of(states, q)] = 1.0;
        LocalFunction { support: support.to_vec(), table }
    }
}

impl EsPolynomial {
    pub fn new(q: usize, terms: Vec<LocalFunction>) -> Self {
        EsPolynomial { q, terms }
    }

    pub fn zero(q: usize) -> Self {
        EsPolynomial { q, terms: Vec::new() }
    }

    pub fn constant(q: usize, c: f64) -> Self {
        EsPolynomial { q, terms: vec![LocalFunction { support: vec![], table: vec![c] }] }
    }

    /// `Σ_{u ∈ leaves} w(x_u)`.
    pub fn linear(q: usize, leaves: &[usize], w: &[f64]) -> Self {
        let terms = leaves
            .iter()
            .map(|&u| LocalFunction { support: vec![u], table: w.to_vec() })
            .collect();
        EsPolynomial { q, terms }
    }

    pub fn from_json(q: usize, text: &str) -> Result<Self> {
        let file: FunctionFile = serde_json::from_str(text)?;
        let terms = file
            .terms
            .into_iter()
            .map(|t| LocalFunction::new(q, t.support, t.table))
            .collect::<Result<_>>()?;
        Ok(EsPolynomial { q, terms })
    }

    pub fn from_file(q: usize, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(q, &std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FunctionFile { terms: self.terms.clone() }).expect("serializable")
    }

    pub fn declared_degree(&self) -> usize {
        es_degree(self)
    }

    /// Union of term supports, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.terms.iter().flat_map(|t| t.support.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn eval(&self, x: impl Fn(usize) -> usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let idx = t.support.iter().fold(0, |acc, &v| acc * self.q + x(v));
                t.table[idx]
            })
            .sum()
    }

    pub fn add(&self, other: &EsPolynomial) -> EsPolynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        EsPolynomial { q: self.q, terms }
    }

    pub fn scale(&self, c: f64) -> EsPolynomial {
        let terms = self
            .terms
            .iter()
            .map(|t| LocalFunction { support: t.support.clone(), table: t.table.iter().map(|x| x * c).collect() })
            .collect();
        EsPolynomial { q: self.q, terms }
    }

    /// Product of two polynomials, term by term.
    pub fn mul(&self, other: &EsPolynomial) -> Result<EsPolynomial> {
        let q = self.q;
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut s = a.support.clone();
                s.extend(&b.support);
                s.sort_unstable();
                s.dedup();
                check_states(q, s.len(), "product term")?;
                let la = lift(&a.table, q, &a.support, &s);
                let lb = lift(&b.table, q, &b.support, &s);
                terms.push(LocalFunction { support: s, table: la.iter().zip(&lb).map(|(x, y)| x * y).collect() });
            }
        }
        Ok(EsPolynomial { q, terms })
    }
}

/// Efron–Stein degree as the largest term support.
pub fn es_degree(f: &EsPolynomial) -> usize {
    f.terms.iter().map(|t| t.support.len()).max().unwrap_or(0)
}

/// Dense table of `f` over `domain` (ascending).
pub fn to_dense(f: &EsPolynomial, domain: &[usize]) -> Result<DenseFunction> {
    let q = f.q;
    let size = check_states(q, domain.len(), "dense function")?;
    let mut values = vec![0.0; size];
    for t in &f.terms {
        if let Some(v) = t.support.iter().find(|v| !domain.contains(v)) {
            return Err(Error::SupportMismatch(format!("vertex {v} outside the domain")));
        }
        let l = lift(&t.table, q, &t.support, domain);
        values.iter_mut().zip(&l).for_each(|(a, b)| *a += b);
    }
    Ok(DenseFunction { q, domain: domain.to_vec(), values })
}

/// Pointwise product of functions on pairwise-disjoint domains.
pub fn tensor_identify(parts: &[DenseFunction]) -> Result<DenseFunction> {
    let q = parts.first().map_or(2, |p| p.q);
    let mut axes: Vec<usize> = Vec::new();
    let mut values = vec![1.0];
    for p in parts {
        if let Some(&v) = p.domain.iter().find(|v| axes.contains(v)) {
            return Err(Error::OverlappingDomains(v));
        }
        check_states(q, axes.len() + p.domain.len(), "tensor product")?;
        axes.extend(&p.domain);
        values = kron(&values, &p.values);
    }
    let mut sorted = axes.clone();
    sorted.sort_unstable();
    let values = permute_axes(&values, q, &axes, &sorted);
    Ok(DenseFunction { q, domain: sorted, values })
}

impl DenseFunction {
    pub fn new(q: usize, domain: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if values.len() != q.pow(domain.len() as u32) {
            return Err(Error::DomainMismatch("table length does not match domain".into()));
        }
        Ok(DenseFunction { q, domain, values })
    }

    pub fn constant(q: usize, domain: &[usize], c: f64) -> Self {
        DenseFunction { q, domain: domain.to_vec(), values: vec![c; q.pow(domain.len() as u32)] }
    }

    /// Same function viewed on a superset domain.
    pub fn lift_to(&self, domain: &[usize]) -> Result<DenseFunction> {
        if let Some(v) = self.domain.iter().find(|v| !domain.contains(v)) {
            return Err(Error::DomainMismatch(format!("vertex {v} missing from target domain")));
        }
        check_states(self.q, domain.len(), "lift")?;
        Ok(DenseFunction { q: self.q, domain: domain.to_vec(), values: lift(&self.values, self.q, &self.domain, domain) })
    }

    pub fn max_norm(&self) -> f64 {
        crate::tensor::max_abs(&self.values)
    }

    pub fn axpy(&mut self, a: f64, other: &DenseFunction) {
        debug_assert_eq!(self.domain, other.domain);
        self.values.iter_mut().zip(&other.values).for_each(|(x, y)| *x += a * y);
    }

    pub fn sub(&self, other: &DenseFunction) -> DenseFunction {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }
}

/// Supports `S ⊆ L_u` with `|S| ≤ 2^K` ordered by size then lexicographically.
fn small_subsets(leaves: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut cur: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max.min(leaves.len()) {
        let mut next = Vec::new();
        for s in &cur {
            let start = s.last().map_or(0, |&l| leaves.iter().position(|&x| x == l).unwrap() + 1);
            for &v in &leaves[start..] {
                let mut t = s.clone();
                t.push(v);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        cur = next;
    }
    out
}

/// All states of `[lo, hi)^n` in lexicographic order.
fn state_grid(n: usize, hi: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..hi).map(move |x| {
                    let mut t = s.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    out
}

/// The full indicator-lift spanning set of T_K(u), in canonical order.
pub fn tk_spanning_set(tree: &RootedTree, q: usize, u: usize, k: usize) -> Result<Vec<DenseFunction>> {
    let leaves = tree.leaves_under(u).to_vec();
    check_states(q, leaves.len(), "T_K basis")?;
    let max = 1usize.checked_shl(k as u32).unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for s in small_subsets(&leaves, max) {
        for x in state_grid(s.len(), q) {
            let f = LocalFunction::indicator(q, &s, &x);
            out.push(DenseFunction { q, domain: leaves.clone(), values: lift(&f.table, q, &s, &leaves) });
        }
    }
    Ok(out)
}

/// Basis of T_K(u): the greedy independent subset of the indicator lifts.
///
/// The greedy pass keeps exactly the indicators `1{x_S = a}` with every
/// `a_i < q − 1`, so those are generated directly; `gram_rank` is the rank
/// under `E_u` with `law` the distribution of `X_{L_u}` when `X_u ∼ π`.
pub fn tk_basis(tree: &RootedTree, q: usize, u: usize, k: usize, law: Option<&[f64]>) -> Result<SubspaceBasis> {
    let leaves = tree.leaves_under(u).to_vec();
    check_states(q, leaves.len(), "T_K basis")?;
    let max = 1usize.checked_shl(k as u32).unwrap_or(usize::MAX);
    let mut vectors = Vec::new();
    for s in small_subsets(&leaves, max) {
        for x in state_grid(s.len(), q - 1) {
            let f = LocalFunction::indicator(q, &s, &x);
            vectors.push(DenseFunction { q, domain: leaves.clone(), values: lift(&f.table, q, &s, &leaves) });
        }
    }
    let gram_rank = match law {
        Some(p) => {
            let g = weighted_gram(&vectors, p);
            crate::linalg::sym_pinv(&g, crate::linalg::GRAM_CUTOFF).1
        }
        None => vectors.len(),
    };
    Ok(SubspaceBasis { q, domain: leaves, vectors, gram_rank })
}

/// Generic greedy reduction of the full spanning set (reference path).
pub fn tk_basis_greedy(tree: &RootedTree, q: usize, u: usize, k: usize) -> Result<SubspaceBasis> {
    let span = tk_spanning_set(tree, q, u, k)?;
    let raw: Vec<Vec<f64>> = span.iter().map(|f| f.values.clone()).collect();
    let kept = greedy_independent(&raw, 1e-10);
    let vectors: Vec<DenseFunction> = kept.into_iter().map(|i| span[i].clone()).collect();
    let n = vectors.len();
    Ok(SubspaceBasis { q, domain: tree.leaves_under(u).to_vec(), vectors, gram_rank: n })
}

/// Gram matrix `Σ_x p(x) a_i(x) a_j(x)`.
pub fn weighted_gram(vectors: &[DenseFunction], p: &[f64]) -> nalgebra::DMatrix<f64> {
    let n = vectors.len();
    let weighted: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.values.iter().zip(p).map(|(a, b)| a * b).collect())
        .collect();
    let mut g = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x: f64 = weighted[i].iter().zip(&vectors[j].values).map(|(a, b)| a * b).sum();
            g[(i, j)] = x;
            g[(j, i)] = x;
        }
    }
    g
}

/// Down-closed family of supports: `S` is admissible when
/// `|S ∩ block| ≤ limit` for every block. Axes in no block are unrestricted.
#[derive(Clone, Debug, Default)]
pub struct SupportFamily {
    pub blocks: Vec<(Vec<usize>, usize)>,
}

impl SupportFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(mut self, vertices: Vec<usize>, limit: usize) -> Self {
        self.blocks.push((vertices, limit));
        self
    }

    /// Functions of degree ≤ 2^K on each `L_v`, v in the antichain.
    pub fn tensor_tk(tree: &RootedTree, antichain: &[usize], k: usize) -> Self {
        let mut fam = SupportFamily::new();
        for &v in antichain {
            fam = fam.block(tree.leaves_under(v).to_vec(), 1 << k);
        }
        fam
    }

    /// Relative distance of `f` from the span of functions with admissible
    /// supports: `‖f − P f‖₂ / ‖f‖₂` under the uniform measure, where P keeps
    /// the admissible Efron–Stein (ANOVA) components. Zero functions give 0.
    pub fn residual(&self, f: &DenseFunction) -> f64 {
        let (out, total) = self.split_energy(f);
        if total == 0.0 {
            0.0
        } else {
            (out / total).sqrt()
        }
    }

    /// Absolute residual `‖f − P f‖₂` (uniform-measure normalization).
    pub fn abs_residual(&self, f: &DenseFunction) -> f64 {
        let (out, _) = self.split_energy(f);
        (out / f.values.len() as f64).sqrt()
    }

    fn split_energy(&self, f: &DenseFunction) -> (f64, f64) {
        let q = f.q;
        let n = f.domain.len();
        let h = anova_transform(q);
        let mut c = f.values.clone();
        let mut buf = vec![0.0; q];
        for axis in 0..n {
            let stride = q.pow((n - 1 - axis) as u32);
            let block = stride * q;
            for base in (0..c.len()).step_by(block) {
                for off in 0..stride {
                    for (a, b) in buf.iter_mut().enumerate() {
                        *b = (0..q).map(|j| h[(a, j)] * c[base + off + j * stride]).sum();
                    }
                    for (a, b) in buf.iter().enumerate() {
                        c[base + off + a * stride] = *b;
                    }
                }
            }
        }
        let membership: Vec<Vec<usize>> = f
            .domain
            .iter()
            .map(|v| (0..self.blocks.len()).filter(|&b| self.blocks[b].0.contains(v)).collect())
            .collect();
        let mut out = 0.0;
        let mut total = 0.0;
        let mut counts = vec![0usize; self.blocks.len()];
        for (idx, &x) in c.iter().enumerate() {
            let e = x * x;
            total += e;
            if e == 0.0 {
                continue;
            }
            counts.iter_mut().for_each(|c| *c = 0);
            let mut rest = idx;
            for axis in (0..n).rev() {
                if rest % q != 0 {
                    for &b in &membership[axis] {
                        counts[b] += 1;
                    }
                }
                rest /= q;
            }
            if counts.iter().zip(&self.blocks).any(|(c, (_, lim))| c > lim) {
                out += e;
            }
        }
        (out, total)
    }
}
