//! Rooted trees with breadth-first vertex ids and the combinatorial gadgets
//! used throughout: heights, ancestors, O(u;k), m-th descendants, pivots.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;

use crate::error::{size_cap, Error, Result};

/// A finite rooted tree whose leaves all sit on the last layer.
///
/// Ids are breadth-first from the root (id 0), so the leaves below any
/// vertex form a contiguous run of `leaves`.
#[derive(Clone, Debug)]
pub struct RootedTree {
    pub n: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub depth: usize,
    pub height: Vec<usize>,
    pub layer: Vec<usize>,
    pub leaves: Vec<usize>,
    /// Original ids for trees read from an edge list.
    pub original_id: Vec<usize>,
    leaf_range: Vec<(usize, usize)>,
}

/// Set of pairwise incomparable vertices, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Antichain {
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TreeFile {
    Dary { d: usize, depth: usize },
    Edges { n: usize, edges: Vec<[usize; 2]>, root: usize },
}

impl TreeFile {
    pub fn build(&self) -> Result<RootedTree> {
        match self {
            TreeFile::Dary { d, depth } => build_dary(*d, *depth),
            TreeFile::Edges { n, edges, root } => RootedTree::from_edges(*n, edges, *root),
        }
    }
}

/// Complete d-ary tree of the given depth.
pub fn build_dary(d: usize, depth: usize) -> Result<RootedTree> {
    if d == 0 {
        return Err(Error::InvalidTree("arity must be >= 1".into()));
    }
    let leaves = (d as f64).powi(depth as i32);
    let cap = size_cap();
    if leaves > cap as f64 {
        return Err(Error::SizeLimit { what: "leaf count".into(), needed: leaves, cap });
    }
    let mut parent = vec![None];
    let mut frontier = vec![0usize];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * d);
        for &p in &frontier {
            for _ in 0..d {
                next.push(parent.len());
                parent.push(Some(p));
            }
        }
        frontier = next;
    }
    RootedTree::from_parents(parent)
}

impl RootedTree {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: TreeFile = serde_json::from_str(&text)?;
        file.build()
    }

    /// Build from `(parent, child)` edges; ids are re-assigned breadth-first,
    /// keeping children in edge-list order.
    pub fn from_edges(n: usize, edges: &[[usize; 2]], root: usize) -> Result<Self> {
        if n == 0 || root >= n {
            return Err(Error::InvalidTree(format!("root {root} not in 0..{n}")));
        }
        if n > size_cap() * 2 {
            return Err(Error::SizeLimit { what: "vertex count".into(), needed: n as f64, cap: size_cap() });
        }
        let mut kids = vec![Vec::new(); n];
        let mut has_parent = vec![false; n];
        for &[p, c] in edges {
            if p >= n || c >= n {
                return Err(Error::InvalidTree(format!("edge ({p},{c}) out of range")));
            }
            if has_parent[c] || c == root {
                return Err(Error::InvalidTree(format!("vertex {c} has two parents or is the root")));
            }
            has_parent[c] = true;
            kids[p].push(c);
        }
        let mut order = Vec::with_capacity(n);
        let mut new_id = vec![usize::MAX; n];
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            new_id[v] = order.len();
            order.push(v);
            queue.extend(kids[v].iter().copied());
        }
        if order.len() != n {
            return Err(Error::InvalidTree("graph is not a single tree".into()));
        }
        let mut parent = vec![None; n];
        for &[p, c] in edges {
            parent[new_id[c]] = Some(new_id[p]);
        }
        let mut t = Self::from_parents(parent)?;
        t.original_id = order;
        Ok(t)
    }

    /// `parent` must already be in breadth-first order (parent id < child id,
    /// children appended in order).
    fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        let mut layer = vec![0usize; n];
        for v in 1..n {
            let p = parent[v].ok_or_else(|| Error::InvalidTree(format!("vertex {v} has no parent")))?;
            children[p].push(v);
            layer[v] = layer[p] + 1;
        }
        let depth = layer.iter().copied().max().unwrap_or(0);
        for v in 0..n {
            if children[v].is_empty() && layer[v] != depth {
                return Err(Error::InvalidTree(format!(
                    "vertex {v} is childless at layer {} < depth {depth}",
                    layer[v]
                )));
            }
        }
        let height: Vec<usize> = layer.iter().map(|&l| depth - l).collect();
        let leaves: Vec<usize> = (0..n).filter(|&v| layer[v] == depth).collect();
        let mut leaf_range = vec![(0, 0); n];
        for (i, &l) in leaves.iter().enumerate() {
            leaf_range[l] = (i, i + 1);
        }
        for v in (0..n).rev() {
            if let (Some(&a), Some(&b)) = (children[v].first(), children[v].last()) {
                leaf_range[v] = (leaf_range[a].0, leaf_range[b].1);
            }
        }
        Ok(RootedTree {
            n,
            parent,
            children,
            depth,
            height,
            layer,
            leaves,
            original_id: (0..n).collect(),
            leaf_range,
        })
    }

    pub const ROOT: usize = 0;

    #[inline]
    pub fn root(&self) -> usize {
        0
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::InvalidVertex(v))
        }
    }

    #[inline]
    pub fn is_leaf(&self, v: usize) -> bool {
        self.layer[v] == self.depth
    }

    /// Leaves below `v`, ascending (L_v).
    #[inline]
    pub fn leaves_under(&self, v: usize) -> &[usize] {
        let (a, b) = self.leaf_range[v];
        &self.leaves[a..b]
    }

    /// `anc(u, k)`: the ancestor k levels up.
    pub fn anc(&self, u: usize, k: usize) -> Result<usize> {
        let mut v = u;
        for _ in 0..k {
            v = self.parent[v].ok_or(Error::NoSuchAncestor(u, k as i64))?;
        }
        Ok(v)
    }

    /// `u ⪯ a`: a is u or an ancestor of u.
    pub fn is_below(&self, u: usize, a: usize) -> bool {
        if self.layer[u] < self.layer[a] {
            return false;
        }
        let mut v = u;
        while self.layer[v] > self.layer[a] {
            v = self.parent[v].unwrap();
        }
        v == a
    }

    pub fn nearest_common_ancestor(&self, u: usize, v: usize) -> usize {
        let (mut a, mut b) = (u, v);
        while self.layer[a] > self.layer[b] {
            a = self.parent[a].unwrap();
        }
        while self.layer[b] > self.layer[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Graph distance between comparable-or-not vertices.
    pub fn distance(&self, u: usize, v: usize) -> usize {
        let w = self.nearest_common_ancestor(u, v);
        self.layer[u] + self.layer[v] - 2 * self.layer[w]
    }

    /// O(u;k): children of u for k = −1, else children of anc(u,k+1) minus anc(u,k).
    pub fn o_set(&self, u: usize, k: i64) -> Result<Vec<usize>> {
        if k < -1 {
            return Err(Error::NoSuchAncestor(u, k));
        }
        if k == -1 {
            return Ok(self.children[u].clone());
        }
        let a = self.anc(u, k as usize).map_err(|_| Error::NoSuchAncestor(u, k + 1))?;
        let b = self.parent[a].ok_or(Error::NoSuchAncestor(u, k + 1))?;
        Ok(self.children[b].iter().copied().filter(|&c| c != a).collect())
    }

    /// Union of O(u;j) for j in `lo..=hi`, ascending.
    pub fn o_range(&self, u: usize, lo: i64, hi: i64) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for j in lo..=hi {
            out.extend(self.o_set(u, j)?);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// D_m(u): the m-th descendants of u.
    pub fn dm_set(&self, u: usize, m: usize) -> Result<Vec<usize>> {
        if self.height[u] < m {
            return Err(Error::TooShallow(u, m));
        }
        let mut cur = vec![u];
        for _ in 0..m {
            cur = cur.iter().flat_map(|&v| self.children[v].iter().copied()).collect();
        }
        Ok(cur)
    }

    /// All vertices below u (inclusive), ascending.
    pub fn subtree(&self, u: usize) -> Vec<usize> {
        let mut out = vec![u];
        let mut cur = vec![u];
        while !cur.is_empty() {
            cur = cur.iter().flat_map(|&v| self.children[v].iter().copied()).collect();
            out.extend(&cur);
        }
        out.sort_unstable();
        out
    }

    /// Vertices at height `h`, ascending.
    pub fn at_height(&self, h: usize) -> Vec<usize> {
        (0..self.n).filter(|&v| self.height[v] == h).collect()
    }

    /// True iff every vertex has at most `R d^k` k-th descendants for all k ≥ 1.
    pub fn check_degree_dominated(&self, d: usize, r: f64) -> bool {
        (0..self.n).all(|u| {
            let mut cur = vec![u];
            let mut bound = r;
            for _ in 0..self.height[u] {
                cur = cur.iter().flat_map(|&v| self.children[v].iter().copied()).collect();
                bound *= d as f64;
                if cur.len() as f64 > bound * (1.0 + 1e-12) {
                    return false;
                }
            }
            true
        })
    }

    /// Pivot vertex of a leaf set: descend from ρ′ while some child holds
    /// more than 2^K of the support.
    pub fn pivot_vertex(&self, s: &[usize], rho_prime: usize, k: usize) -> Result<usize> {
        let cap = 1usize << k;
        if s.len() > 2 * cap {
            return Err(Error::TooLarge(s.len(), 2 * cap));
        }
        if s.iter().any(|&x| !self.is_leaf(x) || !self.is_below(x, rho_prime)) {
            return Err(Error::NotBelow(rho_prime));
        }
        let mut p = rho_prime;
        loop {
            let next = self.children[p].iter().copied().find(|&c| {
                let (a, b) = self.leaf_range[c];
                s.iter().filter(|&&x| {
                    let i = self.leaf_index(x);
                    i >= a && i < b
                }).count()
                    > cap
            });
            match next {
                Some(c) => p = c,
                None => return Ok(p),
            }
        }
    }

    /// Position of a leaf in `leaves`.
    #[inline]
    pub fn leaf_index(&self, leaf: usize) -> usize {
        self.leaf_range[leaf].0
    }

    pub fn is_antichain(&self, vs: &[usize]) -> Result<()> {
        for (i, &a) in vs.iter().enumerate() {
            self.check_vertex(a)?;
            for &b in &vs[i + 1..] {
                if self.is_below(a, b) || self.is_below(b, a) {
                    return Err(Error::NotAntichain(a, b));
                }
            }
        }
        Ok(())
    }
}

impl Antichain {
    pub fn new(tree: &RootedTree, members: &[usize]) -> Result<Self> {
        let mut m = members.to_vec();
        m.sort_unstable();
        m.dedup();
        tree.is_antichain(&m)?;
        Ok(Antichain { members: m })
    }

    /// Leaves covered by the antichain, ascending.
    pub fn leaves(&self, tree: &RootedTree) -> Vec<usize> {
        let mut out: Vec<usize> = self.members.iter().flat_map(|&v| tree.leaves_under(v).iter().copied()).collect();
        out.sort_unstable();
        out
    }
}
