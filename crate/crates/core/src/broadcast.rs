//! The broadcast measure: exact joint laws by dynamic programming over the
//! Steiner tree of a target set, and seeded Monte-Carlo sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::chain::TransitionChain;
use crate::error::{check_states, Error, Result};
use crate::tensor::permute_axes;
use crate::tree::RootedTree;

/// Law of the root state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootInit {
    Stationary,
    Fixed(usize),
}

impl RootInit {
    pub fn law(&self, chain: &TransitionChain) -> Result<Vec<f64>> {
        match *self {
            RootInit::Stationary => Ok(chain.pi.clone()),
            RootInit::Fixed(s) if s < chain.q => {
                let mut v = vec![0.0; chain.q];
                v[s] = 1.0;
                Ok(v)
            }
            RootInit::Fixed(s) => Err(Error::InvalidState(s)),
        }
    }
}

/// A partial assignment of states to vertices, sorted by vertex id.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Labeling {
    pub assignment: BTreeMap<usize, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationFile {
    leaf_states: BTreeMap<String, usize>,
}

impl Labeling {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Labeling { assignment: pairs.into_iter().collect() }
    }

    /// Labeling of every vertex, `states[v]` for vertex v.
    pub fn full(states: &[usize]) -> Self {
        Self::from_pairs(states.iter().copied().enumerate())
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.assignment.get(&v).copied()
    }

    /// Restriction to a vertex set.
    pub fn restrict(&self, vs: &[usize]) -> Self {
        Self::from_pairs(vs.iter().filter_map(|&v| self.get(v).map(|s| (v, s))))
    }

    pub fn from_observation_json(text: &str) -> Result<Self> {
        let file: ObservationFile = serde_json::from_str(text)?;
        let mut out = Labeling::default();
        for (k, s) in file.leaf_states {
            let v: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::ConfigInvalid(format!("bad vertex id {k:?}")))?;
            out.assignment.insert(v, s);
        }
        Ok(out)
    }

    pub fn from_observation_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_observation_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_observation_json(&self) -> String {
        let file = ObservationFile {
            leaf_states: self.assignment.iter().map(|(v, s)| (v.to_string(), *s)).collect(),
        };
        serde_json::to_string(&file).expect("plain map serializes")
    }
}

/// Counter-based stream for sample `index` under `master` seed.
pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: fall back to the last state with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn sample_with(tree: &RootedTree, chain: &TransitionChain, law: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut states = vec![0usize; tree.n];
    states[0] = draw(rng, law);
    for v in 1..tree.n {
        let p = tree.parent[v].unwrap();
        states[v] = draw(rng, &chain.rows[states[p]]);
    }
    states
}

/// One full-tree labeling drawn with stream 0 of `seed`.
pub fn sample_labeling(tree: &RootedTree, chain: &TransitionChain, root_init: RootInit, seed: u64) -> Result<Labeling> {
    let law = root_init.law(chain)?;
    Ok(Labeling::full(&sample_with(tree, chain, &law, &mut stream_rng(seed, 0))))
}

/// `n` independent full labelings (as state vectors); sample i uses stream i.
pub fn sample_batch(
    tree: &RootedTree,
    chain: &TransitionChain,
    root_init: RootInit,
    master_seed: u64,
    n: usize,
) -> Result<Vec<Vec<usize>>> {
    let law = root_init.law(chain)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| sample_with(tree, chain, &law, &mut stream_rng(master_seed, i)))
        .collect())
}

/// Write samples as `sample,vertex,state` rows.
pub fn write_samples_csv<W: Write>(out: W, samples: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "vertex", "state"])?;
    for (i, s) in samples.iter().enumerate() {
        for (v, x) in s.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Probability of a full labeling.
pub fn joint_probability(tree: &RootedTree, chain: &TransitionChain, x: &Labeling, root_init: RootInit) -> Result<f64> {
    let law = root_init.law(chain)?;
    let mut states = vec![0usize; tree.n];
    for (v, s) in states.iter_mut().enumerate() {
        *s = x.get(v).ok_or(Error::IncompleteLabeling(v))?;
        if *s >= chain.q {
            return Err(Error::InvalidState(*s));
        }
    }
    let factors = std::iter::once(law[states[0]])
        .chain((1..tree.n).map(|v| chain.p(states[tree.parent[v].unwrap()], states[v])));
    if tree.depth > 30 {
        let mut lp = 0.0;
        for f in factors {
            if f == 0.0 {
                return Ok(0.0);
            }
            lp += f.ln();
        }
        Ok(lp.exp())
    } else {
        Ok(factors.product())
    }
}

/// Conditional kernel `P(X_targets = y | X_top = θ)` as a row-major
/// `q × q^|targets|` table; targets ascending, all ⪯ `top`, last varies fastest.
pub fn conditional_kernel(tree: &RootedTree, chain: &TransitionChain, top: usize, targets: &[usize]) -> Result<Vec<f64>> {
    let n = targets.len();
    check_states(chain.q, n, "Steiner marginal")?;
    check_states(chain.q, n + 1, "Steiner kernel")?;
    for w in targets.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::DomainMismatch("targets must be strictly ascending".into()));
        }
    }
    for &t in targets {
        tree.check_vertex(t)?;
        if !tree.is_below(t, top) {
            return Err(Error::NotBelow(top));
        }
    }
    Ok(SteinerDp::new(tree, chain, top, targets).run())
}

/// Joint law of `X_targets` (ascending), optionally conditioned on `X_w = s`.
pub fn steiner_marginal(
    tree: &RootedTree,
    chain: &TransitionChain,
    targets: &[usize],
    condition: Option<(usize, usize)>,
    root_init: RootInit,
) -> Result<Vec<f64>> {
    let mut t = targets.to_vec();
    t.sort_unstable();
    t.dedup();
    let law = root_init.law(chain)?;
    let q = chain.q;
    let Some((w, s)) = condition else {
        let k = conditional_kernel(tree, chain, 0, &t)?;
        return Ok(mix_rows(&k, &law));
    };
    if s >= q {
        return Err(Error::InvalidState(s));
    }
    let mut u = t.clone();
    if !u.contains(&w) {
        u.push(w);
        u.sort_unstable();
    }
    let joint = mix_rows(&conditional_kernel(tree, chain, 0, &u)?, &law);
    let pos = u.iter().position(|&x| x == w).unwrap();
    let stride = q.pow((u.len() - 1 - pos) as u32);
    let size = q.pow(t.len() as u32);
    let in_t = t.contains(&w);
    let mut out = vec![0.0; size];
    for (i, o) in out.iter_mut().enumerate() {
        let j = if in_t {
            if (i / stride) % q != s {
                continue;
            }
            i
        } else {
            let hi = i / stride;
            let lo = i % stride;
            (hi * q + s) * stride + lo
        };
        *o = joint[j];
    }
    let z: f64 = out.iter().sum();
    if z <= 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    out.iter_mut().for_each(|x| *x /= z);
    Ok(out)
}

/// `Σ_θ law[θ] · K[θ, ·]`.
pub fn mix_rows(kernel: &[f64], law: &[f64]) -> Vec<f64> {
    let q = law.len();
    let width = kernel.len() / q;
    let mut out = vec![0.0; width];
    for (th, &p) in law.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, k) in out.iter_mut().zip(&kernel[th * width..(th + 1) * width]) {
            *o += p * k;
        }
    }
    out
}

/// Joint law of two vertices under a stationary root, `q × q` row-major.
pub fn pair_joint(tree: &RootedTree, chain: &TransitionChain, u: usize, v: usize) -> Vec<f64> {
    let q = chain.q;
    let w = tree.nearest_common_ancestor(u, v);
    let a = chain.power(tree.layer[u] - tree.layer[w]);
    let b = chain.power(tree.layer[v] - tree.layer[w]);
    let mut out = vec![0.0; q * q];
    for c in 0..q {
        let p = chain.pi[c];
        for x in 0..q {
            let pa = p * a[c * q + x];
            if pa == 0.0 {
                continue;
            }
            for y in 0..q {
                out[x * q + y] += pa * b[c * q + y];
            }
        }
    }
    out
}

/// Upward DP over the virtual tree spanned by `targets ∪ {top}`.
struct SteinerDp<'a> {
    tree: &'a RootedTree,
    chain: &'a TransitionChain,
    top: usize,
    targets: &'a [usize],
    powers: BTreeMap<usize, Vec<f64>>,
}

/// Factor at a virtual node: `q × q^axes.len()` table keyed by the node's state.
struct Factor {
    axes: Vec<usize>,
    table: Vec<f64>,
}

impl<'a> SteinerDp<'a> {
    fn new(tree: &'a RootedTree, chain: &'a TransitionChain, top: usize, targets: &'a [usize]) -> Self {
        SteinerDp { tree, chain, top, targets, powers: BTreeMap::new() }
    }

    fn power(&mut self, k: usize) -> &[f64] {
        let chain = self.chain;
        self.powers.entry(k).or_insert_with(|| chain.power(k))
    }

    fn run(mut self) -> Vec<f64> {
        let tree = self.tree;
        let mut nodes: Vec<usize> = self.targets.to_vec();
        nodes.push(self.top);
        for (i, &a) in self.targets.iter().enumerate() {
            for &b in &self.targets[i + 1..] {
                nodes.push(tree.nearest_common_ancestor(a, b));
            }
        }
        nodes.sort_unstable();
        nodes.dedup();
        let in_set: std::collections::HashSet<usize> = nodes.iter().copied().collect();
        let mut kids: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &v in &nodes {
            if v == self.top {
                continue;
            }
            let mut p = tree.parent[v].unwrap();
            while !in_set.contains(&p) {
                p = tree.parent[p].unwrap();
            }
            kids.entry(p).or_default().push(v);
        }
        let is_target: std::collections::HashSet<usize> = self.targets.iter().copied().collect();
        // BFS ids: children have larger ids, so a descending sweep is bottom-up.
        let mut factors: BTreeMap<usize, Factor> = BTreeMap::new();
        for &v in nodes.iter().rev() {
            let f = self.node_factor(v, is_target.contains(&v), kids.get(&v).map(Vec::as_slice).unwrap_or(&[]), &mut factors);
            factors.insert(v, f);
        }
        let root = factors.remove(&self.top).unwrap();
        let q = self.chain.q;
        let width = root.table.len() / q;
        let mut out = Vec::with_capacity(root.table.len());
        let mut order = root.axes.clone();
        order.sort_unstable();
        for th in 0..q {
            out.extend(permute_axes(&root.table[th * width..(th + 1) * width], q, &root.axes, &order));
        }
        out
    }

    fn node_factor(&mut self, v: usize, target: bool, kids: &[usize], factors: &mut BTreeMap<usize, Factor>) -> Factor {
        let q = self.chain.q;
        let mut acc = if target {
            let mut t = vec![0.0; q * q];
            for x in 0..q {
                t[x * q + x] = 1.0;
            }
            Factor { axes: vec![v], table: t }
        } else {
            Factor { axes: vec![], table: vec![1.0; q] }
        };
        for &c in kids {
            let child = factors.remove(&c).unwrap();
            let k = self.tree.layer[c] - self.tree.layer[v];
            let mk = self.power(k).to_vec();
            let cw = child.table.len() / q;
            // G = M^k · F_c
            let mut g = vec![0.0; q * cw];
            for x in 0..q {
                for y in 0..q {
                    let m = mk[x * q + y];
                    if m == 0.0 {
                        continue;
                    }
                    let src = &child.table[y * cw..(y + 1) * cw];
                    for (o, s) in g[x * cw..(x + 1) * cw].iter_mut().zip(src) {
                        *o += m * s;
                    }
                }
            }
            // Row-wise Kronecker (face-splitting) product.
            let aw = acc.table.len() / q;
            let mut table = vec![0.0; q * aw * cw];
            for x in 0..q {
                let ar = &acc.table[x * aw..(x + 1) * aw];
                let gr = &g[x * cw..(x + 1) * cw];
                let out = &mut table[x * aw * cw..(x + 1) * aw * cw];
                for (i, &a) in ar.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (o, &b) in out[i * cw..(i + 1) * cw].iter_mut().zip(gr) {
                        *o = a * b;
                    }
                }
            }
            acc.axes.extend(child.axes);
            acc.table = table;
        }
        acc
    }
}
