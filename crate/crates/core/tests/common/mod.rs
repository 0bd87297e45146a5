//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use botlab_core::chain::{validate_chain, TransitionChain};
use botlab_core::tree::RootedTree;
use rand::Rng;

/// Every full labeling with its probability (stationary root), computed by
/// direct products without the library's DP.
pub fn enumerate(tree: &RootedTree, chain: &TransitionChain) -> Vec<(Vec<usize>, f64)> {
    let q = chain.q;
    let total = q.pow(tree.n as u32);
    let mut out = Vec::with_capacity(total);
    let mut x = vec![0usize; tree.n];
    for idx in 0..total {
        let mut r = idx;
        for v in (0..tree.n).rev() {
            x[v] = r % q;
            r /= q;
        }
        let mut p = chain.pi[x[0]];
        for v in 1..tree.n {
            p *= chain.rows[x[tree.parent[v].unwrap()]][x[v]];
        }
        out.push((x.clone(), p));
    }
    out
}

/// Random ergodic chain; with `zeros`, some entries are forced to zero.
pub fn random_chain<R: Rng>(rng: &mut R, q: usize, zeros: bool) -> TransitionChain {
    loop {
        let rows: Vec<Vec<f64>> = (0..q)
            .map(|_| {
                let mut r: Vec<f64> = (0..q).map(|_| rng.gen_range(0.05..1.0)).collect();
                if zeros && rng.gen_bool(0.5) {
                    let j = rng.gen_range(0..q);
                    r[j] = 0.0;
                }
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        if let Ok(c) = validate_chain(&rows) {
            return c;
        }
    }
}

/// All rooted trees (up to child order) with at most `max_n` vertices and
/// leaves on one layer, as parent arrays in breadth-first order.
pub fn all_trees(max_n: usize) -> Vec<RootedTree> {
    // Grow layer by layer: each vertex of the current last layer gets ≥ 1 child.
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<Option<usize>>, Vec<usize>)> = vec![(vec![None], vec![0])];
    while let Some((parent, last)) = stack.pop() {
        out.push(parent.clone());
        let budget = max_n - parent.len();
        if budget < last.len() {
            continue;
        }
        // distribute k ≥ last.len() children, at least one each
        let mut counts = vec![1usize; last.len()];
        loop {
            let used: usize = counts.iter().sum();
            if used <= budget {
                let mut p = parent.clone();
                let mut next = Vec::new();
                for (i, &v) in last.iter().enumerate() {
                    for _ in 0..counts[i] {
                        next.push(p.len());
                        p.push(Some(v));
                    }
                }
                stack.push((p, next));
            }
            // odometer over counts in 1..=budget
            let mut i = 0;
            loop {
                if i == counts.len() {
                    break;
                }
                counts[i] += 1;
                if counts.iter().sum::<usize>() <= budget {
                    break;
                }
                counts[i] = 1;
                i += 1;
            }
            if i == counts.len() {
                break;
            }
        }
    }
    out.into_iter()
        .map(|p| {
            let n = p.len();
            let edges: Vec<[usize; 2]> = (1..n).map(|v| [p[v].unwrap(), v]).collect();
            RootedTree::from_edges(n, &edges, 0).unwrap()
        })
        .collect()
}
