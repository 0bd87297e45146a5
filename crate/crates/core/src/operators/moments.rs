use rayon::prelude::*;
use serde::Serialize;

use crate::broadcast::{conditional_kernel, mix_rows};
use crate::chain::TransitionChain;
use crate::error::{Error, Result};
use crate::functions::{EsPolynomial, LocalFunction};
use crate::tensor::lift;
use crate::tree::RootedTree;

/// Exact second moments of Efron–Stein polynomials under the stationary
/// broadcast law, by pairwise expansion over terms.
pub struct MomentEngine<'a> {
    pub tree: &'a RootedTree,
    pub chain: &'a TransitionChain,
    powers: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct VarianceParts {
    pub mean: f64,
    /// `Var[E[f | X_ρ]]`.
    pub var_cond: f64,
    /// `Var[f]`.
    pub var_total: f64,
}

impl VarianceParts {
    pub fn ratio(&self) -> f64 {
        (self.var_cond / self.var_total).clamp(0.0, 1.0)
    }
}

impl<'a> MomentEngine<'a> {
    pub fn new(tree: &'a RootedTree, chain: &'a TransitionChain) -> Self {
        let powers = (0..=2 * tree.depth + 1).map(|k| chain.power(k)).collect();
        MomentEngine { tree, chain, powers }
    }

    /// `E[φ_S | X_ρ = θ]` for every θ.
    pub fn cond_root(&self, t: &LocalFunction) -> Result<Vec<f64>> {
        let q = self.chain.q;
        match t.support.as_slice() {
            [] => Ok(vec![t.table[0]; q]),
            [a] => {
                let m = &self.powers[self.tree.layer[*a]];
                Ok((0..q).map(|th| (0..q).map(|x| m[th * q + x] * t.table[x]).sum()).collect())
            }
            s => {
                let k = conditional_kernel(self.tree, self.chain, 0, s)?;
                let w = t.table.len();
                Ok((0..q).map(|th| crate::tensor::dot(&k[th * w..(th + 1) * w], &t.table)).collect())
            }
        }
    }

    fn pair_law(&self, u: usize, v: usize) -> Vec<f64> {
        let q = self.chain.q;
        let w = self.tree.nearest_common_ancestor(u, v);
        let a = &self.powers[self.tree.layer[u] - self.tree.layer[w]];
        let b = &self.powers[self.tree.layer[v] - self.tree.layer[w]];
        let mut out = vec![0.0; q * q];
        for c in 0..q {
            let p = self.chain.pi[c];
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

    /// `E[φ_S φ_T]`.
    pub fn cross(&self, s: &LocalFunction, t: &LocalFunction) -> Result<f64> {
        let q = self.chain.q;
        let mut u = s.support.clone();
        u.extend(&t.support);
        u.sort_unstable();
        u.dedup();
        let law = match u.as_slice() {
            [] => vec![1.0],
            [_] => self.chain.pi.clone(),
            [a, b] => self.pair_law(*a, *b),
            _ => mix_rows(&conditional_kernel(self.tree, self.chain, 0, &u)?, &self.chain.pi),
        };
        if let ([x0], [y0]) = (s.support.as_slice(), t.support.as_slice()) {
            if x0 != y0 {
                // distinct singletons: law is indexed (min, max)
                let (fa, fb) = if x0 < y0 { (&s.table, &t.table) } else { (&t.table, &s.table) };
                let mut acc = 0.0;
                for x in 0..q {
                    for y in 0..q {
                        acc += law[x * q + y] * fa[x] * fb[y];
                    }
                }
                return Ok(acc);
            }
        }
        let ls = lift(&s.table, q, &s.support, &u);
        let lt = lift(&t.table, q, &t.support, &u);
        Ok(law.iter().zip(ls.iter().zip(&lt)).map(|(p, (a, b))| p * a * b).sum())
    }

    pub fn expectation(&self, t: &LocalFunction) -> Result<f64> {
        let g = self.cond_root(t)?;
        Ok(crate::tensor::dot(&g, &self.chain.pi))
    }

    /// Mean and variances of `f`. Each term is centred by its own mean
    /// first, so constants drop out exactly and no `E[f²] − (E f)²`
    /// cancellation occurs.
    pub fn parts(&self, f: &EsPolynomial) -> Result<VarianceParts> {
        let q = self.chain.q;
        let pi = &self.chain.pi;
        let conds = f.terms.par_iter().map(|t| self.cond_root(t)).collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = conds.iter().map(|c| crate::tensor::dot(c, pi)).collect();
        let mean: f64 = means.iter().sum();
        let mut g = vec![0.0; q];
        for (c, m) in conds.iter().zip(&means) {
            g.iter_mut().zip(c).for_each(|(a, b)| *a += b - m);
        }
        let var_cond: f64 = g.iter().zip(pi).map(|(x, p)| p * x * x).sum();
        let centred: Vec<LocalFunction> = f
            .terms
            .iter()
            .zip(&means)
            .filter(|(t, _)| !t.support.is_empty())
            .map(|(t, m)| LocalFunction { support: t.support.clone(), table: t.table.iter().map(|x| x - m).collect() })
            .collect();
        let rows = (0..centred.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = self.cross(&centred[i], &centred[i])?;
                for j in i + 1..centred.len() {
                    acc += 2.0 * self.cross(&centred[i], &centred[j])?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(VarianceParts { mean, var_cond, var_total: rows.iter().sum() })
    }

    /// `Σ_i Var[t_i]` over the terms: the scale against which cancellation
    /// in `Var[f]` is judged.
    fn term_variance_sum(&self, f: &EsPolynomial) -> Result<f64> {
        f.terms
            .par_iter()
            .filter(|t| !t.support.is_empty())
            .map(|t| {
                let m = self.expectation(t)?;
                let c = LocalFunction { support: t.support.clone(), table: t.table.iter().map(|x| x - m).collect() };
                self.cross(&c, &c)
            })
            .sum()
    }
}

/// `Var[E[f | X_ρ]] / Var[f]` under the stationary broadcast law.
pub fn var_ratio(tree: &RootedTree, chain: &TransitionChain, f: &EsPolynomial) -> Result<f64> {
    var_ratio_with(&MomentEngine::new(tree, chain), f)
}

pub fn var_ratio_with(engine: &MomentEngine, f: &EsPolynomial) -> Result<f64> {
    let p = engine.parts(f)?;
    if p.var_total <= 0.0 || p.var_total <= 1e-13 * engine.term_variance_sum(f)? {
        return Err(Error::ZeroVariance);
    }
    Ok(p.ratio())
}
