//! Root reconstruction: exact belief propagation, MAP decisions, the census
//! statistic and Monte-Carlo correlation estimates.

use serde::{Deserialize, Serialize};

use crate::broadcast::{sample_batch, Labeling, RootInit};
use crate::chain::TransitionChain;
use crate::error::{Error, Result};
use crate::functions::EsPolynomial;
use crate::tree::RootedTree;

/// `P(X_ρ | X_L)` with the log-likelihood of the observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootPosterior {
    pub probs: Vec<f64>,
    pub log_evidence: f64,
}

/// Exact posterior of the root by upward message passing under a
/// stationary root.
pub fn bp_posterior(tree: &RootedTree, chain: &TransitionChain, leaf_obs: &Labeling) -> Result<RootPosterior> {
    let q = chain.q;
    for (&v, &s) in &leaf_obs.assignment {
        tree.check_vertex(v)?;
        if !tree.is_leaf(v) {
            return Err(Error::SupportMismatch(format!("vertex {v} is not a leaf")));
        }
        if s >= q {
            return Err(Error::InvalidState(s));
        }
    }
    let mut msg = vec![Vec::new(); tree.n];
    let mut log_z = 0.0;
    for v in (0..tree.n).rev() {
        if tree.is_leaf(v) {
            let s = leaf_obs.get(v).ok_or(Error::IncompleteObservation(v))?;
            let mut m = vec![0.0; q];
            m[s] = 1.0;
            msg[v] = m;
            continue;
        }
        let mut m = vec![1.0; q];
        for &c in &tree.children[v] {
            let mc = std::mem::take(&mut msg[c]);
            for (th, x) in m.iter_mut().enumerate() {
                *x *= chain.rows[th].iter().zip(&mc).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let z: f64 = m.iter().sum();
        if z <= 0.0 {
            return Err(Error::ZeroLikelihood);
        }
        m.iter_mut().for_each(|x| *x /= z);
        log_z += z.ln();
        msg[v] = m;
    }
    let mut post: Vec<f64> = msg[0].iter().zip(&chain.pi).map(|(a, b)| a * b).collect();
    let z: f64 = post.iter().sum();
    if z <= 0.0 {
        return Err(Error::ZeroLikelihood);
    }
    post.iter_mut().for_each(|x| *x /= z);
    Ok(RootPosterior { probs: post, log_evidence: log_z + z.ln() })
}

/// Most probable root state; ties go to the lowest index.
pub fn map_root(posterior: &RootPosterior) -> usize {
    let mut best = 0;
    for (i, &p) in posterior.probs.iter().enumerate() {
        if p > posterior.probs[best] {
            best = i;
        }
    }
    best
}

/// The census polynomial `Σ_{u ∈ L} w(x_u)`.
pub fn census_polynomial(tree: &RootedTree, chain: &TransitionChain) -> Result<EsPolynomial> {
    let (_, w) = chain.second_eigenvector()?;
    Ok(EsPolynomial::linear(chain.q, &tree.leaves, &w))
}

/// Census statistic of an observation.
pub fn census_estimator(tree: &RootedTree, chain: &TransitionChain, leaf_obs: &Labeling) -> Result<f64> {
    let (_, w) = chain.second_eigenvector()?;
    let mut total = 0.0;
    for &l in &tree.leaves {
        let s = leaf_obs.get(l).ok_or(Error::IncompleteObservation(l))?;
        total += w.get(s).copied().ok_or(Error::InvalidState(s))?;
    }
    Ok(total)
}

/// Monte-Carlo estimate of `Corr(estimator(X), w(X_ρ))` and its standard
/// error; `estimator` receives the full state vector of a sample.
pub fn mc_correlation(
    tree: &RootedTree,
    chain: &TransitionChain,
    estimator: &(dyn Fn(&[usize]) -> f64 + Sync),
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::ConfigInvalid("need at least one trial".into()));
    }
    let (_, w) = chain.second_eigenvector()?;
    let samples = sample_batch(tree, chain, RootInit::Stationary, seed, trials)?;
    let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (estimator(s), w[s[0]])).collect();
    let n = trials as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    let r = if saa <= 1e-12 * n * (1.0 + ma * ma) || sbb <= 0.0 { 0.0 } else { sab / (saa * sbb).sqrt() };
    let stderr = if trials > 1 { (1.0 - r * r) / (n - 1.0).sqrt() } else { f64::INFINITY };
    Ok((r, stderr))
}
