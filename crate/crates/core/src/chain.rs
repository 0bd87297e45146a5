//! Channel analytics: validation, stationary law, spectrum, and the
//! epsilon-family of decay parameters used below the Kesten–Stigum line.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-9;

/// An ergodic q-state transition matrix together with its spectral data.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionChain {
    pub q: usize,
    pub rows: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub lambda: f64,
    pub ergodic: bool,
}

/// On-disk chain description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub q: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Parameters derived from the gap between `max(d λ², λ)` and 1.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DecayParameters {
    pub eps: f64,
    pub lambda_eps: f64,
    pub lambda_tilde_eps: f64,
    pub kappa: f64,
    pub h_diamond: u64,
    pub m: u64,
    pub cr: f64,
}

impl TransitionChain {
    /// Binary symmetric channel with flip probability `delta`.
    pub fn bsc(delta: f64) -> Result<Self> {
        validate_chain(&[vec![1.0 - delta, delta], vec![delta, 1.0 - delta]])
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ChainFile = serde_json::from_str(text)?;
        if file.rows.len() != file.q {
            return Err(Error::NonStochastic(format!(
                "declared q={} but {} rows",
                file.q,
                file.rows.len()
            )));
        }
        validate_chain(&file.rows)
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile { q: self.q, rows: self.rows.clone() }
    }

    #[inline]
    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.rows[a][b]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.q, self.q, |i, j| self.rows[i][j])
    }

    /// Row-major `M^k`.
    pub fn power(&self, k: usize) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![0.0; q * q];
        for i in 0..q {
            out[i * q + i] = 1.0;
        }
        for _ in 0..k {
            let mut next = vec![0.0; q * q];
            for i in 0..q {
                for c in 0..q {
                    let a = out[i * q + c];
                    if a == 0.0 {
                        continue;
                    }
                    for j in 0..q {
                        next[i * q + j] += a * self.rows[c][j];
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Relabel states: new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..self.q)
            .map(|i| (0..self.q).map(|j| self.rows[perm[i]][perm[j]]).collect())
            .collect();
        validate_chain(&rows)
    }

    /// Right eigenvector of the second eigenvalue, mean zero and unit norm
    /// under π. Returns `(eigenvalue, w)`.
    pub fn second_eigenvector(&self) -> Result<(f64, Vec<f64>)> {
        let eig = nonprincipal_eigenvalues(&self.matrix());
        let lam = self.lambda;
        if lam < 1e-12 {
            return Err(Error::DegenerateSpectrum);
        }
        let mut best: Option<f64> = None;
        for z in eig.iter().filter(|z| (z.norm() - lam).abs() <= 1e-9 * lam.max(1.0)) {
            if z.im.abs() <= 1e-9 {
                best = Some(match best {
                    Some(b) if b >= z.re => b,
                    _ => z.re,
                });
            }
        }
        let mu = best.ok_or(Error::ComplexEigenvector)?;
        let q = self.q;
        let a = self.matrix() - DMatrix::identity(q, q) * mu;
        let svd = a.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut w: Vec<f64> = (0..q).map(|j| vt[(idx, j)]).collect();
        let mean: f64 = w.iter().zip(&self.pi).map(|(a, b)| a * b).sum();
        for x in w.iter_mut() {
            *x -= mean;
        }
        let norm: f64 = w.iter().zip(&self.pi).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
        if norm < 1e-14 {
            return Err(Error::DegenerateSpectrum);
        }
        let sign = w.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        for x in w.iter_mut() {
            *x *= sign / norm;
        }
        Ok((mu, w))
    }
}

/// Validate a row-stochastic table and compute stationary law and spectrum.
pub fn validate_chain(rows: &[Vec<f64>]) -> Result<TransitionChain> {
    let q = rows.len();
    if q < 2 {
        return Err(Error::NonStochastic(format!("need q >= 2, got {q}")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != q {
            return Err(Error::NonStochastic(format!("row {i} has {} entries", row.len())));
        }
        if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0 || **x > 1.0 + ROW_TOL) {
            return Err(Error::NonStochastic(format!("row {i} has entry {x}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_TOL {
            return Err(Error::NonStochastic(format!("row {i} sums to {s}")));
        }
    }
    if !is_primitive(rows) {
        return Err(Error::NotErgodic);
    }
    let m = DMatrix::from_fn(q, q, |i, j| rows[i][j]);
    let pi = stationary(&m)?;
    let lambda = nonprincipal_eigenvalues(&m)
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    Ok(TransitionChain { q, rows: rows.to_vec(), pi, lambda, ergodic: true })
}

/// Strict positivity of some power `M^t`, `t ≤ q² − 2q + 2` (Wielandt).
fn is_primitive(rows: &[Vec<f64>]) -> bool {
    let q = rows.len();
    let base: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|&x| x > 0.0).collect()).collect();
    let mut cur = base.clone();
    let bound = q * q - 2 * q + 2;
    for _ in 1..=bound {
        if cur.iter().all(|r| r.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; q]; q];
        for i in 0..q {
            for c in 0..q {
                if cur[i][c] {
                    for j in 0..q {
                        next[i][j] |= base[c][j];
                    }
                }
            }
        }
        cur = next;
    }
    cur.iter().all(|r| r.iter().all(|&b| b))
}

fn stationary(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let q = m.nrows();
    let mut a = m.transpose() - DMatrix::identity(q, q);
    for j in 0..q {
        a[(q - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(q);
    b[q - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::NotErgodic)?;
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= s;
    }
    Ok(pi)
}

/// Full spectrum minus the one eigenvalue closest to 1.
fn nonprincipal_eigenvalues(m: &DMatrix<f64>) -> Vec<nalgebra::Complex<f64>> {
    let mut eig: Vec<_> = m.clone().complex_eigenvalues().iter().cloned().collect();
    let (idx, _) = eig
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - nalgebra::Complex::new(1.0, 0.0)).norm()))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    eig.remove(idx);
    eig
}

/// The Kesten–Stigum parameter `d λ²`.
pub fn ks_parameter(chain: &TransitionChain, d: usize) -> f64 {
    d as f64 * chain.lambda * chain.lambda
}

/// Solve `sqrt(max(d x², x)) = t` for `x`.
fn solve_gap(t: f64, d: f64) -> f64 {
    let x = t * t;
    if x <= 1.0 / d {
        x
    } else {
        t / d.sqrt()
    }
}

pub fn decay_parameters(chain: &TransitionChain, d: usize, r: f64, cr: f64) -> Result<DecayParameters> {
    let ks = ks_parameter(chain, d);
    if ks >= 1.0 {
        return Err(Error::AboveThreshold(ks));
    }
    let lam = chain.lambda;
    if lam <= 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let df = d as f64;
    let base = (df * lam * lam).max(lam);
    let eps = -0.5 * base.ln() / 1.2;
    let lambda_eps = solve_gap((-1.1 * eps).exp(), df);
    let lambda_tilde_eps = solve_gap((-1.15 * eps).exp(), df);
    let kappa = (lambda_eps / lambda_tilde_eps).powf(1.0 / 6.0) - 1.0;
    let scale = cr * (r.ln() + 1.0);
    let slope = eps / (10.0 * df);
    let h_diamond = (scale + slope * scale).ceil().max(0.0) as u64;
    let m = (slope * scale).floor().max(0.0) as u64;
    Ok(DecayParameters { eps, lambda_eps, lambda_tilde_eps, kappa, h_diamond, m, cr })
}

/// Max-norm operator norm of `f ↦ M^k f` on π-mean-zero functions.
pub fn markov_decay_probe(chain: &TransitionChain, k: usize) -> f64 {
    let q = chain.q;
    let mk = chain.power(k);
    let pi = &chain.pi;
    // For each row r, maximise r·f over |f|≤1, π·f = 0: start at f = −1 and
    // raise coordinates in order of r_j/π_j (fractional knapsack).
    let mut order: Vec<usize> = (0..q).collect();
    let mut best = 0.0_f64;
    for i in 0..q {
        let r = &mk[i * q..(i + 1) * q];
        order.sort_by(|&a, &b| (r[b] / pi[b]).partial_cmp(&(r[a] / pi[a])).unwrap());
        let mut need = 1.0;
        let mut val: f64 = -r.iter().sum::<f64>();
        for &j in &order {
            if need <= 0.0 {
                break;
            }
            let t = (need / (2.0 * pi[j])).min(1.0);
            val += 2.0 * t * r[j];
            need -= 2.0 * t * pi[j];
        }
        best = best.max(val.abs());
    }
    best
}
