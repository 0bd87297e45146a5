//! Reproducible sweeps: exact variance ratios across depth, and the
//! Kesten–Stigum sweep over binary symmetric channels.
//!
//! Output bytes depend only on the config: grid points run in parallel but
//! rows are emitted in canonical order, and floats use a fixed 17-digit format.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::broadcast::stream_rng;
use crate::chain::{decay_parameters, ks_parameter, TransitionChain};
use crate::error::{size_cap, Error, Result};
use crate::functions::{es_degree, EsPolynomial};
use crate::inference::census_polynomial;
use crate::operators::{random_polynomial, MomentEngine};
use crate::tree::{build_dary, RootedTree};

pub const DECAY_HEADER: [&str; 6] = ["depth", "degree", "var_ratio", "ks_param", "eps", "ref_bound"];
pub const KS_HEADER: [&str; 6] = ["delta", "ks_param", "var_ratio_prev", "var_ratio", "succ_ratio", "signal_ratio"];

/// Family of statistics evaluated at every depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionFamily {
    Census,
    /// `count` random polynomials of degree ≤ `degree` with `terms` terms each.
    RandomEs {
        degree: usize,
        seed: u64,
        #[serde(default = "one")]
        count: usize,
        #[serde(default = "default_terms")]
        terms: usize,
    },
    /// A fixed function file; its supports must be leaves at every depth swept.
    File { path: PathBuf },
}

fn one() -> usize {
    1
}

fn default_terms() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Chain file, relative to the config file's directory when loaded from disk.
    pub chain: PathBuf,
    pub d: usize,
    pub depth_min: usize,
    pub depth_max: usize,
    /// Degree-domination constant for the reference bound; defaults to `d`.
    #[serde(default)]
    pub r: Option<f64>,
    pub family: FunctionFamily,
    /// K for probes.
    #[serde(default)]
    pub k: usize,
    #[serde(default = "default_cr")]
    pub cr: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_cr() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config and resolves relative paths against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Self::from_json(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &PathBuf| if p.is_relative() { dir.join(p) } else { p.clone() };
        c.chain = resolve(&c.chain);
        if let FunctionFamily::File { path } = &mut c.family {
            *path = resolve(path);
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::ConfigInvalid("d must be at least 1".into()));
        }
        if self.depth_min == 0 || self.depth_min > self.depth_max {
            return Err(Error::ConfigInvalid(format!("bad depth range {}..={}", self.depth_min, self.depth_max)));
        }
        if let FunctionFamily::RandomEs { degree, count, .. } = self.family {
            if degree == 0 {
                return Err(Error::ConfigInvalid("degree must be at least 1".into()));
            }
            if count == 0 {
                return Err(Error::ConfigInvalid("count must be at least 1".into()));
            }
        }
        if self.cr.is_nan() || self.cr <= 0.0 || self.r.is_some_and(|r| r.is_nan() || r < 1.0) {
            return Err(Error::ConfigInvalid("cr must be positive and R at least 1".into()));
        }
        // leaves of the deepest tree
        let leaves = (self.d as f64).powi(self.depth_max as i32);
        if leaves > size_cap() as f64 {
            return Err(Error::SizeLimit { what: "leaves of the deepest tree".into(), needed: leaves, cap: size_cap() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub depth: usize,
    pub degree: usize,
    pub var_ratio: f64,
    pub ks_param: f64,
    /// Present only below the KS threshold.
    pub eps: Option<f64>,
    /// `exp(−ε ℓ)`, for reference only.
    pub ref_bound: Option<f64>,
}

/// 17 significant digits; round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn functions_at(config: &ExperimentConfig, tree: &RootedTree, chain: &TransitionChain, depth: usize) -> Result<Vec<EsPolynomial>> {
    match &config.family {
        FunctionFamily::Census => Ok(vec![census_polynomial(tree, chain)?]),
        FunctionFamily::RandomEs { degree, seed, count, terms } => Ok((0..*count)
            .map(|j| {
                let mut rng = stream_rng(*seed, (depth * count + j) as u64);
                random_polynomial(&mut rng, chain.q, &tree.leaves, *degree, *terms)
            })
            .collect()),
        FunctionFamily::File { path } => {
            let f = EsPolynomial::from_json(chain.q, &std::fs::read_to_string(path)?)?;
            for t in &f.terms {
                if let Some(&v) = t.support.iter().find(|&&v| v >= tree.n || !tree.is_leaf(v)) {
                    return Err(Error::SupportMismatch(format!("vertex {v} is not a leaf at depth {depth}")));
                }
            }
            Ok(vec![f])
        }
    }
}

/// One row per (depth, function), ascending in depth then function index.
pub fn run_decay_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let chain = TransitionChain::from_file(&config.chain)?;
    decay_sweep_with_chain(config, &chain)
}

/// `run_decay_sweep` with the chain supplied directly (the config's chain path is ignored).
pub fn decay_sweep_with_chain(config: &ExperimentConfig, chain: &TransitionChain) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let ks = ks_parameter(chain, config.d);
    let eps = if ks < 1.0 {
        decay_parameters(chain, config.d, config.r.unwrap_or(config.d as f64), config.cr).ok().map(|p| p.eps)
    } else {
        None
    };
    let per_depth = (config.depth_min..=config.depth_max)
        .into_par_iter()
        .map(|depth| {
            let tree = build_dary(config.d, depth)?;
            let engine = MomentEngine::new(&tree, chain);
            functions_at(config, &tree, chain, depth)?
                .iter()
                .map(|f| {
                    Ok(SweepRow {
                        depth,
                        degree: es_degree(f),
                        var_ratio: engine.parts(f)?.ratio(),
                        ks_param: ks,
                        eps,
                        ref_bound: eps.map(|e| (-e * depth as f64).exp()),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_depth.into_iter().flatten().collect())
}

pub fn write_decay_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECAY_HEADER)?;
    for r in rows {
        w.write_record([
            r.depth.to_string(),
            r.degree.to_string(),
            fmt_f64(r.var_ratio),
            fmt_f64(r.ks_param),
            fmt_opt(r.eps),
            fmt_opt(r.ref_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One grid point of the KS sweep (census statistic on the complete d-ary tree).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsRow {
    pub delta: f64,
    pub ks_param: f64,
    pub var_ratio_prev: f64,
    pub var_ratio: f64,
    /// `var_ratio(ℓ) / var_ratio(ℓ−1)`.
    pub succ_ratio: f64,
    /// Per-leaf growth of the root signal: `Var E[f|X_ρ]` at ℓ over ℓ−1,
    /// divided by the leaf-count growth `d`.
    pub signal_ratio: f64,
}

/// BSC(δ) sweep at depth `depth ≥ 2`; rows follow the grid order given.
pub fn run_ks_sweep(deltas: &[f64], d: usize, depth: usize) -> Result<Vec<KsRow>> {
    if d == 0 || depth < 2 {
        return Err(Error::ConfigInvalid("ks sweep needs d ≥ 1 and depth ≥ 2".into()));
    }
    if let Some(bad) = deltas.iter().find(|x| !(**x > 0.0 && **x < 0.5)) {
        return Err(Error::ConfigInvalid(format!("delta {bad} outside (0, 1/2)")));
    }
    let hi = build_dary(d, depth)?;
    let lo = build_dary(d, depth - 1)?;
    deltas
        .par_iter()
        .map(|&delta| {
            let chain = TransitionChain::bsc(delta)?;
            let parts = |t: &RootedTree| MomentEngine::new(t, &chain).parts(&census_polynomial(t, &chain)?);
            let (p0, p1) = (parts(&lo)?, parts(&hi)?);
            Ok(KsRow {
                delta,
                ks_param: ks_parameter(&chain, d),
                var_ratio_prev: p0.ratio(),
                var_ratio: p1.ratio(),
                succ_ratio: p1.ratio() / p0.ratio(),
                signal_ratio: p1.var_cond / p0.var_cond / d as f64,
            })
        })
        .collect()
}

pub fn write_ks_csv<W: Write>(rows: &[KsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KS_HEADER)?;
    for r in rows {
        w.write_record(
            [r.delta, r.ks_param, r.var_ratio_prev, r.var_ratio, r.succ_ratio, r.signal_ratio].map(fmt_f64),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Adjacent grid points `(δ_i, δ_{i+1})` between which `signal_ratio`
/// crosses 1, for a grid sorted ascending.
pub fn ks_brackets(rows: &[KsRow]) -> Vec<(f64, f64)> {
    rows.windows(2)
        .filter(|w| (w[0].signal_ratio - 1.0) * (w[1].signal_ratio - 1.0) < 0.0)
        .map(|w| (w[0].delta, w[1].delta))
        .collect()
}

/// `δ` grid `lo, lo+step, …` up to `hi` (inclusive within rounding).
pub fn delta_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}
