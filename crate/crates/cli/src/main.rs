use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use botlab_core::broadcast::{sample_batch, write_samples_csv, Labeling, RootInit};
use botlab_core::chain::{decay_parameters, ks_parameter, TransitionChain};
use botlab_core::experiment::{self, ExperimentConfig};
use botlab_core::inference::{bp_posterior, map_root};
use botlab_core::operators::{decay_probe, p_dm_operator, projection_pi, strong_projection_pt, Model, OpKind};
use botlab_core::tree::{build_dary, RootedTree, TreeFile};
use botlab_core::verify::{run_verify_suite, suite_passes, VerifyOptions};

/// Broadcasting on trees: exact inference, decay sweeps and lemma checks.
///
/// State-space caps default to 2^20 and can be raised with BOTLAB_SIZE_CAP.
#[derive(Parser)]
#[command(name = "botlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct TreeArgs {
    /// Tree JSON (`dary` or `edges`); overrides --d/--depth.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
}

impl TreeArgs {
    fn build(&self) -> Result<RootedTree> {
        Ok(match &self.tree {
            Some(p) => {
                let f: TreeFile = serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
                f.build()?
            }
            None => build_dary(self.d, self.depth)?,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorName {
    Ehat,
    E,
    D,
    Pi,
    Pt,
    Pdm,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a chain file and print its spectral summary.
    Chain {
        file: PathBuf,
        /// Branching number used for the KS parameter and decay parameters.
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        cr: f64,
    },
    /// Draw full labelings as `sample,vertex,state` CSV.
    Sample {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fix the root state instead of drawing it from π.
        #[arg(long)]
        root: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact root posterior given leaf observations.
    Bp {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact var_ratio across depths, as CSV.
    Decay {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Census statistic on BSC(δ) over a δ grid.
    KsSweep {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 0.05)]
        lo: f64,
        #[arg(long, default_value_t = 0.45)]
        hi: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the lemma checks; exits nonzero if any fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override every check's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Negative control: perturb the projection inside its check.
        #[arg(long, hide = true)]
        corrupt_projection: bool,
    },
    /// Measured contraction δ(h) of D_u(fg) on T_K(u), by height.
    Probe {
        #[arg(long = "K", default_value_t = 0)]
        k: usize,
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        /// Heights to probe (default: 1..=depth).
        #[arg(long, value_delimiter = ',')]
        heights: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump an operator matrix as `row,col,value` CSV plus a JSON sidecar.
    Operator {
        #[arg(value_enum)]
        op: OperatorName,
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long, default_value_t = 0)]
        vertex: usize,
        #[arg(long = "K", default_value_t = 0)]
        k: usize,
        /// m for P_{D_m}.
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Writes `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn load_chain(p: &Path) -> Result<TransitionChain> {
    TransitionChain::from_json(&read(p)?).with_context(|| format!("loading chain {}", p.display()))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json(out: &Option<PathBuf>, v: &impl serde::Serialize) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

/// Translate observation ids (as in the tree file) to internal ids.
fn to_internal(tree: &RootedTree, obs: &Labeling) -> Result<Labeling> {
    let mut inv = vec![usize::MAX; tree.n];
    for (internal, &orig) in tree.original_id.iter().enumerate() {
        inv[orig] = internal;
    }
    let mut pairs = Vec::new();
    for (&v, &s) in &obs.assignment {
        if v >= tree.n {
            bail!("observation names vertex {v}, tree has {} vertices", tree.n);
        }
        pairs.push((inv[v], s));
    }
    Ok(Labeling::from_pairs(pairs))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Chain { file, d, cr } => {
            let c = load_chain(&file)?;
            let ks = ks_parameter(&c, d);
            let params = if ks < 1.0 { decay_parameters(&c, d, d as f64, cr).ok() } else { None };
            write_json(
                &None,
                &json!({ "q": c.q, "pi": c.pi, "lambda": c.lambda, "d": d, "ks_param": ks,
                         "below_ks": ks < 1.0, "decay_parameters": params }),
            )?;
        }
        Cmd::Sample { chain, tree, n, seed, root, out } => {
            let c = load_chain(&chain)?;
            let t = tree.build()?;
            let init = root.map_or(RootInit::Stationary, RootInit::Fixed);
            let samples = sample_batch(&t, &c, init, seed, n)?;
            // report vertices under their file ids
            let relabeled: Vec<Vec<usize>> = samples
                .iter()
                .map(|s| {
                    let mut v = vec![0; t.n];
                    for (internal, &x) in s.iter().enumerate() {
                        v[t.original_id[internal]] = x;
                    }
                    v
                })
                .collect();
            write_samples_csv(sink(&out)?, &relabeled)?;
        }
        Cmd::Bp { chain, tree, obs, out } => {
            let c = load_chain(&chain)?;
            let t = tree.build()?;
            let o = to_internal(&t, &Labeling::from_observation_json(&read(&obs)?)?)?;
            let p = bp_posterior(&t, &c, &o)?;
            write_json(&out, &json!({ "posterior": p.probs, "map": map_root(&p), "log_evidence": p.log_evidence }))?;
        }
        Cmd::Decay { config, out } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let rows = experiment::run_decay_sweep(&cfg)?;
            let out = out.or(cfg.output.clone());
            experiment::write_decay_csv(&rows, sink(&out)?)?;
        }
        Cmd::KsSweep { d, depth, lo, hi, step, out } => {
            let rows = experiment::run_ks_sweep(&experiment::delta_grid(lo, hi, step), d, depth)?;
            experiment::write_ks_csv(&rows, sink(&out)?)?;
            for (a, b) in experiment::ks_brackets(&rows) {
                eprintln!("signal_ratio crosses 1 between delta = {a} and {b}");
            }
        }
        Cmd::Verify { seed, report, trials, corrupt_projection } => {
            let reports = run_verify_suite(seed, &VerifyOptions { trials, corrupt_projection });
            for r in &reports {
                eprintln!(
                    "{:<22} {} instances={} skipped={} max_residual={:.3e} tol={:.0e}",
                    r.check_name,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.instances,
                    r.skipped,
                    r.max_residual,
                    r.tolerance
                );
            }
            write_json(&report, &reports)?;
            if !suite_passes(&reports) {
                return Ok(1);
            }
        }
        Cmd::Probe { k, chain, tree, heights, out } => {
            let c = load_chain(&chain)?;
            let t = tree.build()?;
            let hs = if heights.is_empty() { (1..=t.depth).collect() } else { heights };
            let rep = decay_probe(&Model::new(&t, &c), k, &hs)?;
            write_json(&out, &rep)?;
        }
        Cmd::Operator { op, chain, tree, vertex, k, m, out } => {
            let c = load_chain(&chain)?;
            let t = tree.build()?;
            let model = Model::new(&t, &c);
            let (mat, name) = match op {
                OperatorName::Ehat => (model.vertex_op(vertex, OpKind::Ehat)?, "Ehat"),
                OperatorName::E => (model.vertex_op(vertex, OpKind::E)?, "E"),
                OperatorName::D => (model.vertex_op(vertex, OpKind::D)?, "D"),
                OperatorName::Pi => (projection_pi(&t, &c, vertex, k)?, "Pi"),
                OperatorName::Pt => (strong_projection_pt(&t, &c, vertex, k)?, "P_T"),
                OperatorName::Pdm => (p_dm_operator(&t, &c, vertex, m, k)?, "P_Dm"),
            };
            let csv = File::create(out.with_extension("csv"))?;
            let sidecar = File::create(out.with_extension("json"))?;
            mat.dump(BufWriter::new(csv), BufWriter::new(sidecar), name)?;
        }
    }
    Ok(0)
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
