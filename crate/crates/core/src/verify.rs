//! Randomized property checks for the algebraic identities and measured
//! inequalities behind the operator calculus.
//!
//! Every check is deterministic in `(seed, trials)`: trial `i` draws from
//! its own counter-based stream, trials run in parallel, and the reduction
//! keeps the first worst instance so reports are byte-identical across runs.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::broadcast::stream_rng;
use crate::chain::{validate_chain, TransitionChain};
use crate::error::Result;
use crate::functions::{tensor_identify, tk_basis, to_dense, DenseFunction, EsPolynomial};
use crate::linalg::{lstsq_residual, orthonormalizer, GRAM_CUTOFF};
use crate::operators::{
    antichain_tensor, contraction_constant, decompose_f, ehat_between, norm_eval, p_dm_apply, r_space_basis,
    random_polynomial, LinearMapMatrix, Model, NormKind, OpKind, Projector, StrongProjector,
};
use crate::tensor::kron;
use crate::tree::RootedTree;

/// Outcome of one check over all of its trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub instances: usize,
    pub skipped: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    /// Descriptor of the worst instance (enough to replay it).
    pub worst_case: Value,
    pub pass: bool,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Overrides every check's default trial count.
    pub trials: Option<usize>,
    /// Negative control: perturb `Π` inside the projection check.
    pub corrupt_projection: bool,
}

pub const TOL_TOWER: f64 = 1e-11;
pub const TOL_SUBMULT: f64 = 1e-9;
pub const TOL_TELESCOPING: f64 = 1e-12;
pub const TOL_PROJECTIONS: f64 = 1e-9;
pub const TOL_DECOMPOSITION: f64 = 1e-9;
pub const TOL_NORMS: f64 = 1e-9;

enum Outcome {
    Done(f64, Value),
    Skipped,
}

fn run_trials<F>(name: &str, seed: u64, salt: u64, trials: usize, tol: f64, f: F) -> CheckReport
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Outcome> + Sync,
{
    let base = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let outcomes: Vec<(usize, Outcome)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(base, i as u64);
            let o = f(i, &mut rng).unwrap_or_else(|e| Outcome::Done(f64::INFINITY, json!({ "error": e.to_string() })));
            (i, o)
        })
        .collect();
    let mut instances = 0;
    let mut skipped = 0;
    let mut max_residual = 0.0_f64;
    let mut worst_case = Value::Null;
    for (i, o) in outcomes {
        match o {
            Outcome::Skipped => skipped += 1,
            Outcome::Done(r, desc) => {
                instances += 1;
                let r = if r.is_nan() { f64::INFINITY } else { r };
                if worst_case.is_null() || r > max_residual {
                    max_residual = max_residual.max(r);
                    worst_case = json!({ "trial": i, "seed": seed, "residual": finite(r), "instance": desc });
                }
            }
        }
    }
    CheckReport {
        check_name: name.to_string(),
        instances,
        skipped,
        max_residual: finite(max_residual),
        tolerance: tol,
        worst_case,
        pass: max_residual <= tol,
    }
}

/// JSON has no infinity; saturate instead.
fn finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

// ---------------------------------------------------------------------------
// random instances

/// Random ergodic chain; with `zeros`, each row may lose one entry.
pub fn random_chain<R: Rng>(rng: &mut R, q: usize, zeros: bool) -> TransitionChain {
    loop {
        let rows: Vec<Vec<f64>> = (0..q)
            .map(|_| {
                let mut r: Vec<f64> = (0..q).map(|_| rng.gen_range(0.05..1.0)).collect();
                if zeros && rng.gen_bool(0.4) {
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

/// Random two-state chain with `d λ² < bound`.
fn random_chain_below<R: Rng>(rng: &mut R, d: usize, bound: f64) -> TransitionChain {
    loop {
        let c = random_chain(rng, 2, false);
        if d as f64 * c.lambda * c.lambda < bound {
            return c;
        }
    }
}

/// Random tree of the given depth with leaves on one layer: every vertex
/// above the last layer gets 1..=`max_children` children, subject to at
/// most `max_leaves` leaves.
pub fn random_tree<R: Rng>(rng: &mut R, depth: usize, max_children: usize, max_leaves: usize) -> RootedTree {
    let mut edges = Vec::new();
    let mut layer = vec![0usize];
    let mut n = 1;
    for _ in 0..depth {
        let mut next = Vec::new();
        let mut budget = max_leaves.saturating_sub(layer.len());
        for &v in &layer {
            let extra = rng.gen_range(0..max_children).min(budget);
            budget -= extra;
            for _ in 0..=extra {
                edges.push([v, n]);
                next.push(n);
                n += 1;
            }
        }
        layer = next;
    }
    RootedTree::from_edges(n, &edges, 0).expect("layered construction")
}

/// Random antichain obtained from `start` by replacing random non-leaf
/// members with their children, `steps` times.
fn refine<R: Rng>(rng: &mut R, tree: &RootedTree, start: &[usize], steps: usize, keep_internal: bool) -> Vec<usize> {
    let mut a = start.to_vec();
    for _ in 0..steps {
        let candidates: Vec<usize> = a
            .iter()
            .copied()
            .filter(|&v| !tree.is_leaf(v) && (!keep_internal || tree.height[v] >= 2))
            .collect();
        if candidates.is_empty() {
            break;
        }
        let v = candidates[rng.gen_range(0..candidates.len())];
        a.retain(|&x| x != v);
        a.extend(&tree.children[v]);
    }
    a.sort_unstable();
    a
}

fn random_dense<R: Rng>(rng: &mut R, q: usize, domain: &[usize]) -> DenseFunction {
    let n = q.pow(domain.len() as u32);
    DenseFunction { q, domain: domain.to_vec(), values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() }
}

fn describe(tree: &RootedTree, chain: &TransitionChain) -> Value {
    json!({ "parents": tree.parent, "rows": chain.rows })
}

fn wdot(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    a.iter().zip(b).zip(p).map(|((x, y), w)| x * y * w).sum()
}

// ---------------------------------------------------------------------------
// tower identities

/// `E_v` with the scalar output repeated for every state of `v`.
fn lifted_expectation(model: &Model, v: usize) -> Result<LinearMapMatrix> {
    let l = model.vertex_law(v)?;
    let q = model.q();
    let entries: Vec<f64> = (0..q).flat_map(|_| l.law.iter().copied()).collect();
    LinearMapMatrix::new(q, l.leaves.clone(), vec![v], entries)
}

/// `Σ_{A′ ⊆ A} (⊗_{A′} D)(⊗_{A∖A′} E)`, which equals `Ê_A`.
pub fn difference_expansion(model: &Model, a: &[usize]) -> Result<LinearMapMatrix> {
    let mut a = a.to_vec();
    a.sort_unstable();
    model.tree.is_antichain(&a)?;
    let mut total: Option<LinearMapMatrix> = None;
    for mask in 0..(1usize << a.len()) {
        let factors = a
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask >> i & 1 == 1 { model.vertex_op(v, OpKind::D) } else { lifted_expectation(model, v) })
            .collect::<Result<Vec<_>>>()?;
        let term = LinearMapMatrix::kron_all(model.q(), &factors)?;
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term, 1.0)?,
        });
    }
    Ok(total.expect("at least the empty subset"))
}

pub fn check_tower(seed: u64, trials: usize) -> CheckReport {
    run_trials("tower", seed, 1, trials, TOL_TOWER, |_, rng| {
        let q = rng.gen_range(2..=3);
        let zeros = rng.gen_bool(0.3);
        let chain = random_chain(rng, q, zeros);
        let depth = rng.gen_range(2..=3);
        let tree = random_tree(rng, depth, 3, if q == 2 { 8 } else { 5 });
        let model = Model::new(&tree, &chain);
        let (s1, s2) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let upper = refine(rng, &tree, &[0], s1, false);
        let lower = refine(rng, &tree, &upper, s2, false);

        // Ê_{A′} ∘ Ê_A = Ê_{A′}
        let ops = |a: &[usize]| a.iter().map(|&v| (v, OpKind::Ehat)).collect::<Vec<_>>();
        let direct = antichain_tensor(&model, &ops(&upper))?;
        let via = ehat_between(&model, &upper, &lower)?.compose(&antichain_tensor(&model, &ops(&lower))?)?;
        let tower = via.max_abs_diff(&direct);

        // E_u f = E_v f for v below u
        let v = rng.gen_range(1..tree.n);
        let u = tree.anc(v, rng.gen_range(1..=tree.layer[v]))?;
        let f = random_dense(rng, q, tree.leaves_under(v));
        let ev = model.vertex_op(v, OpKind::E)?.apply(&f.values)[0];
        let eu = model.vertex_op(u, OpKind::E)?.apply(&f.lift_to(tree.leaves_under(u))?.values)[0];
        let nested = (ev - eu).abs();

        // E_u[D_u f] = 0
        let d = model.vertex_op(u, OpKind::D)?;
        let mean_d = (0..d.ncols)
            .map(|c| (0..q).map(|th| chain.pi[th] * d.get(th, c)).sum::<f64>().abs())
            .fold(0.0, f64::max);

        // Ê_A = Σ (⊗D)(⊗E) for |A| ≤ 4
        let expansion = if lower.len() <= 4 {
            difference_expansion(&model, &lower)?.max_abs_diff(&antichain_tensor(&model, &ops(&lower))?)
        } else {
            0.0
        };
        let r = tower.max(nested).max(mean_d).max(expansion);
        Ok(Outcome::Done(
            r,
            json!({
                "model": describe(&tree, &chain), "upper": upper, "lower": lower, "u": u, "v": v,
                "tower": tower, "nested": nested, "mean_of_difference": mean_d, "expansion": expansion,
            }),
        ))
    })
}

// ---------------------------------------------------------------------------
// submultiplicativity of tensorized bilinear maps and forms

fn random_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn kron_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

fn kron_vec(parts: &[Vec<f64>]) -> Vec<f64> {
    parts.iter().fold(vec![1.0], |acc, p| kron(&acc, p))
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(x);
    (v.transpose() * m * &v)[(0, 0)]
}

fn bilin(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let a = nalgebra::DVector::from_column_slice(x);
    let b = nalgebra::DVector::from_column_slice(y);
    (a.transpose() * m * b)[(0, 0)]
}

fn top_singular(m: &DMatrix<f64>) -> (f64, Vec<f64>, Vec<f64>) {
    // via the symmetric eigenproblem of MᵀM (small, well conditioned)
    let mtm = m.transpose() * m;
    let eig = nalgebra::SymmetricEigen::new(mtm);
    let (k, &l) = eig.eigenvalues.iter().enumerate().fold((0, &f64::MIN), |b, x| if x.1 > b.1 { x } else { b });
    let s = l.max(0.0).sqrt();
    let w: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let mv = m * nalgebra::DVector::from_column_slice(&w);
    let v: Vec<f64> = if s > 0.0 { mv.iter().map(|x| x / s).collect() } else { vec![0.0; m.nrows()] };
    (s, v, w)
}

/// One factor of the bilinear lemma: PSD forms on both sides and a family
/// of bilinear maps `L_a` vanishing on the radicals.
struct BilinearFactor {
    e_plus: DMatrix<f64>,
    e_minus: DMatrix<f64>,
    maps: Vec<DMatrix<f64>>,
}

fn bilinear_factor<R: Rng>(rng: &mut R) -> BilinearFactor {
    if rng.gen_bool(0.1) {
        let n = rng.gen_range(1..=5);
        let i = DMatrix::identity(n, n);
        return BilinearFactor { e_plus: i.clone(), e_minus: i.clone(), maps: vec![i] };
    }
    let (np, nm) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    let (rp, rm) = (rng.gen_range(1..=np), rng.gen_range(1..=nm));
    let p = random_matrix(rng, np, rp);
    let qm = random_matrix(rng, nm, rm);
    let maps = (0..rng.gen_range(1..=3)).map(|_| &p * random_matrix(rng, rp, rm) * qm.transpose()).collect();
    BilinearFactor { e_plus: &p * p.transpose(), e_minus: &qm * qm.transpose(), maps }
}

/// Measured `δ = max_a ‖C₊ᵀ L_a C₋‖₂`, with the extremal map and vectors.
fn bilinear_delta(f: &BilinearFactor) -> (f64, usize, Vec<f64>, Vec<f64>) {
    let cp = orthonormalizer(&f.e_plus, GRAM_CUTOFF);
    let cm = orthonormalizer(&f.e_minus, GRAM_CUTOFF);
    let mut best = (0.0, 0, vec![0.0; f.e_plus.nrows()], vec![0.0; f.e_minus.nrows()]);
    for (a, l) in f.maps.iter().enumerate() {
        let m = cp.transpose() * l * &cm;
        let (s, v, w) = top_singular(&m);
        if s >= best.0 {
            let x: Vec<f64> = (&cp * nalgebra::DVector::from_column_slice(&v)).iter().copied().collect();
            let y: Vec<f64> = (&cm * nalgebra::DVector::from_column_slice(&w)).iter().copied().collect();
            best = (s, a, x, y);
        }
    }
    best
}

/// One factor of the quadratic lemma: `E = AᵀA` and `L` preserving the radical.
fn quadratic_factor<R: Rng>(rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rng.gen_range(1..=5);
    if rng.gen_bool(0.1) {
        return (DMatrix::identity(n, n), DMatrix::identity(n, n));
    }
    let r = rng.gen_range(1..=n);
    let a = random_matrix(rng, r, n);
    let a_pinv = a.transpose() * (&a * a.transpose()).try_inverse().expect("random full row rank");
    let proj = &a_pinv * &a;
    let l = &a_pinv * random_matrix(rng, r, r) * &a + (DMatrix::identity(n, n) - proj) * random_matrix(rng, n, n);
    (a.transpose() * a, l)
}

pub fn check_submultiplicativity(seed: u64, trials: usize) -> CheckReport {
    run_trials("submultiplicativity", seed, 2, trials, TOL_SUBMULT, |_, rng| {
        let k = rng.gen_range(1..=3);
        // bilinear version
        let factors: Vec<BilinearFactor> = (0..k).map(|_| bilinear_factor(rng)).collect();
        let deltas: Vec<(f64, usize, Vec<f64>, Vec<f64>)> = factors.iter().map(bilinear_delta).collect();
        let bound: f64 = deltas.iter().map(|d| d.0).product();
        let ep = factors.iter().skip(1).fold(factors[0].e_plus.clone(), |acc, f| kron_mat(&acc, &f.e_plus));
        let em = factors.iter().skip(1).fold(factors[0].e_minus.clone(), |acc, f| kron_mat(&acc, &f.e_minus));
        let mut inputs: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|_| {
                let x: Vec<f64> = (0..ep.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..em.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (x, y)
            })
            .collect();
        inputs.push((
            kron_vec(&deltas.iter().map(|d| d.2.clone()).collect::<Vec<_>>()),
            kron_vec(&deltas.iter().map(|d| d.3.clone()).collect::<Vec<_>>()),
        ));
        // all index tuples (a_1, …, a_k)
        let mut tuples: Vec<Vec<usize>> = vec![vec![]];
        for f in &factors {
            tuples = tuples.into_iter().flat_map(|t| (0..f.maps.len()).map(move |a| [t.clone(), vec![a]].concat())).collect();
        }
        let tensor_maps: Vec<DMatrix<f64>> = tuples
            .iter()
            .map(|t| factors.iter().zip(t).skip(1).fold(factors[0].maps[t[0]].clone(), |acc, (f, &a)| kron_mat(&acc, &f.maps[a])))
            .collect();
        let mut worst_bilinear = f64::MIN;
        let mut tight = 0.0_f64;
        for (x, y) in &inputs {
            let lhs = tensor_maps.iter().map(|m| bilin(m, x, y).abs()).fold(0.0, f64::max);
            let rhs = bound * quad(&ep, x).max(0.0).sqrt() * quad(&em, y).max(0.0).sqrt();
            let scale = rhs.max(1.0);
            worst_bilinear = worst_bilinear.max((lhs - rhs) / scale);
            tight = tight.max(lhs / rhs.max(1e-300));
        }

        // quadratic-form version
        let quads: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..k).map(|_| quadratic_factor(rng)).collect();
        let qdeltas: Vec<(f64, Vec<f64>)> = quads
            .iter()
            .map(|(e, l)| {
                let c = orthonormalizer(e, GRAM_CUTOFF);
                let m = c.transpose() * l.transpose() * e * l * &c;
                let eig = nalgebra::SymmetricEigen::new((&m + m.transpose()) * 0.5);
                let (i, &top) = eig.eigenvalues.iter().enumerate().fold((0, &f64::MIN), |b, x| if x.1 > b.1 { x } else { b });
                let v = &c * eig.eigenvectors.column(i);
                (top.max(0.0), v.iter().copied().collect())
            })
            .collect();
        let qbound: f64 = qdeltas.iter().map(|d| d.0).product();
        let e_all = quads.iter().skip(1).fold(quads[0].0.clone(), |acc, f| kron_mat(&acc, &f.0));
        let l_all = quads.iter().skip(1).fold(quads[0].1.clone(), |acc, f| kron_mat(&acc, &f.1));
        let mut probes: Vec<Vec<f64>> = (0..3).map(|_| (0..e_all.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        probes.push(kron_vec(&qdeltas.iter().map(|d| d.1.clone()).collect::<Vec<_>>()));
        let mut worst_quad = f64::MIN;
        for x in &probes {
            let lx: Vec<f64> = (&l_all * nalgebra::DVector::from_column_slice(x)).iter().copied().collect();
            let lhs = quad(&e_all, &lx);
            let rhs = qbound * quad(&e_all, x);
            worst_quad = worst_quad.max((lhs - rhs) / rhs.abs().max(1.0));
        }
        let r = worst_bilinear.max(worst_quad).max(0.0);
        Ok(Outcome::Done(
            r,
            json!({
                "k": k,
                "deltas": deltas.iter().map(|d| d.0).collect::<Vec<_>>(),
                "bilinear_excess": worst_bilinear,
                "quadratic_deltas": qdeltas.iter().map(|d| d.0).collect::<Vec<_>>(),
                "quadratic_excess": worst_quad,
                "tightness": tight,
            }),
        ))
    })
}

// ---------------------------------------------------------------------------
// telescoping identity

/// Right-hand side of `⊗_t c_t = ⊗_t a_t + Σ_t (⊗_{s<t} c_s) ⊗ b_t ⊗ (⊗_{s>t} a_s)`
/// with `c_t = a_t + b_t`.
pub fn telescoping_rhs(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> DMatrix<f64> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let c: Vec<DMatrix<f64>> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let prod = |ms: &[DMatrix<f64>]| ms.iter().fold(one.clone(), |acc, m| kron_mat(&acc, m));
    let mut total = prod(a);
    for t in 0..a.len() {
        let term = kron_mat(&kron_mat(&prod(&c[..t]), &b[t]), &prod(&a[t + 1..]));
        total += term;
    }
    total
}

pub fn check_telescoping(seed: u64, trials: usize) -> CheckReport {
    run_trials("telescoping", seed, 3, trials, TOL_TELESCOPING, |i, rng| {
        let (a, b): (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) = if i == 0 {
            let s = |x: f64| DMatrix::from_element(1, 1, x);
            (vec![s(1.0), s(2.0)], vec![s(3.0), s(4.0)])
        } else {
            let k = rng.gen_range(1..=4);
            (0..k)
                .map(|_| {
                    let (r, c) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
                    (random_matrix(rng, r, c), random_matrix(rng, r, c))
                })
                .unzip()
        };
        let one = DMatrix::from_element(1, 1, 1.0);
        let lhs = a.iter().zip(&b).fold(one, |acc, (x, y)| kron_mat(&acc, &(x + y)));
        let rhs = telescoping_rhs(&a, &b);
        let r = (lhs - rhs).abs().max();
        Ok(Outcome::Done(r, json!({ "factors": a.len(), "shapes": a.iter().map(|m| m.shape()).collect::<Vec<_>>() })))
    })
}

// ---------------------------------------------------------------------------
// projections

/// Residuals of `Π`, `Γ_θ`/`P_T` and the R-space construction at one vertex.
fn projection_residuals(model: &Model, u: usize, kk: usize, rng: &mut ChaCha8Rng, corrupt: bool) -> Result<Value> {
    let tree = model.tree;
    let q = model.q();
    let p = Projector::new(model, u, kk)?;
    let law = p.law.law.clone();
    let basis = tk_basis(tree, q, u, kk, None)?;
    let mut pi1 = 0.0_f64;
    let mut pi2 = 0.0_f64;
    let mut fixed = 0.0_f64;
    let mut strong = 0.0_f64;
    let mut shrink = 0.0_f64;
    let sp = StrongProjector::new(model, u, kk)?;
    let n = law.len();
    for _ in 0..4 {
        let f = random_dense(rng, q, p.domain());
        let mut pf = p.apply(&f.values);
        if corrupt {
            pf.iter_mut().for_each(|x| *x += 1e-3);
        }
        for g in &basis.vectors {
            let d: Vec<f64> = pf.iter().zip(&f.values).map(|(a, b)| a - b).collect();
            pi1 = pi1.max(wdot(&d, &g.values, &law).abs());
        }
        // orthogonal inputs are annihilated
        pi2 = pi2.max(p.apply(&p.complement(&f.values)).iter().fold(0.0, |m, x| m.max(x.abs())));

        let out = sp.apply(&f.values);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for th in 0..q {
            let row = sp.law.row(th);
            let g_th = &out[th * n..(th + 1) * n];
            let d: Vec<f64> = f.values.iter().zip(g_th).map(|(a, b)| a - b).collect();
            for g in &basis.vectors {
                strong = strong.max(wdot(&d, &g.values, row).abs());
            }
            lhs += model.chain.pi[th] * wdot(g_th, g_th, row);
            rhs += model.chain.pi[th] * wdot(&f.values, &f.values, row);
        }
        shrink = shrink.max(lhs.sqrt() - rhs.sqrt());
    }
    // Π g = g (pointwise where the law charges every state)
    if law.iter().all(|&x| x > 0.0) {
        for g in &basis.vectors {
            let pg = p.apply(&g.values);
            fixed = fixed.max(pg.iter().zip(&g.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())));
        }
    }
    // ℛ-space vectors are orthogonal to T_K at the top vertex
    let mut r_orth = 0.0_f64;
    let w = tk_basis(tree, q, u, kk + 1, None)?;
    for k in 0..=tree.layer[u].min(1) {
        let r = r_space_basis(model, u, &w, k, kk)?;
        let top = tree.anc(u, k)?;
        let tl = model.vertex_law(top)?;
        let tb = tk_basis(tree, q, top, kk, None)?;
        for v in &r.vectors {
            let s = v.max_norm().max(1e-300);
            for g in &tb.vectors {
                r_orth = r_orth.max(wdot(&v.values, &g.values, &tl.law).abs() / s);
            }
        }
    }
    Ok(json!({
        "pi_inner_products": pi1, "pi_annihilates_complement": pi2, "pi_fixes_tk": fixed,
        "strong_orthogonality": strong, "pt_norm_excess": shrink.max(0.0), "r_space_orthogonality": r_orth,
    }))
}

fn max_field(v: &Value) -> f64 {
    v.as_object().map_or(0.0, |o| o.values().filter_map(|x| x.as_f64()).fold(0.0, f64::max))
}

pub fn check_projections(seed: u64, trials: usize) -> CheckReport {
    check_projections_with(seed, trials, false)
}

/// `check_projections` with an optional corruption of `Π` (negative control).
pub fn check_projections_with(seed: u64, trials: usize, corrupt: bool) -> CheckReport {
    run_trials("projections", seed, 4, trials, TOL_PROJECTIONS, |i, rng| {
        let q = if rng.gen_bool(0.7) { 2 } else { 3 };
        let chain = if i % 10 == 0 {
            validate_chain(&[vec![0.5, 0.5], vec![1.0, 0.0]]).expect("ergodic")
        } else {
            let zeros = rng.gen_bool(0.5);
            random_chain(rng, q, zeros)
        };
        let q = chain.q;
        let depth = rng.gen_range(2..=3);
        let tree = random_tree(rng, depth, 3, if q == 2 { 6 } else { 4 });
        let model = Model::new(&tree, &chain);
        let u = rng.gen_range(0..tree.n);
        let kk = rng.gen_range(0..=1);
        let parts = projection_residuals(&model, u, kk, rng, corrupt)?;
        Ok(Outcome::Done(max_field(&parts), json!({ "model": describe(&tree, &chain), "u": u, "K": kk, "parts": parts })))
    })
}

// ---------------------------------------------------------------------------
// decomposition

/// Joint least-squares residual of `W ⊗ 𝒯𝒯(u,[0,k−1])` against
/// `span ℛ(W;k) + 𝒯(u) ⊗ 𝒯𝒯(u,[0,k−1])`, relative to the input norm.
fn r_decompose_residual(model: &Model, u: usize, k: usize, kk: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let tree = model.tree;
    let q = model.q();
    let w = tk_basis(tree, q, u, kk + 1, None)?;
    let r = r_space_basis(model, u, &w, k, kk)?;
    let top_leaves = tree.leaves_under(tree.anc(u, k)?).to_vec();
    let mut products = vec![DenseFunction::constant(q, &[], 1.0)];
    for o in tree.o_range(u, 0, k as i64 - 1)? {
        let fb = tk_basis(tree, q, o, kk, None)?.vectors;
        products = products
            .iter()
            .flat_map(|p| fb.iter().map(move |b| tensor_identify(&[p.clone(), b.clone()])))
            .collect::<Result<Vec<_>>>()?;
    }
    let lifted = |a: &DenseFunction, p: &DenseFunction| tensor_identify(&[a.clone(), p.clone()])?.lift_to(&top_leaves);
    let mut cols: Vec<Vec<f64>> = r.vectors.iter().map(|v| v.values.clone()).collect();
    for a in &tk_basis(tree, q, u, kk, None)?.vectors {
        for p in &products {
            cols.push(lifted(a, p)?.values);
        }
    }
    let mut phi = DenseFunction::constant(q, &top_leaves, 0.0);
    for wv in &w.vectors {
        for p in &products {
            phi.axpy(rng.gen_range(-1.0..1.0), &lifted(wv, p)?);
        }
    }
    let norm = phi.values.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    Ok(lstsq_residual(&cols, &phi.values) / norm)
}

pub fn check_decomposition(seed: u64, trials: usize) -> CheckReport {
    run_trials("decomposition", seed, 5, trials, TOL_DECOMPOSITION, |i, rng| {
        let depth = if i % 10 == 9 { 4 } else { 3 };
        let tree = crate::tree::build_dary(2, depth)?;
        let chain = if rng.gen_bool(0.5) {
            TransitionChain::bsc(rng.gen_range(0.15..0.45))?
        } else {
            random_chain(rng, 2, false)
        };
        let model = Model::new(&tree, &chain);
        let h_probe = rng.gen_range(1..depth);
        let f = match i % 20 {
            0 => EsPolynomial::zero(2),
            1 => random_polynomial(rng, 2, &tree.leaves, 1, 4),
            _ => {
                let n = rng.gen_range(1..=10);
                random_polynomial(rng, 2, &tree.leaves, 2, n)
            }
        };
        let d = decompose_f(&model, 0, 0, &f, h_probe)?;
        let scale = to_dense(&f, &tree.leaves)?.max_norm().max(1e-300);
        let mut r = (d.residual / scale).max(d.max_membership_residual());
        // low-degree inputs stay at the top
        let mut stray = 0.0_f64;
        if f.declared_degree() <= 1 {
            for (&u, c) in &d.components {
                if u != 0 {
                    stray = stray.max(c.max_norm() / scale);
                }
            }
        }
        r = r.max(stray);
        // keep the least-squares instance at ≤ 8 leaves; depth-4 columns are 2^16 long
        let u = loop {
            let u = rng.gen_range(1..tree.n);
            if tree.height[u] < 3 {
                break u;
            }
        };
        let k = rng.gen_range(1..=tree.layer[u].min(2).min(3 - tree.height[u]));
        let lsq = r_decompose_residual(&model, u, k, 0, rng)?;
        r = r.max(lsq);
        Ok(Outcome::Done(
            r,
            json!({
                "model": describe(&tree, &chain), "h_probe": h_probe, "terms": f.terms.len(),
                "round_trip": d.residual / scale, "membership": d.max_membership_residual(),
                "low_degree_stray": stray, "r_decompose": { "u": u, "k": k, "residual": lsq },
            }),
        ))
    })
}

// ---------------------------------------------------------------------------
// norm family

/// Tensor basis `⊗_{v ∈ a} T_K(v)` on the ascending leaves of `a`.
fn tensor_tk_basis(tree: &RootedTree, q: usize, a: &[usize], kk: usize) -> Result<Vec<DenseFunction>> {
    let mut out = vec![DenseFunction::constant(q, &[], 1.0)];
    for &v in a {
        let b = tk_basis(tree, q, v, kk, None)?.vectors;
        out = out
            .iter()
            .flat_map(|p| b.iter().map(move |x| tensor_identify(&[p.clone(), x.clone()])))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(out)
}

fn random_combination<R: Rng>(rng: &mut R, vs: &[DenseFunction]) -> DenseFunction {
    let mut f = DenseFunction::constant(vs[0].q, &vs[0].domain, 0.0);
    for v in vs {
        f.axpy(rng.gen_range(-1.0..1.0), v);
    }
    f
}

pub fn check_norm_family(seed: u64, trials: usize) -> CheckReport {
    run_trials("norm_family", seed, 6, trials, TOL_NORMS, |i, rng| {
        let depth = 3;
        let tree = crate::tree::build_dary(2, depth)?;
        let chain = if rng.gen_bool(0.5) {
            TransitionChain::bsc(rng.gen_range(0.25..0.45))?
        } else {
            random_chain_below(rng, 2, 0.5)
        };
        let model = Model::new(&tree, &chain);
        let q = 2;

        // A ⪯ A′ with W = 𝒯(A)
        let (s1, s2) = (rng.gen_range(0..2), rng.gen_range(0..3));
        let coarse = refine(rng, &tree, &[0], s1, true);
        let fine = if i % 10 == 0 { coarse.clone() } else { refine(rng, &tree, &coarse, s2, true) };
        let w = tensor_tk_basis(&tree, q, &fine, 0)?;
        let c = contraction_constant(&model, &fine, &w)?;
        let mut comparison = Value::Null;
        let mut r = 0.0_f64;
        let mut evaluated = 0usize;
        // observed range of ‖f‖_{A′} / ‖f‖_A (shows how much slack the bounds leave)
        let mut ratio = (f64::INFINITY, 0.0_f64);
        let leaves: Vec<usize> = {
            let mut l: Vec<usize> = fine.iter().flat_map(|&v| tree.leaves_under(v).iter().copied()).collect();
            l.sort_unstable();
            l
        };
        if c < 0.5 {
            for _ in 0..4 {
                let f = random_combination(rng, &w);
                let nf = norm_eval(&model, &NormKind::U(fine.clone()), &f)?;
                let nc = norm_eval(&model, &NormKind::U(coarse.clone()), &f.lift_to(&leaves)?)?;
                if nf <= 1e-12 {
                    continue;
                }
                let squared = ((nc * nc - nf * nf).abs() - c * nf * nf).max(0.0) / (nf * nf);
                let lower = (nf / (1.0 + c) - nc).max(0.0) / nf;
                let upper = (nc - (1.0 + c) * nf).max(0.0) / nf;
                r = r.max(squared).max(lower).max(upper);
                ratio = (ratio.0.min(nc / nf), ratio.1.max(nc / nf));
                evaluated += 1;
            }
            comparison = json!({ "fine": fine, "coarse": coarse, "c": c, "ratio_range": [finite(ratio.0), ratio.1] });
        }

        // U vs T on 𝒟₁(D_m) ⊗ 𝒯(D_m), images of P_{D_m}
        let (u, m) = (0usize, 1usize);
        let dm = tree.dm_set(u, m)?;
        let tdm = tensor_tk_basis(&tree, q, &dm, 0)?;
        let ct = contraction_constant(&model, &dm, &tdm)?;
        let mut ut = 0.0_f64;
        let mut ut_range = (f64::INFINITY, 0.0_f64);
        for _ in 0..3 {
            let f = to_dense(&random_polynomial(rng, q, &tree.leaves, 2, 6), &tree.leaves)?;
            let g = p_dm_apply(&model, u, m, 0, &f)?;
            let un = norm_eval(&model, &NormKind::UJoint { u, m }, &g)?.powi(2);
            let tn = norm_eval(&model, &NormKind::T { u, m }, &g)?.powi(2);
            if tn <= 1e-14 {
                continue;
            }
            ut = ut.max((un - (1.0 + ct) * tn).max((1.0 - ct) * tn - un).max(0.0) / tn);
            ut_range = (ut_range.0.min(un / tn), ut_range.1.max(un / tn));
            evaluated += 1;
        }
        r = r.max(ut);
        let desc = json!({
            "model": describe(&tree, &chain), "comparison": comparison, "comparison_c": c,
            "u_vs_t": { "c": ct, "excess": ut, "ratio_range": [finite(ut_range.0), ut_range.1] },
        });
        if evaluated == 0 {
            return Ok(Outcome::Skipped);
        }
        Ok(Outcome::Done(r, desc))
    })
}

// ---------------------------------------------------------------------------

/// Default trial counts, in suite order.
pub const DEFAULT_TRIALS: [(&str, usize); 6] = [
    ("tower", 100),
    ("submultiplicativity", 1000),
    ("telescoping", 500),
    ("projections", 100),
    ("decomposition", 100),
    ("norm_family", 100),
];

/// Runs every check; the suite passes iff every report passes.
pub fn run_verify_suite(seed: u64, options: &VerifyOptions) -> Vec<CheckReport> {
    let n = |i: usize| options.trials.unwrap_or(DEFAULT_TRIALS[i].1);
    vec![
        check_tower(seed, n(0)),
        check_submultiplicativity(seed, n(1)),
        check_telescoping(seed, n(2)),
        check_projections_with(seed, n(3), options.corrupt_projection),
        check_decomposition(seed, n(4)),
        check_norm_family(seed, n(5)),
    ]
}

pub fn suite_passes(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.pass)
}
