use super::Model;
use crate::broadcast::{conditional_kernel, mix_rows};
use crate::error::{Error, Result};
use crate::functions::DenseFunction;
use crate::tensor::{kron, permute_axes};

/// Which seminorm to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub enum NormKind {
    /// Largest absolute value over all states.
    Max,
    /// `√(E_A f²)` with independent stationary processes below each member of A.
    U(Vec<usize>),
    /// `√E f²` for `f(x_{D_m(u)}, x_{L_u})` under one process rooted at u ∼ π.
    UJoint { u: usize, m: usize },
    /// Tensor-product norm: `y_{D_m(u)}` from the process at u ∼ π, and
    /// `z_{L_v}` from independent processes `Z_v ∼ π`, v ∈ D_m(u).
    T { u: usize, m: usize },
}

/// Law of `X_A`'s leaves under independent processes (the `E_A` measure).
pub fn u_law(model: &Model, a: &[usize]) -> Result<(Vec<usize>, Vec<f64>)> {
    model.product_law(a)
}

fn quad(f: &DenseFunction, law: &[f64]) -> f64 {
    f.values.iter().zip(law).map(|(x, p)| p * x * x).sum::<f64>().max(0.0).sqrt()
}

pub fn norm_eval(model: &Model, kind: &NormKind, f: &DenseFunction) -> Result<f64> {
    match kind {
        NormKind::Max => Ok(f.max_norm()),
        NormKind::U(a) => {
            let mut a = a.clone();
            a.sort_unstable();
            model.tree.is_antichain(&a)?;
            let (axes, law) = model.product_law(&a)?;
            if axes != f.domain {
                return Err(Error::DomainMismatch(format!("expected domain {:?}", axes)));
            }
            Ok(quad(f, &law))
        }
        NormKind::UJoint { u, m } => {
            let (axes, law) = joint_dm_law(model, *u, *m)?;
            if axes != f.domain {
                return Err(Error::DomainMismatch(format!("expected domain {:?}", axes)));
            }
            Ok(quad(f, &law))
        }
        NormKind::T { u, m } => {
            let (axes, law) = tensor_dm_law(model, *u, *m)?;
            if axes != f.domain {
                return Err(Error::DomainMismatch(format!("expected domain {:?}", axes)));
            }
            Ok(quad(f, &law))
        }
    }
}

fn dm_domain(model: &Model, u: usize, m: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let dm = model.tree.dm_set(u, m)?;
    if dm.iter().any(|&v| model.tree.is_leaf(v)) {
        return Err(Error::TooShallow(u, m + 1));
    }
    let mut axes = dm.clone();
    axes.extend(model.tree.leaves_under(u));
    axes.sort_unstable();
    Ok((dm, axes))
}

/// Joint law of `(X_{D_m(u)}, X_{L_u})` with `X_u ∼ π`.
pub(crate) fn joint_dm_law(model: &Model, u: usize, m: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let (_, axes) = dm_domain(model, u, m)?;
    let k = conditional_kernel(model.tree, model.chain, u, &axes)?;
    Ok((axes, mix_rows(&k, &model.chain.pi)))
}

/// Product of the `D_m(u)` marginal with independent leaf laws below each v.
pub(crate) fn tensor_dm_law(model: &Model, u: usize, m: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let (dm, axes) = dm_domain(model, u, m)?;
    let ky = conditional_kernel(model.tree, model.chain, u, &dm)?;
    let py = mix_rows(&ky, &model.chain.pi);
    let (zaxes, pz) = model.product_law(&dm)?;
    let mut cat = dm.clone();
    cat.extend(&zaxes);
    Ok((axes.clone(), permute_axes(&kron(&py, &pz), model.q(), &cat, &axes)))
}
