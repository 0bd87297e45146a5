//! Dense tables over `[q]^domain` with lexicographic indexing (last axis
//! fastest): axis permutation, lifting, and blockwise application.

/// Reorder a table from axis order `from` to `to` (same set of labels).
pub fn permute_axes(values: &[f64], q: usize, from: &[usize], to: &[usize]) -> Vec<f64> {
    if from == to {
        return values.to_vec();
    }
    let n = from.len();
    debug_assert_eq!(n, to.len());
    // stride (in `from` layout) of each axis of `to`
    let from_stride: Vec<usize> = (0..n).map(|i| q.pow((n - 1 - i) as u32)).collect();
    let strides: Vec<usize> = to
        .iter()
        .map(|a| from_stride[from.iter().position(|b| b == a).expect("axis sets differ")])
        .collect();
    let mut out = vec![0.0; values.len()];
    let mut digits = vec![0usize; n];
    let mut src = 0usize;
    for o in out.iter_mut() {
        *o = values[src];
        // increment the odometer over `to` order
        for j in (0..n).rev() {
            digits[j] += 1;
            src += strides[j];
            if digits[j] < q {
                break;
            }
            src -= strides[j] * q;
            digits[j] = 0;
        }
    }
    out
}

/// Extend a table on `sub` to the superset `domain` (constant in new axes).
pub fn lift(values: &[f64], q: usize, sub: &[usize], domain: &[usize]) -> Vec<f64> {
    let n = domain.len();
    let m = sub.len();
    let sub_stride: Vec<usize> = (0..m).map(|i| q.pow((m - 1 - i) as u32)).collect();
    let strides: Vec<usize> = domain
        .iter()
        .map(|a| sub.iter().position(|b| b == a).map_or(0, |i| sub_stride[i]))
        .collect();
    let size = q.pow(n as u32);
    let mut out = vec![0.0; size];
    let mut digits = vec![0usize; n];
    let mut src = 0usize;
    for o in out.iter_mut() {
        *o = values[src];
        for j in (0..n).rev() {
            digits[j] += 1;
            src += strides[j];
            if digits[j] < q {
                break;
            }
            src -= strides[j] * q;
            digits[j] = 0;
        }
    }
    out
}

/// Decompose a flat index into per-axis states.
pub fn digits(mut idx: usize, q: usize, n: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for j in (0..n).rev() {
        d[j] = idx % q;
        idx /= q;
    }
    d
}

/// Flat index of per-axis states.
pub fn index_of(states: &[usize], q: usize) -> usize {
    states.iter().fold(0, |acc, &s| acc * q + s)
}

/// Apply `op` to every slice along `block` (a subset of `domain`). `op` maps
/// a table on `block` to a table on `out_axes`; the result lives on
/// `(domain \ block) ∪ out_axes`, sorted ascending.
pub fn apply_block<F>(values: &[f64], q: usize, domain: &[usize], block: &[usize], out_axes: &[usize], op: F) -> (Vec<usize>, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let rest: Vec<usize> = domain.iter().copied().filter(|a| !block.contains(a)).collect();
    let mut order = rest.clone();
    order.extend_from_slice(block);
    let arranged = permute_axes(values, q, domain, &order);
    let bw = q.pow(block.len() as u32);
    let ow = q.pow(out_axes.len() as u32);
    let nrest = arranged.len() / bw;
    let mut mid = Vec::with_capacity(nrest * ow);
    for r in 0..nrest {
        let y = op(&arranged[r * bw..(r + 1) * bw]);
        debug_assert_eq!(y.len(), ow);
        mid.extend(y);
    }
    let mut mid_axes = rest;
    mid_axes.extend_from_slice(out_axes);
    let mut sorted = mid_axes.clone();
    sorted.sort_unstable();
    let out = permute_axes(&mid, q, &mid_axes, &sorted);
    (sorted, out)
}

/// Kronecker product of tables (`a` axes before `b` axes).
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
