//! Trailing-dimension broadcasting helpers.

use crate::{GradError, Result};

pub(crate) fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd { a[i + a.len() - nd] } else { 1 };
        let db = if i + b.len() >= nd { b[i + b.len() - nd] } else { 1 };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(GradError::ShapeMismatch {
                op,
                axis: i,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Strides of `shape` aligned to the rank of `out`, zero on broadcast axes.
pub(crate) fn aligned_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let nd = out.len();
    let mut strides = vec![0; nd];
    let mut acc = 1;
    for k in (0..shape.len()).rev() {
        let i = k + nd - shape.len();
        strides[i] = if shape[k] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= shape[k];
    }
    strides
}

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for k in (0..shape.len()).rev() {
        strides[k] = acc;
        acc *= shape[k];
    }
    strides
}

/// Drops unit axes and merges neighbours that are laid out contiguously in
/// both operands, so the innermost loop runs as long as possible.
fn coalesce(shape: &[usize], sa: &[usize], sb: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut s: Vec<usize> = Vec::with_capacity(shape.len());
    let mut a: Vec<usize> = Vec::with_capacity(shape.len());
    let mut b: Vec<usize> = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        if shape[i] == 1 {
            continue;
        }
        if let (Some(ls), Some(&la), Some(&lb)) = (s.last_mut(), a.last(), b.last()) {
            if la == sa[i] * shape[i] && lb == sb[i] * shape[i] {
                *ls *= shape[i];
                *a.last_mut().unwrap() = sa[i];
                *b.last_mut().unwrap() = sb[i];
                continue;
            }
        }
        s.push(shape[i]);
        a.push(sa[i]);
        b.push(sb[i]);
    }
    if s.is_empty() {
        return (vec![1], vec![0], vec![0]);
    }
    (s, a, b)
}

/// Calls `f(out_index, a_index, b_index)` for every element of `shape` in
/// row-major order.
pub(crate) fn for_each_index2(
    shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    if shape.is_empty() {
        f(0, 0, 0);
        return;
    }
    if shape.contains(&0) {
        return;
    }
    let (shape, sa, sb) = coalesce(shape, sa, sb);
    let (shape, sa, sb) = (&shape[..], &sa[..], &sb[..]);
    let nd = shape.len();
    let last = shape[nd - 1];
    let (la, lb) = (sa[nd - 1], sb[nd - 1]);
    let mut idx = vec![0usize; nd - 1];
    let (mut ba, mut bb, mut oi) = (0usize, 0usize, 0usize);
    loop {
        for j in 0..last {
            f(oi, ba + j * la, bb + j * lb);
            oi += 1;
        }
        let mut d = nd - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            ba += sa[d];
            bb += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            ba -= sa[d] * shape[d];
            bb -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

/// Whether `from` broadcasts to `to` under trailing-dimension rules.
pub(crate) fn broadcastable_to(from: &[usize], to: &[usize]) -> bool {
    if from.len() > to.len() {
        return false;
    }
    from.iter()
        .rev()
        .zip(to.iter().rev())
        .all(|(&f, &t)| f == t || f == 1)
}
