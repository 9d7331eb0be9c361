use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::tensor::DType;
use crate::{Float, GradError, Result, Tensor};

/// Computes input gradients from the output gradient. `needs[i]` tells the
/// rule whether input `i` wants a gradient; rules may return `None` for
/// inputs that do not.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&[Tensor<T>], &Tensor<T>, &[bool]) -> Result<Vec<Option<Tensor<T>>>> + Send + Sync>;

pub(crate) struct Node<T: Float> {
    pub(crate) op: &'static str,
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) backward: Option<BackwardFn<T>>,
}

impl<T: Float> Node<T> {
    pub(crate) fn leaf() -> Self {
        Node {
            op: "leaf",
            inputs: Vec::new(),
            backward: None,
        }
    }

    pub(crate) fn is_leaf(&self) -> bool {
        self.backward.is_none()
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static CHECKED: Cell<bool> = const { Cell::new(true) };
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Restores the previous recording mode on drop.
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    pub fn new() -> Self {
        Self::set(false)
    }

    fn set(enabled: bool) -> Self {
        let prev = GRAD_ENABLED.with(|g| g.replace(enabled));
        NoGradGuard { prev }
    }
}

impl Default for NoGradGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

/// Runs `f` without recording any graph nodes.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = NoGradGuard::new();
    f()
}

/// Whether domain checks (log of non-positive, division by zero, ...) are
/// active on this thread. On by default.
pub fn is_checked() -> bool {
    CHECKED.with(|c| c.get())
}

/// Sets the checked mode for this thread and returns the previous value.
pub fn set_checked(on: bool) -> bool {
    CHECKED.with(|c| c.replace(on))
}

/// Scoped override of the checked mode.
pub struct CheckedGuard {
    prev: bool,
}

impl CheckedGuard {
    pub fn new(on: bool) -> Self {
        CheckedGuard {
            prev: set_checked(on),
        }
    }
}

impl Drop for CheckedGuard {
    fn drop(&mut self) {
        set_checked(self.prev);
    }
}

impl<T: Float> Tensor<T> {
    /// Wraps freshly computed values as the output of `op`, recording a node
    /// when recording is on and some input is tracked.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        dtype: DType,
        op: &'static str,
        inputs: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Tensor<T> {
        let record = if is_grad_enabled() && inputs.iter().any(|t| t.is_tracked()) {
            Some(Arc::new(Node {
                op,
                inputs,
                backward: Some(backward),
            }))
        } else {
            None
        };
        Tensor::raw(Arc::new(data), shape, dtype, record)
    }

    /// Same as [`Tensor::from_op`] but reuses existing storage.
    pub(crate) fn from_op_shared(
        data: Arc<Vec<T>>,
        shape: Vec<usize>,
        dtype: DType,
        op: &'static str,
        inputs: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Tensor<T> {
        let record = if is_grad_enabled() && inputs.iter().any(|t| t.is_tracked()) {
            Some(Arc::new(Node {
                op,
                inputs,
                backward: Some(backward),
            }))
        } else {
            None
        };
        Tensor::raw(data, shape, dtype, record)
    }

    /// Name of the operation that produced this tensor, if recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.inner.record.as_ref().map(|n| n.op)
    }
}

/// Gradients keyed by tensor id.
#[derive(Clone, Default)]
pub struct Gradients<T: Float> {
    map: HashMap<u64, Tensor<T>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<&Tensor<T>> {
        self.map.get(&t.id())
    }

    pub fn get_id(&self, id: u64) -> Option<&Tensor<T>> {
        self.map.get(&id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.map.keys().copied()
    }
}

/// Post-order over every tracked tensor reachable from `root`.
fn topo_order<T: Float>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !seen.insert(t.id()) {
            continue;
        }
        let node = t.inner.record.clone();
        stack.push((t, true));
        if let Some(node) = node {
            for input in node.inputs.iter().rev() {
                if input.is_tracked() && !seen.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}

fn accumulate<T: Float>(map: &mut HashMap<u64, Tensor<T>>, id: u64, g: Tensor<T>) -> Result<()> {
    match map.remove(&id) {
        Some(prev) => {
            map.insert(id, prev.add(&g)?);
        }
        None => {
            map.insert(id, g);
        }
    }
    Ok(())
}

fn run_backward<T: Float>(
    root: &Tensor<T>,
    wrt: Option<&[&Tensor<T>]>,
    create_graph: bool,
) -> Result<HashMap<u64, Tensor<T>>> {
    if root.numel() != 1 || root.is_complex() {
        return Err(GradError::NonScalarRoot(root.shape().to_vec()));
    }
    if !root.is_tracked() {
        return Err(GradError::NoDiffRecord);
    }
    let order = topo_order(root);

    let wanted: Option<HashSet<u64>> = wrt.map(|w| w.iter().map(|t| t.id()).collect());
    // Tensors whose subgraph contains a wanted tensor.
    let reaches: Option<HashSet<u64>> = wanted.as_ref().map(|wanted| {
        let mut r = HashSet::new();
        for t in &order {
            let hit = wanted.contains(&t.id())
                || t.inner
                    .record
                    .as_ref()
                    .map(|n| n.inputs.iter().any(|i| r.contains(&i.id())))
                    .unwrap_or(false);
            if hit {
                r.insert(t.id());
            }
        }
        r
    });

    let _mode = NoGradGuard::set(create_graph);
    let mut grads: HashMap<u64, Tensor<T>> = HashMap::new();
    let mut out: HashMap<u64, Tensor<T>> = HashMap::new();
    grads.insert(root.id(), Tensor::ones(root.shape()));

    for t in order.iter().rev() {
        let Some(g) = grads.remove(&t.id()) else {
            continue;
        };
        let node = t.inner.record.as_ref().expect("tracked tensor");
        let is_wanted = match &wanted {
            Some(w) => w.contains(&t.id()),
            None => node.is_leaf(),
        };
        if is_wanted {
            out.insert(t.id(), g.clone());
        }
        let Some(rule) = node.backward.as_ref() else {
            continue;
        };
        let needs: Vec<bool> = node
            .inputs
            .iter()
            .map(|i| {
                i.is_tracked()
                    && reaches
                        .as_ref()
                        .map(|r| r.contains(&i.id()))
                        .unwrap_or(true)
            })
            .collect();
        if !needs.iter().any(|&n| n) {
            continue;
        }
        let input_grads = rule(&node.inputs, &g, &needs)?;
        debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.op);
        for ((input, ig), need) in node.inputs.iter().zip(input_grads).zip(&needs) {
            if let (Some(ig), true) = (ig, *need) {
                debug_assert_eq!(ig.shape(), input.shape(), "grad shape from {}", node.op);
                accumulate(&mut grads, input.id(), ig)?;
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar `root` with respect to every reachable leaf
/// variable. With `create_graph`, the returned gradients carry diff records
/// and can be differentiated again.
pub fn backward<T: Float>(root: &Tensor<T>, create_graph: bool) -> Result<Gradients<T>> {
    Ok(Gradients {
        map: run_backward(root, None, create_graph)?,
    })
}

/// Gradients of `root` with respect to the given tensors only (leaf or not).
/// Unreachable tensors get zeros. Branches that cannot reach any of `wrt`
/// are skipped.
pub fn grad<T: Float>(
    root: &Tensor<T>,
    wrt: &[&Tensor<T>],
    create_graph: bool,
) -> Result<Vec<Tensor<T>>> {
    let mut map = run_backward(root, Some(wrt), create_graph)?;
    Ok(wrt
        .iter()
        .map(|t| map.remove(&t.id()).unwrap_or_else(|| t.zeros_like()))
        .collect())
}
