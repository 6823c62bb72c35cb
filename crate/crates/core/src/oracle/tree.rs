//! Exact leaf-to-root pruning on finite trees.

use serde::{Deserialize, Serialize};

use super::TreeInstance;
use crate::cavity::{xi_raw, SATURATED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Childless vertices keep h = B.
    Free,
    /// Childless non-root vertices are pinned to +1.
    Plus,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrunedTree {
    /// Effective field of every vertex from its own subtree.
    pub fields: Vec<f64>,
    pub root_magnetization: f64,
}

/// h(v) = B_v + Σ_{w child of v} ξ(h(w)) computed bottom-up.
pub fn prune_tree(t: &TreeInstance, beta: f64, field: f64, boundary: Boundary) -> PrunedTree {
    let b = vec![field; t.n()];
    let bh = beta.tanh();
    prune_tree_with(t, &b, boundary, &|h| xi_raw(beta, bh, h))
}

/// Pruning with per-vertex fields and an arbitrary edge map.
pub fn prune_tree_with(
    t: &TreeInstance,
    fields: &[f64],
    boundary: Boundary,
    xi: &dyn Fn(f64) -> f64,
) -> PrunedTree {
    let mut h = vec![0.0; t.n()];
    for v in t.postorder() {
        let cs = t.children(v);
        h[v] = if cs.is_empty() && v != t.root() && boundary == Boundary::Plus {
            SATURATED
        } else {
            fields[v] + cs.iter().map(|&c| xi(h[c])).sum::<f64>()
        };
    }
    let root_magnetization = h[t.root()].tanh();
    PrunedTree {
        fields: h,
        root_magnetization,
    }
}

/// ⟨σ_{v0}σ_{vℓ}⟩ − ⟨σ_{v0}⟩⟨σ_{vℓ}⟩ on the free tree, as
/// (1 − ⟨σ_{v0}⟩²) Π_{i=1}^{ℓ} sinh 2β / (cosh 2β + cosh 2h_{v_i}).
pub fn path_correlation(t: &TreeInstance, beta: f64, field: f64, target: usize) -> Result<f64> {
    let pruned = prune_tree(t, beta, field, Boundary::Free);
    path_correlation_with(t, beta, &pruned, target)
}

/// Same, from fields that were already pruned.
pub fn path_correlation_with(t: &TreeInstance, beta: f64, pruned: &PrunedTree, target: usize) -> Result<f64> {
    let path = t.path_to(target)?;
    if pruned.fields.len() != t.n() {
        return Err(Error::InvalidParameter("pruned fields do not match the tree".into()));
    }
    let m0 = pruned.root_magnetization;
    let (s2, c2) = ((2.0 * beta).sinh(), (2.0 * beta).cosh());
    let mut product = 1.0;
    for &v in &path[1..] {
        product *= s2 / (c2 + (2.0 * pruned.fields[v]).cosh());
    }
    Ok((1.0 - m0 * m0) * product)
}
