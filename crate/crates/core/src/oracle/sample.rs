//! Random trees and graphs with a prescribed degree law.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::{GraphInstance, TreeInstance};
use crate::degree_models::{DegreeModel, ForwardModel};
use crate::error::{Error, Result};

/// Offspring law at the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootLaw {
    /// D, as in the unimodular tree.
    Degree,
    /// K, like every later generation.
    Forward,
}

/// Galton-Watson tree truncated at `depth` generations. Fails once more
/// than `cap` vertices have been created.
pub fn sample_galton_watson<R: Rng + ?Sized>(
    model: &DegreeModel,
    fm: &ForwardModel,
    depth: usize,
    root_law: RootLaw,
    cap: usize,
    rng: &mut R,
) -> Result<TreeInstance> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];
    for generation in 0..depth {
        let mut next = Vec::new();
        for &v in &frontier {
            let k = if generation == 0 && root_law == RootLaw::Degree {
                model.sample(rng)
            } else {
                fm.sample(rng)
            };
            if children.len() as u64 + k > cap as u64 {
                return Err(Error::SizeCapExceeded { cap });
            }
            for _ in 0..k {
                let id = children.len();
                children.push(Vec::new());
                children[v].push(id);
                next.push(id);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    TreeInstance::new(0, children)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigurationGraph {
    pub graph: GraphInstance,
    /// Degrees drawn before matching.
    pub target_degrees: Vec<u64>,
    pub erased_self_loops: usize,
    pub erased_multi_edges: usize,
    /// Draws needed to make the degree total even.
    pub parity_redraws: usize,
}

/// Configuration model with i.i.d. degrees from `model`. Half-edges are
/// matched uniformly at random; self-loops and repeated edges are erased,
/// so realized degrees can fall below the drawn ones.
pub fn sample_configuration_model<R: Rng + ?Sized>(
    model: &DegreeModel,
    n: usize,
    rng: &mut R,
) -> Result<ConfigurationGraph> {
    if n == 0 {
        return Err(Error::InvalidParameter("graph needs at least one vertex".into()));
    }
    let mut degrees: Vec<u64> = (0..n).map(|_| model.sample(rng)).collect();
    let mut parity_redraws = 0;
    let total: u64 = degrees.iter().sum();
    if total % 2 == 1 {
        let v = rng.gen_range(0..n);
        let old = degrees[v];
        loop {
            parity_redraws += 1;
            let d = model.sample(rng);
            if (d + old) % 2 == 1 {
                degrees[v] = d;
                break;
            }
            if parity_redraws > 10_000 {
                return Err(Error::InvalidModel(
                    "cannot make the degree total even: all degrees share one parity".into(),
                ));
            }
        }
    }
    let stubs_len: u64 = degrees.iter().sum();
    if stubs_len > (1u64 << 32) {
        return Err(Error::InvalidParameter("degree total too large".into()));
    }
    let mut stubs: Vec<usize> = Vec::with_capacity(stubs_len as usize);
    for (v, &d) in degrees.iter().enumerate() {
        stubs.extend(std::iter::repeat(v).take(d as usize));
    }
    stubs.shuffle(rng);
    let mut seen = HashSet::with_capacity(stubs.len() / 2);
    let mut edges = Vec::with_capacity(stubs.len() / 2);
    let (mut loops, mut multi) = (0, 0);
    for pair in stubs.chunks_exact(2) {
        let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        if u == v {
            loops += 1;
        } else if !seen.insert((u, v)) {
            multi += 1;
        } else {
            edges.push((u, v));
        }
    }
    Ok(ConfigurationGraph {
        graph: GraphInstance::new(n, edges)?,
        target_degrees: degrees,
        erased_self_loops: loops,
        erased_multi_edges: multi,
        parity_redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree_models::{forward, make_model, ModelSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regular_tree_has_fixed_shape() {
        let m = make_model(&ModelSpec::Regular { d: 3 }).unwrap();
        let f = forward(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = sample_galton_watson(&m, &f, 2, RootLaw::Degree, 100, &mut rng).unwrap();
        assert_eq!(t.n(), 10);
        assert_eq!(t.children(0).len(), 3);
        assert!(t.children(0).iter().all(|&c| t.children(c).len() == 2));
        let t0 = sample_galton_watson(&m, &f, 0, RootLaw::Degree, 100, &mut rng).unwrap();
        assert_eq!(t0.n(), 1);
        assert!(matches!(
            sample_galton_watson(&m, &f, 5, RootLaw::Degree, 20, &mut rng),
            Err(Error::SizeCapExceeded { cap: 20 })
        ));
    }

    #[test]
    fn cycle_graph_from_regular_two() {
        let m = make_model(&ModelSpec::Regular { d: 2 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cg = sample_configuration_model(&m, 4, &mut rng).unwrap();
        assert_eq!(cg.target_degrees, vec![2; 4]);
        let erased = cg.erased_self_loops + cg.erased_multi_edges;
        assert_eq!(cg.graph.edges().len() + erased, 4);
        if erased == 0 {
            assert!(cg.graph.degrees().iter().all(|&d| d == 2));
        }
    }
}
