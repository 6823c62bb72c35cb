//! Exact and brute-force references on explicit finite trees and graphs.

mod enumerate;
mod glauber;
mod sample;
pub mod suite;
mod tree;

use serde::Serialize;

use crate::error::{Error, Result};

pub use enumerate::{enumerate_gibbs, enumerate_gibbs_with, fd_susceptibility, Correlations, ExactGibbs, ENUMERATION_CAP};
pub use glauber::{glauber_estimate, GlauberConfig, GlauberEstimate};
pub use sample::{sample_configuration_model, sample_galton_watson, ConfigurationGraph, RootLaw};
pub use tree::{path_correlation, path_correlation_with, prune_tree, prune_tree_with, Boundary, PrunedTree};

/// Undirected graph on vertices 0..n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphInstance {
    n: usize,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl GraphInstance {
    /// Self-loops are rejected; repeated edges are kept as given.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut degrees = vec![0usize; n];
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            degrees[u] += 1;
            degrees[v] += 1;
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        Ok(GraphInstance {
            n,
            edges,
            degrees,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// "n m" followed by one "u v" line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges.len());
        for (u, v) in &self.edges {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let (header, edges) = parse_edge_list(text)?;
        if header.len() != 2 {
            return Err(Error::Parse("graph header must be \"n m\"".into()));
        }
        check_count(header[1], edges.len())?;
        GraphInstance::new(header[0], edges)
    }
}

/// Rooted tree with ordered children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeInstance {
    root: usize,
    children: Vec<Vec<usize>>,
    #[serde(skip)]
    parent: Vec<Option<usize>>,
}

impl TreeInstance {
    /// Checks that every vertex except the root has exactly one parent and
    /// is reachable from the root.
    pub fn new(root: usize, children: Vec<Vec<usize>>) -> Result<Self> {
        let n = children.len();
        if n == 0 {
            return Err(Error::InvalidGraph("tree needs at least one vertex".into()));
        }
        if root >= n {
            return Err(Error::InvalidGraph(format!("root {root} out of range")));
        }
        let mut parent = vec![None; n];
        for (v, cs) in children.iter().enumerate() {
            for &c in cs {
                if c >= n || c == root {
                    return Err(Error::InvalidGraph(format!("bad child {c} of {v}")));
                }
                if parent[c].is_some() {
                    return Err(Error::InvalidGraph(format!("vertex {c} has two parents")));
                }
                parent[c] = Some(v);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if !seen[c] {
                    seen[c] = true;
                    count += 1;
                    stack.push(c);
                }
            }
        }
        if count != n {
            return Err(Error::InvalidGraph("tree is not connected to its root".into()));
        }
        Ok(TreeInstance { root, children, parent })
    }

    /// Star with `k` leaves around root 0.
    pub fn star(k: usize) -> Self {
        let mut children = vec![(1..=k).collect::<Vec<_>>()];
        children.extend((0..k).map(|_| Vec::new()));
        TreeInstance::new(0, children).expect("star is a tree")
    }

    /// Path 0 - 1 - ... - (n-1) rooted at 0.
    pub fn path(n: usize) -> Self {
        let children = (0..n).map(|v| if v + 1 < n { vec![v + 1] } else { Vec::new() }).collect();
        TreeInstance::new(0, children).expect("path is a tree")
    }

    pub fn n(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    /// Vertices from the root down to `target`.
    pub fn path_to(&self, target: usize) -> Result<Vec<usize>> {
        if target >= self.n() {
            return Err(Error::NotADescendant { target });
        }
        let mut path = vec![target];
        let mut v = target;
        while let Some(p) = self.parent[v] {
            path.push(p);
            v = p;
        }
        if v != self.root {
            return Err(Error::NotADescendant { target });
        }
        path.reverse();
        Ok(path)
    }

    /// Vertices in an order where children come before their parent.
    pub fn postorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend_from_slice(&self.children[v]);
        }
        order.reverse();
        order
    }

    pub fn to_graph(&self) -> GraphInstance {
        let mut edges = Vec::with_capacity(self.n() - 1);
        for (v, cs) in self.children.iter().enumerate() {
            for &c in cs {
                edges.push((v, c));
            }
        }
        GraphInstance::new(self.n(), edges).expect("tree edges are valid")
    }

    /// "n m root" followed by one "parent child" line per edge.
    pub fn to_edge_list(&self) -> String {
        let g = self.to_graph();
        let mut s = format!("{} {} {}\n", self.n(), g.edges.len(), self.root);
        for (u, v) in &g.edges {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }

    /// Reads the "n m root" format. Edges may be listed in either
    /// orientation; they are oriented away from the root.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let (header, edges) = parse_edge_list(text)?;
        if header.len() != 3 {
            return Err(Error::Parse("tree header must be \"n m root\"".into()));
        }
        let (n, root) = (header[0], header[2]);
        check_count(header[1], edges.len())?;
        if edges.len() + 1 != n {
            return Err(Error::InvalidGraph(format!("a tree on {n} vertices has {} edges", n.saturating_sub(1))));
        }
        let g = GraphInstance::new(n, edges)?;
        if root >= n {
            return Err(Error::InvalidGraph(format!("root {root} out of range")));
        }
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    children[v].push(w);
                    queue.push_back(w);
                }
            }
        }
        TreeInstance::new(root, children)
    }
}

fn check_count(declared: usize, found: usize) -> Result<()> {
    if declared != found {
        return Err(Error::Parse(format!("header declares {declared} edges, found {found}")));
    }
    Ok(())
}

type EdgeList = (Vec<usize>, Vec<(usize, usize)>);

fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, first) = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
    let header = parse_numbers(first, ln)?;
    let mut edges = Vec::new();
    for (ln, line) in lines {
        let nums = parse_numbers(line, ln)?;
        if nums.len() != 2 {
            return Err(Error::Parse(format!("line {ln}: expected \"u v\"")));
        }
        edges.push((nums[0], nums[1]));
    }
    Ok((header, edges))
}

fn parse_numbers(line: &str, ln: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {ln}: {t:?} is not a vertex index")))
        })
        .collect()
}
