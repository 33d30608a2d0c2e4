//! Comparison graph of a network: bridges and a deterministic cycle basis.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::network::EvidenceNetwork;

/// Unordered treatment pair, stored with the smaller index first.
pub type Edge = (usize, usize);

pub fn edge(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeInfo {
    /// Number of studies comparing the pair directly.
    pub studies: usize,
    /// Designs (sorted arm lists) containing the pair.
    pub designs: BTreeSet<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonGraph {
    pub nodes: usize,
    pub edges: BTreeMap<Edge, EdgeInfo>,
}

impl ComparisonGraph {
    /// Every pair of arms inside a study counts as a direct comparison.
    pub fn from_network(net: &EvidenceNetwork) -> Self {
        let mut edges: BTreeMap<Edge, EdgeInfo> = BTreeMap::new();
        for s in &net.studies {
            for (i, &a) in s.design.iter().enumerate() {
                for &b in &s.design[i + 1..] {
                    let info = edges.entry(edge(a, b)).or_default();
                    info.studies += 1;
                    info.designs.insert(s.design.clone());
                }
            }
        }
        Self {
            nodes: net.n_treatments(),
            edges,
        }
    }

    pub fn from_edges(nodes: usize, list: &[Edge]) -> Self {
        let mut edges: BTreeMap<Edge, EdgeInfo> = BTreeMap::new();
        for &(a, b) in list {
            assert!(a != b && a < nodes && b < nodes, "bad edge ({a}, {b})");
            let info = edges.entry(edge(a, b)).or_default();
            info.studies += 1;
            info.designs.insert(vec![a.min(b), a.max(b)]);
        }
        Self { nodes, edges }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(a, b) in self.edges.keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes == 0 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes];
        seen[0] = true;
        let mut stack = vec![0];
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.nodes
    }
}

/// Edges whose removal disconnects the graph (low-link method, iterative).
pub fn find_bridges(graph: &ComparisonGraph) -> BTreeSet<Edge> {
    let adj = graph.adjacency();
    let n = graph.nodes;
    let mut order = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut bridges = BTreeSet::new();
    let mut counter = 0;
    for root in 0..n {
        if order[root] != usize::MAX {
            continue;
        }
        // (node, parent, next neighbour position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        order[root] = counter;
        low[root] = counter;
        counter += 1;
        while let Some(&(u, parent, next)) = stack.last() {
            if next < adj[u].len() {
                let v = adj[u][next];
                stack.last_mut().expect("non-empty").2 += 1;
                if v == parent {
                    // simple graph: the only edge back to the parent is the tree edge
                    continue;
                }
                if order[v] == usize::MAX {
                    order[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push((v, u, 0));
                } else {
                    low[u] = low[u].min(order[v]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > order[parent] {
                        bridges.insert(edge(parent, u));
                    }
                }
            }
        }
    }
    bridges
}

/// A fundamental cycle of the BFS spanning tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    /// Closed walk without the repeated start node.
    pub nodes: Vec<usize>,
    /// The non-tree edge that closes this loop and no other basis loop.
    pub distinguishing: Edge,
}

impl Loop {
    pub fn edges(&self) -> Vec<Edge> {
        let k = self.nodes.len();
        (0..k)
            .map(|i| edge(self.nodes[i], self.nodes[(i + 1) % k]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopSet {
    pub loops: Vec<Loop>,
}

impl LoopSet {
    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }
}

/// Breadth-first spanning forest from node 0, neighbours in index order.
/// Returns parent pointers (`usize::MAX` for roots) and depths.
pub fn bfs_tree(graph: &ComparisonGraph) -> (Vec<usize>, Vec<usize>) {
    let adj = graph.adjacency();
    let n = graph.nodes;
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![usize::MAX; n];
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
    }
    (parent, depth)
}

/// Cycle basis of size `E − V + (components)` built from [`bfs_tree`].
///
/// Loops are listed in canonical order of their distinguishing edges. Each
/// loop is rotated to start at its smallest node and oriented so that the
/// second node is the smaller of the two neighbours.
pub fn independent_loops(graph: &ComparisonGraph) -> LoopSet {
    let (parent, depth) = bfs_tree(graph);
    let tree: BTreeSet<Edge> = (0..graph.nodes)
        .filter(|v| parent[*v] != usize::MAX)
        .map(|v| edge(v, parent[v]))
        .collect();
    let mut loops = Vec::new();
    for &(a, b) in graph.edges.keys() {
        if tree.contains(&(a, b)) {
            continue;
        }
        // climb to the lowest common ancestor
        let (mut u, mut v) = (a, b);
        let mut left = vec![u];
        let mut right = vec![v];
        while u != v {
            if depth[u] >= depth[v] {
                u = parent[u];
                left.push(u);
            } else {
                v = parent[v];
                right.push(v);
            }
        }
        // left ends at the ancestor; right also ends there, drop the duplicate
        right.pop();
        right.reverse();
        let mut nodes = left;
        nodes.extend(right);
        loops.push(Loop {
            nodes: normalize_cycle(nodes),
            distinguishing: (a, b),
        });
    }
    LoopSet { loops }
}

fn normalize_cycle(mut nodes: Vec<usize>) -> Vec<usize> {
    let k = nodes.len();
    let start = (0..k).min_by_key(|i| nodes[*i]).unwrap_or(0);
    nodes.rotate_left(start);
    if k > 2 && nodes[k - 1] < nodes[1] {
        nodes[1..].reverse();
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    #[test]
    fn bridges_of_small_graphs() {
        let tri = ComparisonGraph::from_edges(3, &[(A, B), (B, C), (A, C)]);
        assert!(find_bridges(&tri).is_empty());

        let path = ComparisonGraph::from_edges(3, &[(A, B), (B, C)]);
        assert_eq!(find_bridges(&path), BTreeSet::from([(A, B), (B, C)]));

        let pendant = ComparisonGraph::from_edges(4, &[(A, B), (B, C), (A, C), (C, D)]);
        assert_eq!(find_bridges(&pendant), BTreeSet::from([(C, D)]));
    }

    #[test]
    fn multiplicity_does_not_hide_bridges() {
        let g = ComparisonGraph::from_edges(2, &[(A, B), (A, B), (B, A)]);
        assert_eq!(g.edges[&(A, B)].studies, 3);
        assert_eq!(find_bridges(&g), BTreeSet::from([(A, B)]));
    }

    #[test]
    fn loop_counts() {
        let tri = ComparisonGraph::from_edges(3, &[(A, B), (B, C), (A, C)]);
        let l = independent_loops(&tri);
        assert_eq!(l.len(), 1);
        assert_eq!(l.loops[0].nodes, vec![A, B, C]);
        assert_eq!(l.loops[0].distinguishing, (B, C));

        let k4 = ComparisonGraph::from_edges(4, &[(A, B), (A, C), (A, D), (B, C), (B, D), (C, D)]);
        let l = independent_loops(&k4);
        assert_eq!(l.len(), 3);
        let closing: Vec<Edge> = l.loops.iter().map(|l| l.distinguishing).collect();
        assert_eq!(closing, vec![(B, C), (B, D), (C, D)]);

        let two = ComparisonGraph::from_edges(4, &[(A, B), (A, C), (B, C), (A, D), (B, D)]);
        assert_eq!(independent_loops(&two).len(), 2);

        let tree = ComparisonGraph::from_edges(4, &[(A, B), (A, C), (C, D)]);
        assert!(independent_loops(&tree).is_empty());
    }

    #[test]
    fn loops_are_closed_simple_cycles() {
        let g = ComparisonGraph::from_edges(
            6,
            &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 4), (4, 5), (5, 3), (1, 4)],
        );
        let loops = independent_loops(&g);
        assert_eq!(loops.len(), g.n_edges() - g.nodes + 1);
        for l in &loops.loops {
            let distinct: BTreeSet<usize> = l.nodes.iter().copied().collect();
            assert_eq!(distinct.len(), l.nodes.len());
            for e in l.edges() {
                assert!(g.edges.contains_key(&e), "{e:?} not in graph");
            }
            assert!(l.edges().contains(&l.distinguishing));
        }
    }
}
