//! Address seriation: order addresses so that pairs that trade a lot end up
//! next to each other on the disk.
//!
//! Transaction counts become distances (`1 / (1 + M)`), the distances are
//! clustered with average linkage, and the dendrogram's leaves are then
//! ordered optimally: among all orders reachable by flipping internal nodes,
//! pick one minimising the summed distance between neighbours.
//!
//! Ties are resolved towards the smallest index everywhere. Two values count
//! as tied when they differ by less than [`tie_tolerance`], which keeps the
//! choice stable against last-bit rounding differences.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::PairStats;
use crate::types::AddressId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriationError {
    #[error("distance matrix has {expected} entries but {found} were supplied")]
    Shape { expected: usize, found: usize },
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("distance matrix has a non-zero diagonal at {0}")]
    Diagonal(usize),
    #[error("distance at ({0}, {1}) is negative or not finite")]
    BadValue(usize, usize),
    #[error("dendrogram has {tree} leaves but the matrix has {matrix} rows")]
    SizeMismatch { tree: usize, matrix: usize },
}

/// Absolute slack within which two costs are treated as equal.
pub fn tie_tolerance(value: f64) -> f64 {
    1e-12 * value.abs().max(1.0)
}

/// Symmetric, zero-diagonal, non-negative distances between addresses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    ids: Vec<AddressId>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from a row-major value list, validating its shape.
    pub fn new(ids: Vec<AddressId>, values: Vec<f64>) -> Result<Self, SeriationError> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(SeriationError::Shape { expected: n * n, found: values.len() });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(SeriationError::Diagonal(i));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(SeriationError::BadValue(i, j));
                }
                if v != values[j * n + i] {
                    return Err(SeriationError::Asymmetric(i, j));
                }
            }
        }
        Ok(DistanceMatrix { ids, values })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Address behind each row.
    pub fn ids(&self) -> &[AddressId] {
        &self.ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// Summed distance between consecutive entries of `leaves`.
    pub fn path_cost(&self, leaves: &[usize]) -> f64 {
        leaves.windows(2).map(|w| self.get(w[0], w[1])).sum()
    }
}

/// Distance for a pair with `tx_count` transactions.
pub fn distance_from_count(tx_count: u32) -> f64 {
    1.0 / (1.0 + f64::from(tx_count))
}

/// Distances between `addresses` (rows in ascending address order). Pairs
/// without a filtered entry sit at distance 1.
pub fn build_distance_matrix(pairs: &[PairStats], addresses: &BTreeSet<AddressId>) -> DistanceMatrix {
    let ids: Vec<AddressId> = addresses.iter().copied().collect();
    let n = ids.len();
    let mut values = vec![1.0; n * n];
    for i in 0..n {
        values[i * n + i] = 0.0;
    }
    for p in pairs {
        let (Ok(i), Ok(j)) = (ids.binary_search(&p.a), ids.binary_search(&p.b)) else {
            continue;
        };
        if i == j {
            continue;
        }
        let d = distance_from_count(p.tx_count);
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    DistanceMatrix { ids, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    /// Child node holding the smaller leaf index.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves under this node.
    pub size: usize,
}

/// Binary merge tree. Nodes `0..n` are leaves; merge `k` creates node `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn from_merges(n_leaves: usize, merges: Vec<Merge>) -> Self {
        debug_assert!(n_leaves == 0 || merges.len() == n_leaves - 1);
        Dendrogram { n_leaves, merges }
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> Option<usize> {
        match self.n_leaves {
            0 => None,
            n => Some(n - 1 + self.merges.len()),
        }
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        (!self.is_leaf(node)).then(|| {
            let m = &self.merges[node - self.n_leaves];
            (m.left, m.right)
        })
    }

    /// Leaves in the unflipped in-order traversal (left before right).
    pub fn in_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_leaves);
        let Some(root) = self.root() else { return out };
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            match self.children(node) {
                None => out.push(node),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }
}

/// Average-linkage agglomerative clustering.
///
/// Each step merges the closest pair of clusters; among ties the pair whose
/// minimum leaves are lexicographically smallest wins. Cluster distances are
/// maintained with the Lance-Williams update and a per-row minimum cache.
pub fn cluster_addresses(matrix: &DistanceMatrix) -> Dendrogram {
    let n = matrix.n();
    if n == 0 {
        return Dendrogram::from_merges(0, Vec::new());
    }
    // Slot i always holds the cluster whose smallest leaf is i.
    let mut dist = matrix.values.clone();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut row_min = vec![f64::INFINITY; n];

    let recompute_row = |dist: &[f64], active: &[bool], i: usize| -> f64 {
        ((i + 1)..n)
            .filter(|&j| active[j])
            .map(|j| dist[i * n + j])
            .fold(f64::INFINITY, f64::min)
    };
    for (i, slot) in row_min.iter_mut().enumerate() {
        *slot = recompute_row(&dist, &active, i);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let best = (0..n)
            .filter(|&i| active[i])
            .map(|i| row_min[i])
            .fold(f64::INFINITY, f64::min);
        let limit = best + tie_tolerance(best);
        let i = (0..n)
            .find(|&i| active[i] && row_min[i] <= limit)
            .expect("an active row attains the minimum");
        let j = ((i + 1)..n)
            .find(|&j| active[j] && dist[i * n + j] <= limit)
            .expect("row minimum is attained");

        merges.push(Merge {
            left: node[i],
            right: node[j],
            height: dist[i * n + j],
            size: size[i] + size[j],
        });

        // Rows whose cached minimum may have been the (k, i) or (k, j) entry.
        let stale: Vec<bool> = (0..n)
            .map(|k| {
                active[k]
                    && ((k < i && dist[k * n + i] <= row_min[k])
                        || (k < j && k != i && dist[k * n + j] <= row_min[k]))
            })
            .collect();

        let (si, sj) = (size[i] as f64, size[j] as f64);
        active[j] = false;
        for k in (0..n).filter(|&k| active[k] && k != i) {
            let merged = (si * dist[i * n + k] + sj * dist[j * n + k]) / (si + sj);
            dist[i * n + k] = merged;
            dist[k * n + i] = merged;
        }
        size[i] += size[j];
        node[i] = n + step;

        row_min[i] = recompute_row(&dist, &active, i);
        for k in (0..j).filter(|&k| active[k] && k != i) {
            if stale[k] {
                row_min[k] = recompute_row(&dist, &active, k);
            } else if k < i {
                row_min[k] = row_min[k].min(dist[k * n + i]);
            }
        }
    }
    Dendrogram::from_merges(n, merges)
}

/// A seriated address order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddressOrder {
    /// Addresses in disk order.
    pub addresses: Vec<AddressId>,
    /// Matching row indices of the distance matrix.
    pub leaves: Vec<usize>,
    /// Summed distance between consecutive addresses.
    pub cost: f64,
}

impl AddressOrder {
    pub fn from_leaves(matrix: &DistanceMatrix, leaves: Vec<usize>) -> Self {
        AddressOrder {
            addresses: leaves.iter().map(|&l| matrix.ids()[l]).collect(),
            cost: matrix.path_cost(&leaves),
            leaves,
        }
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    pub fn position(&self, id: AddressId) -> Option<usize> {
        self.addresses.iter().position(|a| *a == id)
    }
}

struct LeafLayout {
    /// Unflipped in-order leaf sequence.
    seq: Vec<usize>,
    /// Position of every leaf in `seq`.
    pos: Vec<usize>,
    /// For every node, the `seq` range its leaves occupy.
    span: Vec<(usize, usize)>,
}

impl LeafLayout {
    fn new(tree: &Dendrogram) -> Self {
        let seq = tree.in_order();
        let n = tree.n_leaves();
        let mut pos = vec![0; n];
        for (p, &leaf) in seq.iter().enumerate() {
            pos[leaf] = p;
        }
        let mut span = vec![(0, 0); n + tree.merges().len()];
        for leaf in 0..n {
            span[leaf] = (pos[leaf], pos[leaf] + 1);
        }
        for (k, m) in tree.merges().iter().enumerate() {
            let (ls, le) = span[m.left];
            let (rs, re) = span[m.right];
            debug_assert_eq!(le, rs);
            span[n + k] = (ls.min(rs), le.max(re));
        }
        LeafLayout { seq, pos, span }
    }

    fn leaves(&self, node: usize) -> &[usize] {
        let (s, e) = self.span[node];
        &self.seq[s..e]
    }

    fn contains(&self, node: usize, leaf: usize) -> bool {
        let (s, e) = self.span[node];
        (s..e).contains(&self.pos[leaf])
    }

    /// Leaves that may sit at the far end of `node`'s ordering when `leaf`
    /// sits at the near end.
    fn far_ends(&self, tree: &Dendrogram, node: usize, leaf: usize) -> &[usize] {
        match tree.children(node) {
            None => self.leaves(node),
            Some((l, r)) if self.contains(l, leaf) => self.leaves(r),
            Some((l, _)) => self.leaves(l),
        }
    }
}

/// Optimal leaf ordering by dynamic programming over
/// `(subtree, leftmost leaf, rightmost leaf)`.
///
/// `best[i][j]` holds the cheapest cost of ordering the subtree rooted at
/// the lowest common ancestor of leaves `i` and `j` with `i` first and `j`
/// last. Each merge is solved in `O(|L|·|R|·(|L|+|R|))`, for `O(n³)` overall
/// and `O(n²)` memory. The objective is the open chain: the first and last
/// leaves are not adjacent.
pub fn optimal_leaf_order(
    tree: &Dendrogram,
    matrix: &DistanceMatrix,
) -> Result<AddressOrder, SeriationError> {
    let n = matrix.n();
    if tree.n_leaves() != n {
        return Err(SeriationError::SizeMismatch { tree: tree.n_leaves(), matrix: n });
    }
    if n <= 2 {
        return Ok(AddressOrder::from_leaves(matrix, tree.in_order()));
    }
    let layout = LeafLayout::new(tree);
    let mut best = vec![f64::INFINITY; n * n];
    for i in 0..n {
        best[i * n + i] = 0.0;
    }
    let mut through = vec![f64::INFINITY; n];
    for m in tree.merges() {
        let (w, x) = (m.left, m.right);
        for &i in layout.leaves(w) {
            let ks = layout.far_ends(tree, w, i);
            // through[mm] = cheapest way to finish w at some k and step to mm.
            for &mm in layout.leaves(x) {
                through[mm] = ks
                    .iter()
                    .map(|&kk| best[i * n + kk] + matrix.get(kk, mm))
                    .fold(f64::INFINITY, f64::min);
            }
            for &j in layout.leaves(x) {
                let v = layout
                    .far_ends(tree, x, j)
                    .iter()
                    .map(|&mm| through[mm] + best[mm * n + j])
                    .fold(f64::INFINITY, f64::min);
                best[i * n + j] = v;
                best[j * n + i] = v;
            }
        }
    }

    let root = tree.root().expect("non-empty tree");
    let (w, x) = tree.children(root).expect("root is internal for n > 2");
    let min = layout
        .leaves(w)
        .iter()
        .flat_map(|&i| layout.leaves(x).iter().map(move |&j| (i, j)))
        .map(|(i, j)| best[i * n + j])
        .fold(f64::INFINITY, f64::min);
    let limit = min + tie_tolerance(min);
    let mut ends: Vec<(usize, usize)> = layout
        .leaves(w)
        .iter()
        .flat_map(|&i| layout.leaves(x).iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| best[i * n + j] <= limit)
        .collect();
    ends.sort_unstable();
    let (i, j) = ends[0];

    let mut leaves = Vec::with_capacity(n);
    emit_order(tree, &layout, matrix, &best, root, i, j, &mut leaves);
    Ok(AddressOrder::from_leaves(matrix, leaves))
}

/// Appends the optimal ordering of `node` that starts at `first` and ends
/// at `last`.
#[allow(clippy::too_many_arguments)]
fn emit_order(
    tree: &Dendrogram,
    layout: &LeafLayout,
    matrix: &DistanceMatrix,
    best: &[f64],
    node: usize,
    first: usize,
    last: usize,
    out: &mut Vec<usize>,
) {
    let n = matrix.n();
    let Some((l, r)) = tree.children(node) else {
        out.push(first);
        return;
    };
    if !layout.contains(l, first) {
        let start = out.len();
        emit_order(tree, layout, matrix, best, node, last, first, out);
        out[start..].reverse();
        return;
    }
    let target = best[first * n + last];
    let limit = target + tie_tolerance(target);
    let mut choice = None;
    'search: for &k in layout.far_ends(tree, l, first) {
        for &m in layout.far_ends(tree, r, last) {
            let c = best[first * n + k] + matrix.get(k, m) + best[m * n + last];
            if c <= limit {
                choice = Some((k, m));
                break 'search;
            }
        }
    }
    let (k, m) = choice.expect("stored optimum is reachable");
    emit_order(tree, layout, matrix, best, l, first, k, out);
    emit_order(tree, layout, matrix, best, r, m, last, out);
}

/// Full seriation: distances, clustering, optimal leaf order.
pub fn seriate(pairs: &[PairStats], addresses: &BTreeSet<AddressId>) -> AddressOrder {
    let matrix = build_distance_matrix(pairs, addresses);
    let tree = cluster_addresses(&matrix);
    optimal_leaf_order(&tree, &matrix).expect("tree built from the same matrix")
}
