//! Random projection trees and forests.
//!
//! A tree recursively splits the data: a node draws a random unit direction,
//! projects its members onto it, draws a split point uniformly over the
//! projection range, and sends `proj < s` left and `proj >= s` right. Nodes
//! smaller than the minimum size stop splitting. The leaf that a point lands
//! in is a categorical group feature, one column per tree.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ioutil::atomic_write;
use crate::matrix::{DeepFeatureSet, DenseMatrix};
use crate::rng::indexed_stream;

/// Redraws of a degenerate split (empty side) before a node becomes a leaf.
const MAX_SPLIT_RETRIES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum RpNode {
    Internal {
        /// Unit-length projection direction.
        direction: Vec<f64>,
        /// Split point over the members' projections.
        split: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Left-to-right leaf number within the tree.
        leaf_id: u32,
        /// Training rows that landed here at build time.
        members: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpTree {
    dim: usize,
    min_node_size: usize,
    n_leaves: u32,
    /// Index 0 is the root.
    nodes: Vec<RpNode>,
}

impl RpTree {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_leaves(&self) -> u32 {
        self.n_leaves
    }

    pub fn nodes(&self) -> &[RpNode] {
        &self.nodes
    }

    /// Routes a feature row to its leaf ID.
    pub fn route(&self, row: &[f64]) -> Result<u32> {
        if row.len() != self.dim {
            return Err(Error::InvalidData(format!(
                "point has {} coordinates, tree was built on {}",
                row.len(),
                self.dim
            )));
        }
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                RpNode::Leaf { leaf_id, .. } => return Ok(*leaf_id),
                RpNode::Internal { direction, split, left, right } => {
                    let proj: f64 = direction.iter().zip(row).map(|(d, x)| d * x).sum();
                    at = if proj < *split { *left } else { *right };
                }
            }
        }
    }

    /// Root-to-leaf turn sequence (`L`/`R`) for a feature row.
    pub fn route_path(&self, row: &[f64]) -> Result<String> {
        if row.len() != self.dim {
            return Err(Error::InvalidData(format!(
                "point has {} coordinates, tree was built on {}",
                row.len(),
                self.dim
            )));
        }
        let mut at = 0usize;
        let mut path = String::new();
        loop {
            match &self.nodes[at] {
                RpNode::Leaf { .. } => return Ok(path),
                RpNode::Internal { direction, split, left, right } => {
                    let proj: f64 = direction.iter().zip(row).map(|(d, x)| d * x).sum();
                    if proj < *split {
                        path.push('L');
                        at = *left;
                    } else {
                        path.push('R');
                        at = *right;
                    }
                }
            }
        }
    }

    /// Leaf ID for each training row, from build-time membership.
    pub fn stored_leaf_ids(&self, n_rows: usize) -> Vec<u32> {
        let mut ids = vec![0u32; n_rows];
        for node in &self.nodes {
            if let RpNode::Leaf { leaf_id, members } = node {
                for &m in members {
                    ids[m as usize] = *leaf_id;
                }
            }
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpForest {
    version: u32,
    seed: u64,
    min_node_size: usize,
    trees: Vec<RpTree>,
}

impl RpForest {
    pub fn trees(&self) -> &[RpTree] {
        &self.trees
    }

    pub fn min_node_size(&self) -> usize {
        self.min_node_size
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let forest: RpForest =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if forest.version != 1 {
            return Err(Error::Format(format!("unsupported forest version {}", forest.version)));
        }
        Ok(forest)
    }
}

fn random_unit_direction(p: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Builds one tree. Nodes are processed in FIFO order; a node with fewer
/// than `min_node_size` members becomes a leaf, anything larger splits at a
/// uniform point over its projection range (a zero-length range, or a split
/// that keeps coming back empty, also ends in a leaf).
pub fn build_rptree(data: &DenseMatrix, min_node_size: usize, seed: u64) -> Result<RpTree> {
    build_rptree_with(data, min_node_size, &mut indexed_stream(seed, "rptree", 0))
}

fn build_rptree_with(data: &DenseMatrix, min_node_size: usize, rng: &mut impl Rng) -> Result<RpTree> {
    let n = data.n_rows();
    let p = data.n_cols();
    if n == 0 {
        return Err(Error::InvalidParameter("tree needs at least one row".into()));
    }
    if min_node_size < 2 {
        return Err(Error::InvalidParameter("minimum node size must be >= 2".into()));
    }
    if !data.is_finite() {
        return Err(Error::InvalidData("tree input contains non-finite values".into()));
    }

    let mut nodes: Vec<RpNode> = vec![RpNode::Leaf { leaf_id: 0, members: Vec::new() }];
    let mut queue: std::collections::VecDeque<(usize, Vec<u32>)> = std::collections::VecDeque::new();
    queue.push_back((0, (0..n as u32).collect()));

    while let Some((slot, members)) = queue.pop_front() {
        if members.len() < min_node_size {
            nodes[slot] = RpNode::Leaf { leaf_id: 0, members };
            continue;
        }
        let mut split = None;
        for _ in 0..MAX_SPLIT_RETRIES {
            let direction = random_unit_direction(p, rng);
            let projections: Vec<f64> = members
                .iter()
                .map(|&m| direction.iter().zip(data.row(m as usize)).map(|(d, x)| d * x).sum())
                .collect();
            let lo = projections.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = projections.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                break;
            }
            let s = rng.gen_range(lo..=hi);
            let mut left = Vec::new();
            let mut right = Vec::new();
            for (&m, &proj) in members.iter().zip(&projections) {
                if proj < s {
                    left.push(m);
                } else {
                    right.push(m);
                }
            }
            if !left.is_empty() && !right.is_empty() {
                split = Some((direction, s, left, right));
                break;
            }
        }
        match split {
            None => nodes[slot] = RpNode::Leaf { leaf_id: 0, members },
            Some((direction, s, left, right)) => {
                let left_slot = nodes.len();
                nodes.push(RpNode::Leaf { leaf_id: 0, members: Vec::new() });
                let right_slot = nodes.len();
                nodes.push(RpNode::Leaf { leaf_id: 0, members: Vec::new() });
                nodes[slot] =
                    RpNode::Internal { direction, split: s, left: left_slot, right: right_slot };
                queue.push_back((left_slot, left));
                queue.push_back((right_slot, right));
            }
        }
    }

    // pre-order pass numbers leaves left-to-right
    let mut n_leaves = 0u32;
    let mut stack = vec![0usize];
    while let Some(at) = stack.pop() {
        match &mut nodes[at] {
            RpNode::Leaf { leaf_id, .. } => {
                *leaf_id = n_leaves;
                n_leaves += 1;
            }
            RpNode::Internal { left, right, .. } => {
                let (l, r) = (*left, *right);
                stack.push(r);
                stack.push(l);
            }
        }
    }

    Ok(RpTree { dim: p, min_node_size, n_leaves, nodes })
}

/// Builds `n_trees` independent trees; tree `t` owns the RNG stream derived
/// from `(seed, t)`.
pub fn build_rpforest(
    data: &DenseMatrix,
    min_node_size: usize,
    n_trees: usize,
    seed: u64,
) -> Result<RpForest> {
    if n_trees == 0 {
        return Err(Error::InvalidParameter("ensemble size must be >= 1".into()));
    }
    let trees: Result<Vec<RpTree>> = (0..n_trees)
        .into_par_iter()
        .map(|t| build_rptree_with(data, min_node_size, &mut indexed_stream(seed, "rptree", t as u64)))
        .collect();
    Ok(RpForest { version: 1, seed, min_node_size, trees: trees? })
}

/// One categorical column per tree (named `rptree_<t>`): the leaf ID each
/// row routes to.
pub fn leaf_features(forest: &RpForest, data: &DenseMatrix) -> Result<DeepFeatureSet> {
    let mut out = DeepFeatureSet::new("rpforest-leaves");
    for (t, tree) in forest.trees.iter().enumerate() {
        let codes: Result<Vec<u32>> =
            (0..data.n_rows()).map(|row| tree.route(data.row(row))).collect();
        out.push_column(format!("rptree_{t:03}"), codes?, None);
    }
    Ok(out)
}

/// Root-to-leaf path strings as a categorical column (codes by first
/// appearance, the path strings kept as level names). Less effective than
/// leaf IDs; off by default in the pipeline.
pub fn encode_root_paths(tree: &RpTree, data: &DenseMatrix) -> Result<DeepFeatureSet> {
    let mut codes = Vec::with_capacity(data.n_rows());
    let mut levels: Vec<String> = Vec::new();
    let mut seen: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
    for row in 0..data.n_rows() {
        let path = tree.route_path(data.row(row))?;
        let next = seen.len() as u32;
        let code = *seen.entry(path.clone()).or_insert_with(|| {
            levels.push(path);
            next
        });
        codes.push(code);
    }
    let mut out = DeepFeatureSet::new("rpforest-paths");
    out.push_column("rppath_000", codes, Some(levels));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> DenseMatrix {
        let mut rng = crate::rng::stream(seed, "rp-data");
        DenseMatrix::new(n, p, (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn two_blob_data(n_per_blob: usize, seed: u64) -> DenseMatrix {
        let mut rng = crate::rng::stream(seed, "rp-blobs");
        let p = 5;
        let mut data = Vec::new();
        for blob in 0..2 {
            let center = if blob == 0 { 0.0 } else { 100.0 };
            for _ in 0..n_per_blob {
                for _ in 0..p {
                    data.push(center + rng.gen_range(-0.5..0.5));
                }
            }
        }
        DenseMatrix::new(2 * n_per_blob, p, data).unwrap()
    }

    fn leaves(tree: &RpTree) -> Vec<(u32, &[u32])> {
        tree.nodes()
            .iter()
            .filter_map(|n| match n {
                RpNode::Leaf { leaf_id, members } => Some((*leaf_id, members.as_slice())),
                RpNode::Internal { .. } => None,
            })
            .collect()
    }

    #[test]
    fn small_node_becomes_root_leaf() {
        let data = random_data(5, 3, 1);
        let tree = build_rptree(&data, 20, 7).unwrap();
        assert_eq!(tree.n_leaves(), 1);
        let ids = tree.stored_leaf_ids(5);
        assert!(ids.iter().all(|&i| i == 0));
    }

    #[test]
    fn leaves_partition_the_index_set() {
        for seed in 0..20 {
            let data = random_data(150, 4, seed);
            let tree = build_rptree(&data, 10, seed).unwrap();
            let mut seen = vec![false; 150];
            for (_, members) in leaves(&tree) {
                for &m in members {
                    assert!(!seen[m as usize], "row {m} in two leaves");
                    seen[m as usize] = true;
                }
            }
            assert!(seen.into_iter().all(|s| s), "seed {seed}: some row missing from leaves");
        }
    }

    #[test]
    fn split_points_lie_inside_member_projections() {
        let data = random_data(200, 3, 5);
        let tree = build_rptree(&data, 8, 11).unwrap();

        fn members_under(nodes: &[RpNode], at: usize, out: &mut Vec<u32>) {
            match &nodes[at] {
                RpNode::Leaf { members, .. } => out.extend_from_slice(members),
                RpNode::Internal { left, right, .. } => {
                    members_under(nodes, *left, out);
                    members_under(nodes, *right, out);
                }
            }
        }

        for (at, node) in tree.nodes().iter().enumerate() {
            if let RpNode::Internal { direction, split, .. } = node {
                let mut members = Vec::new();
                members_under(tree.nodes(), at, &mut members);
                let projections: Vec<f64> = members
                    .iter()
                    .map(|&m| {
                        direction.iter().zip(data.row(m as usize)).map(|(d, x)| d * x).sum()
                    })
                    .collect();
                let lo = projections.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = projections.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    (lo..=hi).contains(split),
                    "split {split} outside projection range [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn split_nodes_respect_size_floor() {
        let data = random_data(300, 4, 6);
        let min_node_size = 15;
        let tree = build_rptree(&data, min_node_size, 13).unwrap();

        fn check(nodes: &[RpNode], at: usize, min: usize) -> usize {
            match &nodes[at] {
                RpNode::Leaf { members, .. } => members.len(),
                RpNode::Internal { left, right, .. } => {
                    let total = check(nodes, *left, min) + check(nodes, *right, min);
                    assert!(total >= min, "node of size {total} was split");
                    total
                }
            }
        }
        assert_eq!(check(tree.nodes(), 0, min_node_size), 300);
    }

    #[test]
    fn identical_points_make_a_leaf() {
        let data = DenseMatrix::new(50, 3, vec![1.5; 150]).unwrap();
        let tree = build_rptree(&data, 10, 3).unwrap();
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn min_node_size_below_two_rejected() {
        let data = random_data(10, 2, 7);
        assert!(matches!(build_rptree(&data, 1, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn forests_are_deterministic_given_seed() {
        let data = random_data(120, 4, 8);
        let a = build_rpforest(&data, 10, 8, 77).unwrap();
        let b = build_rpforest(&data, 10, 8, 77).unwrap();
        assert_eq!(a, b);
        let fa = leaf_features(&a, &data).unwrap();
        let fb = leaf_features(&b, &data).unwrap();
        for c in 0..fa.n_columns() {
            assert_eq!(fa.column(c), fb.column(c));
        }
        let c = build_rpforest(&data, 10, 8, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn routing_reproduces_stored_membership() {
        let data = random_data(180, 5, 9);
        let forest = build_rpforest(&data, 12, 6, 21).unwrap();
        for tree in forest.trees() {
            let stored = tree.stored_leaf_ids(180);
            for row in 0..180 {
                assert_eq!(tree.route(data.row(row)).unwrap(), stored[row]);
            }
        }
    }

    #[test]
    fn leaf_feature_column_count_matches_ensemble() {
        let data = random_data(60, 3, 10);
        let forest = build_rpforest(&data, 20, 600, 5).unwrap();
        let features = leaf_features(&forest, &data).unwrap();
        assert_eq!(features.n_columns(), 600);
        assert_eq!(features.names()[0], "rptree_000");
        assert_eq!(features.names()[599], "rptree_599");
    }

    #[test]
    fn two_blob_data_rarely_mixes_leaves() {
        let data = two_blob_data(100, 11);
        let mut mixed = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let tree = build_rptree(&data, 20, seed).unwrap();
            for (_, members) in leaves(&tree) {
                let a = members.iter().filter(|&&m| m < 100).count();
                total += 1;
                if a != 0 && a != members.len() {
                    mixed += 1;
                }
            }
        }
        let fraction = mixed as f64 / total as f64;
        assert!(fraction < 0.10, "blob-mixing leaf fraction {fraction}");
    }

    #[test]
    fn depth_zero_paths_are_empty() {
        let data = random_data(5, 3, 12);
        let tree = build_rptree(&data, 20, 7).unwrap();
        let paths = encode_root_paths(&tree, &data).unwrap();
        assert_eq!(paths.levels(0), Some(&["".to_string()][..]));
        assert!(paths.column(0).iter().all(|&c| c == 0));
    }

    #[test]
    fn sibling_points_diverge_at_position_zero() {
        let data = two_blob_data(30, 13);
        let tree = build_rptree(&data, 20, 3).unwrap();
        let first = tree.route_path(data.row(0)).unwrap();
        let other = tree.route_path(data.row(30)).unwrap();
        assert_ne!(first.chars().next(), other.chars().next());
    }

    #[test]
    fn path_partition_equals_leaf_partition() {
        let data = random_data(140, 4, 14);
        let tree = build_rptree(&data, 10, 9).unwrap();
        let by_leaf: Vec<u32> = (0..140).map(|r| tree.route(data.row(r)).unwrap()).collect();
        let by_path = encode_root_paths(&tree, &data).unwrap();
        let paths = by_path.column(0);
        for i in 0..140 {
            for j in 0..140 {
                assert_eq!(by_leaf[i] == by_leaf[j], paths[i] == paths[j]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = random_data(40, 3, 15);
        let tree = build_rptree(&data, 5, 1).unwrap();
        assert!(matches!(tree.route(&[1.0, 2.0]), Err(Error::InvalidData(_))));
    }

    #[test]
    fn forest_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        let data = random_data(50, 3, 16);
        let forest = build_rpforest(&data, 10, 4, 31).unwrap();
        forest.save_json(&path).unwrap();
        let back = RpForest::load_json(&path).unwrap();
        assert_eq!(forest, back);
    }
}
