//! Random-forest classifier over mixed feature tables, per-class vote
//! vectors, and the linear rule for combining two classifiers' votes.

mod tree;

pub use tree::{SplitRule, TreeNode};

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ioutil::atomic_write;
use crate::matrix::{ColumnKind, FeatureMatrix};
use crate::rng::indexed_stream;

/// Training knobs. `mtry` is the number of columns sampled (without
/// replacement) at each node; `bootstrap: false` is a test hook that trains
/// every tree on the full sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn new(n_trees: usize, mtry: usize, seed: u64) -> Self {
        Self { n_trees, mtry, seed, bootstrap: true }
    }
}

/// Per-class nonnegative weights; for a single forest, the fraction of trees
/// voting for each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteVector {
    weights: Vec<f64>,
}

impl VoteVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidData("empty vote vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidData("vote weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidData("vote weights must not all be zero".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the heaviest class; ties go to the smallest index.
    pub fn argmax_index(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// Componentwise `v1 + beta * v2`; the combined label is the argmax.
pub fn combine_votes(v1: &VoteVector, v2: &VoteVector, beta: f64) -> Result<VoteVector> {
    if v1.weights.len() != v2.weights.len() {
        return Err(Error::InvalidData(format!(
            "vote vectors have {} and {} classes",
            v1.weights.len(),
            v2.weights.len()
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
    }
    VoteVector::new(v1.weights.iter().zip(&v2.weights).map(|(a, b)| a + beta * b).collect())
}

/// Trained ensemble of classification trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    version: u32,
    classes: Vec<u32>,
    n_trees: usize,
    mtry: usize,
    seed: u64,
    column_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
    oob_error: Option<f64>,
    trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Class values seen in training, ascending; vote vectors align to this.
    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    /// Out-of-bag error estimate; `None` when the bootstrap was disabled.
    pub fn oob_error(&self) -> Option<f64> {
        self.oob_error
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    fn check_schema(&self, x: &FeatureMatrix) -> Result<()> {
        if x.names() != &self.column_names[..] {
            return Err(Error::SchemaMismatch(format!(
                "feature columns do not match the trained model ({} vs {} columns)",
                x.n_cols(),
                self.column_names.len()
            )));
        }
        for (name, (got, expect)) in
            self.column_names.iter().zip(x.kinds().iter().zip(&self.column_kinds))
        {
            if got.is_categorical() != expect.is_categorical() {
                return Err(Error::SchemaMismatch(format!("column `{name}` kind differs")));
            }
        }
        Ok(())
    }

    /// Vote vector for one row: the fraction of trees voting for each class.
    pub fn predict_votes(&self, x: &FeatureMatrix, row: usize) -> Result<VoteVector> {
        self.check_schema(x)?;
        Ok(self.votes_unchecked(x, row))
    }

    fn votes_unchecked(&self, x: &FeatureMatrix, row: usize) -> VoteVector {
        let mut counts = vec![0u32; self.classes.len()];
        for tree in &self.trees {
            counts[tree.route(x, row)] += 1;
        }
        let n = self.trees.len() as f64;
        VoteVector { weights: counts.into_iter().map(|c| f64::from(c) / n).collect() }
    }

    /// Predicted class value (argmax vote, ties to the smallest class).
    pub fn predict_label(&self, x: &FeatureMatrix, row: usize) -> Result<u32> {
        let votes = self.predict_votes(x, row)?;
        Ok(self.classes[votes.argmax_index()])
    }

    /// Votes for every row.
    pub fn predict_all_votes(&self, x: &FeatureMatrix) -> Result<Vec<VoteVector>> {
        self.check_schema(x)?;
        Ok((0..x.n_rows()).map(|row| self.votes_unchecked(x, row)).collect())
    }

    /// Labels for every row.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<u32>> {
        Ok(self
            .predict_all_votes(x)?
            .into_iter()
            .map(|v| self.classes[v.argmax_index()])
            .collect())
    }

    /// Fraction of predictions differing from `truth`.
    pub fn error_rate(&self, x: &FeatureMatrix, truth: &[u32]) -> Result<f64> {
        let predictions = self.predict(x)?;
        if predictions.len() != truth.len() {
            return Err(Error::InvalidData("label count mismatch".into()));
        }
        let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
        Ok(wrong as f64 / truth.len() as f64)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let model: ForestModel = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if model.version != 1 {
            return Err(Error::Format(format!("unsupported model version {}", model.version)));
        }
        Ok(model)
    }
}

/// Trains a random forest: each tree sees a bootstrap sample (n draws with
/// replacement) and Gini-split nodes over `mtry` randomly sampled columns,
/// grown until pure with no pruning.
pub fn train_forest(x: &FeatureMatrix, params: &ForestParams) -> Result<ForestModel> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 rows, got {n}")));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    if params.mtry == 0 || params.mtry > x.n_cols() {
        return Err(Error::InvalidParameter(format!(
            "mtry must be in [1, {}], got {}",
            x.n_cols(),
            params.mtry
        )));
    }
    let labels = x
        .labels()
        .ok_or_else(|| Error::InvalidData("training features carry no labels".into()))?;
    if !x.data().is_finite() {
        return Err(Error::InvalidData("training features contain non-finite values".into()));
    }

    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateModel("training labels contain a single class".into()));
    }
    let y: Vec<usize> =
        labels.iter().map(|l| classes.binary_search(l).expect("by construction")).collect();

    struct TreeFit {
        tree: TreeNode,
        oob_rows: Vec<usize>,
    }

    let fits: Vec<TreeFit> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = indexed_stream(params.seed, "forest-tree", t as u64);
            let (rows, oob_rows) = if params.bootstrap {
                let mut in_bag = vec![false; n];
                let rows: Vec<usize> =
                    (0..n).map(|_| rng.gen_range(0..n)).inspect(|&r| in_bag[r] = true).collect();
                let oob = (0..n).filter(|&r| !in_bag[r]).collect();
                (rows, oob)
            } else {
                ((0..n).collect(), Vec::new())
            };
            let tree = tree::grow_tree(x, &y, &rows, classes.len(), params.mtry, &mut rng);
            TreeFit { tree, oob_rows }
        })
        .collect();

    let oob_error = if params.bootstrap {
        let mut oob_votes = vec![vec![0u32; classes.len()]; n];
        for fit in &fits {
            for &row in &fit.oob_rows {
                oob_votes[row][fit.tree.route(x, row)] += 1;
            }
        }
        let mut scored = 0usize;
        let mut wrong = 0usize;
        for (row, votes) in oob_votes.iter().enumerate() {
            if votes.iter().sum::<u32>() == 0 {
                continue;
            }
            scored += 1;
            if tree::majority_class(votes) != y[row] {
                wrong += 1;
            }
        }
        (scored > 0).then(|| wrong as f64 / scored as f64)
    } else {
        None
    };

    Ok(ForestModel {
        version: 1,
        classes,
        n_trees: params.n_trees,
        mtry: params.mtry,
        seed: params.seed,
        column_names: x.names().to_vec(),
        column_kinds: x.kinds().to_vec(),
        oob_error,
        trees: fits.into_iter().map(|f| f.tree).collect(),
    })
}

/// The two node-split candidate counts the protocol chooses between:
/// `ceil(sqrt(p))` and `ceil(2 sqrt(p))`, clamped to `[1, p]`.
pub fn mtry_candidates(p: usize) -> [usize; 2] {
    let root = (p as f64).sqrt();
    let a = (root.ceil() as usize).clamp(1, p);
    let b = ((2.0 * root).ceil() as usize).clamp(1, p);
    [a, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{DeepFeatureSet, DenseMatrix};
    use rand::Rng;

    fn separable_table(n_per_class: usize, seed: u64) -> FeatureMatrix {
        let mut rng = crate::rng::stream(seed, "separable");
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2u32 {
            let offset = if class == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per_class {
                rows.push(vec![offset + rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0)]);
                labels.push(class + 1);
            }
        }
        let data = DenseMatrix::from_rows(&rows).unwrap();
        FeatureMatrix::from_continuous(data, "f", Some(labels)).unwrap()
    }

    #[test]
    fn separable_data_has_low_oob_error() {
        let table = separable_table(100, 31);
        let model = train_forest(&table, &ForestParams::new(50, 1, 7)).unwrap();
        let oob = model.oob_error().expect("bootstrap enabled");
        assert!(oob < 0.05, "oob error {oob} too high for separable data");
    }

    #[test]
    fn training_error_zero_without_bootstrap_on_separable_data() {
        let table = separable_table(50, 32);
        let mut params = ForestParams::new(10, 2, 3);
        params.bootstrap = false;
        let model = train_forest(&table, &params).unwrap();
        assert_eq!(model.error_rate(&table, table.labels().unwrap()).unwrap(), 0.0);
        assert!(model.oob_error().is_none());
    }

    #[test]
    fn single_tree_forest_equals_its_cart_tree() {
        let table = separable_table(30, 33);
        let mut params = ForestParams::new(1, 2, 5);
        params.bootstrap = false;
        let model = train_forest(&table, &params).unwrap();
        let tree = &model.trees()[0];
        for row in 0..table.n_rows() {
            let via_forest = model.predict_label(&table, row).unwrap();
            let via_tree = model.classes()[tree.route(&table, row)];
            assert_eq!(via_forest, via_tree);
            let votes = model.predict_votes(&table, row).unwrap();
            assert!(votes.weights().iter().any(|&w| w == 1.0));
        }
    }

    #[test]
    fn votes_are_tree_fractions_and_sum_to_one() {
        let table = separable_table(40, 34);
        let model = train_forest(&table, &ForestParams::new(25, 1, 11)).unwrap();
        for row in [0, 5, 45] {
            let votes = model.predict_votes(&table, row).unwrap();
            let manual: Vec<f64> = {
                let mut counts = vec![0u32; model.classes().len()];
                for tree in model.trees() {
                    counts[tree.route(&table, row)] += 1;
                }
                counts.into_iter().map(|c| f64::from(c) / 25.0).collect()
            };
            assert_eq!(votes.weights(), &manual[..]);
            assert!((votes.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unanimous_votes_on_deep_blob_points() {
        let table = separable_table(100, 35);
        let model = train_forest(&table, &ForestParams::new(40, 2, 13)).unwrap();
        let votes = model.predict_votes(&table, 0).unwrap();
        assert_eq!(votes.weights()[0], 1.0);
        assert_eq!(votes.weights()[1], 0.0);
    }

    #[test]
    fn label_permutation_yields_null_error() {
        let mut rng = crate::rng::stream(36, "null-model");
        let n = 2000;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..5).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        // balanced labels, shuffled independently of the features
        let mut labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let data = DenseMatrix::from_rows(&rows).unwrap();
        let table = FeatureMatrix::from_continuous(data, "f", Some(labels.clone())).unwrap();

        let train_idx: Vec<usize> = (0..n / 2).collect();
        let test_idx: Vec<usize> = (n / 2..n).collect();
        let train = table.select_rows(&train_idx);
        let test = table.select_rows(&test_idx);
        let model = train_forest(&train, &ForestParams::new(50, 2, 17)).unwrap();
        let error = model.error_rate(&test, test.labels().unwrap()).unwrap();

        let mut class_counts = [0usize; 2];
        for &l in test.labels().unwrap() {
            class_counts[l as usize] += 1;
        }
        let majority_rate =
            *class_counts.iter().max().unwrap() as f64 / test.n_rows() as f64;
        // Null data: error should sit near the majority-class rate.
        assert!(
            (error - majority_rate).abs() <= 0.03 + 1e-9,
            "null-model error {error} vs majority rate {majority_rate}"
        );
    }

    #[test]
    fn categorical_columns_drive_splits() {
        // One categorical column fully determines the class; the forest must
        // reach zero training error through subset splits alone.
        let n = 120;
        let codes: Vec<u32> = (0..n).map(|i| (i % 6) as u32).collect();
        let labels: Vec<u32> = codes.iter().map(|c| u32::from(*c % 2 == 0)).collect();
        let data = DenseMatrix::zeros(n, 1);
        let mut table = FeatureMatrix::from_continuous(data, "f", Some(labels.clone())).unwrap();
        let mut deep = DeepFeatureSet::new("test");
        deep.push_column("group", codes, None);
        table.augment(&deep).unwrap();

        let mut params = ForestParams::new(5, 2, 19);
        params.bootstrap = false;
        let model = train_forest(&table, &params).unwrap();
        assert_eq!(model.error_rate(&table, &labels).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let table = separable_table(50, 37);
        let a = train_forest(&table, &ForestParams::new(20, 2, 23)).unwrap();
        let b = train_forest(&table, &ForestParams::new(20, 2, 23)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn json_roundtrip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let table = separable_table(40, 38);
        let model = train_forest(&table, &ForestParams::new(15, 2, 29)).unwrap();
        model.save_json(&path).unwrap();
        let back = ForestModel::load_json(&path).unwrap();
        assert_eq!(model.predict(&table).unwrap(), back.predict(&table).unwrap());
    }

    #[test]
    fn error_paths() {
        let table = separable_table(10, 39);
        assert!(matches!(
            train_forest(&table, &ForestParams::new(5, 99, 1)),
            Err(Error::InvalidParameter(_))
        ));
        let mut single = separable_table(10, 40);
        single.set_labels(Some(vec![1; 20])).unwrap();
        assert!(matches!(
            train_forest(&single, &ForestParams::new(5, 1, 1)),
            Err(Error::DegenerateModel(_))
        ));
        let model = train_forest(&table, &ForestParams::new(5, 1, 1)).unwrap();
        let other = FeatureMatrix::from_continuous(DenseMatrix::zeros(2, 3), "g", None).unwrap();
        assert!(matches!(model.predict(&other), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn combine_votes_matches_reference_arithmetic() {
        let v1 = VoteVector::new(vec![0.38, 0.14, 0.11, 0.37]).unwrap();
        let v2 = VoteVector::new(vec![0.28, 0.08, 0.15, 0.49]).unwrap();
        let combined = combine_votes(&v1, &v2, 1.1).unwrap();
        let expected = [0.688, 0.228, 0.275, 0.909];
        for (got, want) in combined.weights().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(combined.argmax_index(), 3);
        assert_eq!(v1.argmax_index(), 0);
        assert_eq!(v2.argmax_index(), 3);
    }

    #[test]
    fn combine_beta_zero_is_identity() {
        let v1 = VoteVector::new(vec![0.6, 0.4]).unwrap();
        let v2 = VoteVector::new(vec![0.1, 0.9]).unwrap();
        assert_eq!(combine_votes(&v1, &v2, 0.0).unwrap(), v1);
    }

    #[test]
    fn combine_argmax_invariant_under_positive_scaling() {
        let v1 = VoteVector::new(vec![0.38, 0.14, 0.11, 0.37]).unwrap();
        let v2 = VoteVector::new(vec![0.28, 0.08, 0.15, 0.49]).unwrap();
        let reference = combine_votes(&v1, &v2, 1.1).unwrap().argmax_index();
        for c in [0.01, 0.5, 3.0, 250.0] {
            let s1 = VoteVector::new(v1.weights().iter().map(|w| w * c).collect()).unwrap();
            let s2 = VoteVector::new(v2.weights().iter().map(|w| w * c).collect()).unwrap();
            assert_eq!(combine_votes(&s1, &s2, 1.1).unwrap().argmax_index(), reference);
        }
    }

    #[test]
    fn combine_rejects_mismatched_lengths() {
        let v1 = VoteVector::new(vec![0.5, 0.5]).unwrap();
        let v2 = VoteVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(combine_votes(&v1, &v2, 1.0), Err(Error::InvalidData(_))));
    }

    #[test]
    fn vote_tie_breaks_to_smallest_class() {
        let v = VoteVector::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(v.argmax_index(), 0);
    }

    #[test]
    fn mtry_candidate_grid() {
        assert_eq!(mtry_candidates(40), [7, 13]);
        assert_eq!(mtry_candidates(2601), [51, 102]);
        assert_eq!(mtry_candidates(2), [2, 2]);
    }
}
