//! Experiment orchestration: repeated random half splits, optional
//! training-label noise, deep-feature augmentation, forest training per
//! node-sample-count candidate, and 0-1 test loss aggregation.

pub mod analysis;
pub mod tables;

use rand::RngCore;
use rayon::prelude::*;

use crate::clustering::{
    agglomerative, cut_dendrogram, divisive, kmeans, ClusterMethod, DEFAULT_KMEANS_MAX_ITER,
};
use crate::error::{Error, Result};
use crate::forest::{mtry_candidates, train_forest, ForestParams};
use crate::matrix::{DeepFeatureSet, DenseMatrix, FeatureMatrix};
use crate::rng::indexed_stream;
use crate::rpforest::{build_rpforest, leaf_features};
use crate::synth::{sample, MixtureSpec};

/// Where the experiment's rows come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Draw `n` rows from a mixture once, then re-split per run.
    Synthetic { spec: MixtureSpec, n: usize, sample_seed: u64 },
    /// A prebuilt labeled table (e.g. image features).
    Table(FeatureMatrix),
}

/// An unsupervised feature generator attached to the experiment.
#[derive(Debug, Clone)]
pub enum DeepFeatureSpec {
    Clustering { methods: Vec<ClusterMethod>, k_range: (usize, usize) },
    RpForest { n_trees: usize, min_node_size: usize },
}

/// Whether unsupervised learners see all rows or the training half only.
///
/// Pooled is the default: group features are label-free, and fitting them on
/// the full table matches how the corpus-level features are produced. The
/// train-only mode refits per run and extends assignments to test rows
/// (nearest centroid for K-means, nearest training point for hierarchies,
/// routing for projection trees).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitScope {
    Pooled,
    TrainOnly,
}

/// Node-sample-count policy for forest training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtryPolicy {
    /// Train with both `ceil(sqrt(p))` and `ceil(2 sqrt(p))` and keep the
    /// better test error each run.
    BetterOfGrid,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub deep: Vec<DeepFeatureSpec>,
    pub fit_scope: FitScope,
    pub n_trees: usize,
    pub mtry: MtryPolicy,
    pub train_fraction: f64,
    pub n_runs: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Protocol defaults: half split, 100 runs, 100 trees, both mtry
    /// candidates, pooled unsupervised fits, no label noise.
    pub fn new(data: DataSource, seed: u64) -> Self {
        Self {
            data,
            deep: Vec::new(),
            fit_scope: FitScope::Pooled,
            n_trees: 100,
            mtry: MtryPolicy::BetterOfGrid,
            train_fraction: 0.5,
            n_runs: 100,
            epsilon: 0.0,
            seed,
        }
    }

    /// Stable fingerprint of every protocol knob, for output metadata.
    pub fn config_hash(&self) -> u64 {
        let summary = format!(
            "{:?}|{:?}|{}|{:?}|{}|{}|{}|{}|{:?}",
            match &self.data {
                DataSource::Synthetic { spec, n, sample_seed } =>
                    format!("synthetic({:x},{n},{sample_seed})", spec.spec_hash()),
                DataSource::Table(t) => format!("table({}x{})", t.n_rows(), t.n_cols()),
            },
            self.deep,
            self.n_trees,
            self.mtry,
            self.train_fraction,
            self.n_runs,
            self.epsilon,
            self.seed,
            self.fit_scope,
        );
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in summary.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Aggregated protocol output.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// 0-1 test loss of each completed run.
    pub per_run: Vec<f64>,
    /// Runs dropped because the noisy training half held a single class.
    pub skipped_runs: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub config_hash: u64,
    pub seed: u64,
}

impl ExperimentResult {
    fn from_runs(per_run: Vec<f64>, skipped_runs: usize, config_hash: u64, seed: u64) -> Result<Self> {
        if per_run.is_empty() {
            return Err(Error::DegenerateModel("every run was skipped".into()));
        }
        let m = per_run.len() as f64;
        let mean_error = per_run.iter().sum::<f64>() / m;
        let std_error = if per_run.len() > 1 {
            (per_run.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                / m.sqrt()
        } else {
            0.0
        };
        Ok(Self { per_run, skipped_runs, mean_error, std_error, config_hash, seed })
    }
}

/// Builds the base labeled table for a data source.
pub fn materialize(data: &DataSource) -> Result<FeatureMatrix> {
    match data {
        DataSource::Synthetic { spec, n, sample_seed } => {
            let drawn = sample(spec, *n, *sample_seed)?;
            FeatureMatrix::from_continuous(drawn.x, "f", Some(drawn.y))
        }
        DataSource::Table(table) => {
            if table.labels().is_none() {
                return Err(Error::InvalidData("experiment table carries no labels".into()));
            }
            Ok(table.clone())
        }
    }
}

/// Fits every configured deep-feature generator on `data` (the continuous
/// base features) and returns the merged column set.
pub fn fit_deep_features(
    data: &DenseMatrix,
    specs: &[DeepFeatureSpec],
    seed: u64,
) -> Result<DeepFeatureSet> {
    let mut out = DeepFeatureSet::new("");
    for spec in specs {
        let set = match spec {
            DeepFeatureSpec::Clustering { methods, k_range } => {
                crate::clustering::clustering_features(data, methods, *k_range, seed)?
            }
            DeepFeatureSpec::RpForest { n_trees, min_node_size } => {
                let forest = build_rpforest(data, *min_node_size, *n_trees, seed)?;
                leaf_features(&forest, data)?
            }
        };
        out.merge(set)?;
    }
    Ok(out)
}

/// Train-only variant: generators are fit on the training rows and extended
/// to the remaining rows. Returns full-length columns (train rows keep their
/// fitted IDs).
fn fit_deep_features_train_only(
    data: &DenseMatrix,
    train: &[usize],
    specs: &[DeepFeatureSpec],
    seed: u64,
) -> Result<DeepFeatureSet> {
    let n = data.n_rows();
    let train_data = data.select_rows(train);
    let test: Vec<usize> = {
        let mut in_train = vec![false; n];
        for &i in train {
            in_train[i] = true;
        }
        (0..n).filter(|&i| !in_train[i]).collect()
    };

    // nearest training row per held-out row, shared by the hierarchies
    let nearest_train: Vec<usize> = test
        .iter()
        .map(|&t| {
            let row = data.row(t);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (pos, &tr) in train.iter().enumerate() {
                let d: f64 =
                    row.iter().zip(data.row(tr)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = pos;
                }
            }
            best
        })
        .collect();

    let scatter = |train_codes: &[u32], test_codes: &[u32]| -> Vec<u32> {
        let mut full = vec![0u32; n];
        for (pos, &i) in train.iter().enumerate() {
            full[i] = train_codes[pos];
        }
        for (pos, &i) in test.iter().enumerate() {
            full[i] = test_codes[pos];
        }
        full
    };

    let mut out = DeepFeatureSet::new("");
    for spec in specs {
        match spec {
            DeepFeatureSpec::Clustering { methods, k_range } => {
                let (lo, hi) = *k_range;
                if lo < 2 || lo > hi || hi > train.len() {
                    return Err(Error::InvalidParameter(format!(
                        "k range [{lo}, {hi}] must sit within [2, {}]",
                        train.len()
                    )));
                }
                for method in methods {
                    let mut set = DeepFeatureSet::new(method.to_string());
                    match method {
                        ClusterMethod::KMeans => {
                            for k in lo..=hi {
                                let name = format!("{method}_k{k}");
                                let fit = kmeans(
                                    &train_data,
                                    k,
                                    DEFAULT_KMEANS_MAX_ITER,
                                    indexed_stream(seed, &name, 0).next_u64(),
                                )?;
                                let test_codes: Vec<u32> = test
                                    .iter()
                                    .map(|&t| {
                                        let row = data.row(t);
                                        let mut best = 0usize;
                                        let mut best_d = f64::INFINITY;
                                        for c in 0..k {
                                            let d: f64 = row
                                                .iter()
                                                .zip(fit.centroids.row(c))
                                                .map(|(a, b)| (a - b) * (a - b))
                                                .sum();
                                            if d < best_d {
                                                best_d = d;
                                                best = c;
                                            }
                                        }
                                        best as u32
                                    })
                                    .collect();
                                set.push_column(
                                    name,
                                    scatter(&fit.assignment.labels, &test_codes),
                                    None,
                                );
                            }
                        }
                        ClusterMethod::Agglomerative(_) | ClusterMethod::Divisive => {
                            let dendrogram = match method {
                                ClusterMethod::Agglomerative(linkage) => {
                                    agglomerative(&train_data, *linkage)?
                                }
                                _ => divisive(&train_data)?,
                            };
                            for k in lo..=hi {
                                let cut = cut_dendrogram(&dendrogram, k)?;
                                let test_codes: Vec<u32> = nearest_train
                                    .iter()
                                    .map(|&pos| cut.labels[pos])
                                    .collect();
                                set.push_column(
                                    format!("{method}_k{k}"),
                                    scatter(&cut.labels, &test_codes),
                                    None,
                                );
                            }
                        }
                    }
                    out.merge(set)?;
                }
            }
            DeepFeatureSpec::RpForest { n_trees, min_node_size } => {
                let forest = build_rpforest(&train_data, *min_node_size, *n_trees, seed)?;
                let mut set = DeepFeatureSet::new("rpforest-leaves");
                for (t, tree) in forest.trees().iter().enumerate() {
                    let codes: Result<Vec<u32>> =
                        (0..n).map(|row| tree.route(data.row(row))).collect();
                    set.push_column(format!("rptree_{t:03}"), codes?, None);
                }
                out.merge(set)?;
            }
        }
    }
    Ok(out)
}

/// Runs the full protocol and aggregates per-run 0-1 test losses.
///
/// Each run: draw a train/test split, fit (or reuse) unsupervised features,
/// flip a fraction of training labels, train one forest per mtry candidate,
/// and keep the better test error. Runs whose noisy training half collapses
/// to a single class are skipped and counted.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidParameter("train fraction must be in (0, 1)".into()));
    }
    if cfg.n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.epsilon) {
        return Err(Error::InvalidParameter("epsilon must be in [0, 1]".into()));
    }

    let base = materialize(&cfg.data)?;
    let n = base.n_rows();
    let train_size = (cfg.train_fraction * n as f64).floor() as usize;
    if train_size == 0 || train_size == n {
        return Err(Error::InvalidParameter(format!(
            "train fraction {} leaves an empty split for {n} rows",
            cfg.train_fraction
        )));
    }

    // pooled fits see the data once, before any split
    let pooled = match cfg.fit_scope {
        FitScope::Pooled if !cfg.deep.is_empty() => {
            let continuous = base.continuous_data();
            Some(fit_deep_features(&continuous, &cfg.deep, derived_seed(cfg.seed, "deepfeat"))?)
        }
        _ => None,
    };
    let pooled_table = match &pooled {
        Some(deep) => {
            let mut table = base.clone();
            table.augment(deep)?;
            Some(table)
        }
        None => None,
    };

    let clean_labels = base.labels().expect("materialize guarantees labels").to_vec();
    let classes = {
        let mut c = clean_labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    };

    let runs: Vec<Result<Option<f64>>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run| {
            let run = run as u64;
            let mut split_rng = indexed_stream(cfg.seed, "split", run);
            let mut train_idx: Vec<usize> =
                rand::seq::index::sample(&mut split_rng, n, train_size).into_vec();
            train_idx.sort_unstable();
            let test_idx: Vec<usize> = {
                let mut in_train = vec![false; n];
                for &i in &train_idx {
                    in_train[i] = true;
                }
                (0..n).filter(|&i| !in_train[i]).collect()
            };

            let table = match (&pooled_table, cfg.fit_scope) {
                (Some(t), _) => t.clone(),
                (None, FitScope::TrainOnly) if !cfg.deep.is_empty() => {
                    let continuous = base.continuous_data();
                    let deep = fit_deep_features_train_only(
                        &continuous,
                        &train_idx,
                        &cfg.deep,
                        derived_seed(cfg.seed, "deepfeat") ^ run,
                    )?;
                    let mut t = base.clone();
                    t.augment(&deep)?;
                    t
                }
                _ => base.clone(),
            };

            // noise touches training labels only; test labels stay clean
            let mut noisy = clean_labels.clone();
            if cfg.epsilon > 0.0 {
                let mut noise_rng = indexed_stream(cfg.seed, "noise", run);
                crate::synth::flip_label_values(
                    &mut noisy,
                    &train_idx,
                    cfg.epsilon,
                    &classes,
                    &mut noise_rng,
                );
            }

            let mut train = table.select_rows(&train_idx);
            train.set_labels(Some(train_idx.iter().map(|&i| noisy[i]).collect()))?;
            let test = table.select_rows(&test_idx);
            let truth: Vec<u32> = test_idx.iter().map(|&i| clean_labels[i]).collect();

            let candidates: Vec<usize> = match cfg.mtry {
                MtryPolicy::Fixed(m) => vec![m],
                MtryPolicy::BetterOfGrid => {
                    let grid = mtry_candidates(table.n_cols());
                    if grid[0] == grid[1] {
                        vec![grid[0]]
                    } else {
                        grid.to_vec()
                    }
                }
            };

            let mut best: Option<f64> = None;
            for (ci, &mtry) in candidates.iter().enumerate() {
                let forest_seed =
                    indexed_stream(cfg.seed, "forest", run * 8 + ci as u64).next_u64();
                let params = ForestParams::new(cfg.n_trees, mtry, forest_seed);
                let model = match train_forest(&train, &params) {
                    Ok(m) => m,
                    Err(Error::DegenerateModel(msg)) => {
                        log::warn!("run {run}: skipped ({msg})");
                        return Ok(None);
                    }
                    Err(e) => return Err(e),
                };
                let error = model.error_rate(&test, &truth)?;
                if best.map_or(true, |b| error < b) {
                    best = Some(error);
                }
            }
            Ok(best)
        })
        .collect();

    let mut per_run = Vec::with_capacity(cfg.n_runs);
    let mut skipped = 0usize;
    for run in runs {
        match run? {
            Some(error) => per_run.push(error),
            None => skipped += 1,
        }
    }
    ExperimentResult::from_runs(per_run, skipped, cfg.config_hash(), cfg.seed)
}

fn derived_seed(seed: u64, label: &str) -> u64 {
    indexed_stream(seed, label, 0).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Linkage;
    use crate::synth::make_g1;

    fn quick_cfg(n: usize, seed: u64) -> ExperimentConfig {
        let spec = make_g1(0.1, 8, 1.2).unwrap();
        let mut cfg = ExperimentConfig::new(
            DataSource::Synthetic { spec, n, sample_seed: seed },
            seed,
        );
        cfg.n_runs = 5;
        cfg.n_trees = 20;
        cfg
    }

    #[test]
    fn splits_are_disjoint_halves_and_noise_is_train_only() {
        // exercised through the public path: zero noise on strongly
        // separated data must score near zero, full noise near one
        let mut cfg = quick_cfg(120, 5);
        cfg.epsilon = 0.0;
        let clean = run_experiment(&cfg).unwrap();
        assert!(clean.mean_error < 0.05, "separable data error {}", clean.mean_error);

        cfg.epsilon = 1.0;
        let flipped = run_experiment(&cfg).unwrap();
        // all training labels flipped: the forest learns the inverse map,
        // test labels stay clean, so the error approaches one
        assert!(flipped.mean_error > 0.95, "inverted labels error {}", flipped.mean_error);
    }

    #[test]
    fn results_are_deterministic() {
        let cfg = quick_cfg(80, 9);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.per_run, b.per_run);
        assert_eq!(a.mean_error, b.mean_error);
        assert_eq!(a.config_hash, b.config_hash);
    }

    #[test]
    fn mean_is_arithmetic_mean_of_runs() {
        let cfg = quick_cfg(80, 11);
        let result = run_experiment(&cfg).unwrap();
        let mean = result.per_run.iter().sum::<f64>() / result.per_run.len() as f64;
        assert_eq!(result.mean_error, mean);
        assert_eq!(result.per_run.len() + result.skipped_runs, 5);
    }

    #[test]
    fn deep_features_run_in_both_scopes() {
        for scope in [FitScope::Pooled, FitScope::TrainOnly] {
            let mut cfg = quick_cfg(60, 13);
            cfg.fit_scope = scope;
            cfg.deep = vec![
                DeepFeatureSpec::Clustering {
                    methods: vec![
                        ClusterMethod::KMeans,
                        ClusterMethod::Agglomerative(Linkage::Average),
                        ClusterMethod::Divisive,
                    ],
                    k_range: (2, 4),
                },
                DeepFeatureSpec::RpForest { n_trees: 5, min_node_size: 5 },
            ];
            let result = run_experiment(&cfg).unwrap();
            assert!(
                result.mean_error < 0.10,
                "{scope:?}: separable data with deep features scored {}",
                result.mean_error
            );
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = quick_cfg(40, 1);
        cfg.train_fraction = 0.0;
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = quick_cfg(40, 1);
        cfg.n_runs = 0;
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = quick_cfg(40, 1);
        cfg.epsilon = 1.5;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn table_source_requires_labels() {
        let data = DenseMatrix::zeros(10, 2);
        let table = FeatureMatrix::from_continuous(data, "f", None).unwrap();
        let cfg = ExperimentConfig::new(DataSource::Table(table), 3);
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidData(_))));
    }
}
