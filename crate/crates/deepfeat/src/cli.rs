//! The `deepfeat` command line: every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or invalid data,
//! 3 internal failure. Each run prints the resolved configuration and the
//! master seed to stderr, and all `--out` paths are written atomically.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::clustering::ClusterMethod;
use crate::error::{Error, Result};
use crate::forest::{combine_votes, train_forest, ForestModel, ForestParams, VoteVector};
use crate::harness::analysis::{correlation_census, pca_baseline};
use crate::harness::tables::{
    calibrate_g3, default_g3_cov_source, reproduce_tables, sig6, TableOptions, TableSelector,
};
use crate::harness::{
    run_experiment, DataSource, DeepFeatureSpec, ExperimentConfig, FitScope, MtryPolicy,
};
use crate::imagery::io::{
    load_gray_image, manifest_features, read_manifest, write_glcm_cache,
};
use crate::imagery::{build_mask, compute_glcm, quantize, Direction, SpatialRelationship};
use crate::ioutil::atomic_write;
use crate::matrix::FeatureMatrix;
use crate::synth::{make_g1, make_g2, make_g3};

#[derive(Parser)]
#[command(name = "deepfeat", version, about = "Texture features, unsupervised group features, and forest scoring")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract co-occurrence features from a labeled image manifest.
    Glcm(GlcmArgs),
    /// Append unsupervised group-feature columns to a feature table.
    Deepfeat(DeepfeatArgs),
    /// Train a random forest on a labeled feature table.
    Train(TrainArgs),
    /// Score a feature table with a trained model.
    Score(ScoreArgs),
    /// Combine two vote-vector tables linearly.
    Combine(CombineArgs),
    /// Run a synthetic mixture benchmark cell.
    Bench(BenchArgs),
    /// Reproduce the benchmark grids with reference values alongside.
    Tables(TablesArgs),
    /// Forest protocol over leading principal components.
    Pca(PcaArgs),
    /// Count highly correlated partners per feature column.
    Corr(CorrArgs),
}

#[derive(Args)]
struct GlcmArgs {
    /// Direction: N, S, E, W, NE, NW, SE, SW.
    #[arg(long, default_value = "NE")]
    rel: String,
    #[arg(long, default_value_t = 3)]
    dist: u32,
    #[arg(long, default_value_t = 51)]
    ngray: u16,
    /// CSV with `path,score` columns.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory of representative patches; builds and applies a feature
    /// mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Also write the raw GLCMs to a binary cache.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct DeepfeatArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated: kmeans, single, hclust, agnes, diana.
    #[arg(long, value_delimiter = ',')]
    cluster_methods: Vec<String>,
    #[arg(long, default_value_t = 10)]
    k_min: usize,
    #[arg(long, default_value_t = 40)]
    k_max: usize,
    /// Random projection trees to add as leaf-ID columns.
    #[arg(long, default_value_t = 0)]
    rp_trees: usize,
    #[arg(long, default_value_t = 20)]
    rp_leaf: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// `auto` picks ceil(sqrt(p)); otherwise a column count.
    #[arg(long, default_value = "auto")]
    mtry: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also emit the per-class vote fractions.
    #[arg(long)]
    votes: bool,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long)]
    votes1: PathBuf,
    #[arg(long)]
    votes2: PathBuf,
    #[arg(long, default_value_t = 1.1)]
    beta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// g1, g2, or g3.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Comma-separated training-label noise fractions.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// none, kmeans, hclust, or rptrees.
    #[arg(long, default_value = "none")]
    deep: String,
    #[arg(long, default_value_t = 10)]
    k_min: usize,
    #[arg(long, default_value_t = 60)]
    k_max: usize,
    /// K-means column count (used by --deep kmeans).
    #[arg(long, default_value_t = 40)]
    k: usize,
    #[arg(long, default_value_t = 800)]
    rp_trees: usize,
    #[arg(long, default_value_t = 20)]
    rp_leaf: usize,
    /// pooled or train-only unsupervised fits.
    #[arg(long, default_value = "pooled")]
    scope: String,
    /// Feature CSV whose continuous columns estimate the g3 covariance
    /// (default: bundled toy-corpus GLCM features).
    #[arg(long)]
    cov_source: Option<PathBuf>,
    /// g3 mean-vector scale (default: calibrated).
    #[arg(long)]
    mu_scale: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Force the published protocol settings (trees=100, runs=100, half
    /// split, k in [10,60], 20-point leaves, 800 trees).
    #[arg(long)]
    paper_defaults: bool,
}

#[derive(Args)]
struct TablesArgs {
    /// Comma-separated grid names: g1, g2, g3, tma.
    #[arg(long, value_delimiter = ',')]
    select: Vec<String>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Force the published protocol settings for every knob.
    #[arg(long)]
    paper_defaults: bool,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Component counts: comma list and/or lo:hi:step ranges (e.g.
    /// `2:100:7,50`).
    #[arg(long, default_value = "2:100:7")]
    k: String,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0.6)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses argv and executes; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        // a second init in the same process is reported, not fatal
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("deepfeat: error: {e}");
            e.exit_code()
        }
    }
}

fn announce(what: &str, seed: u64, detail: &str) {
    eprintln!("deepfeat {what}: seed={seed} {detail}");
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Glcm(args) => cmd_glcm(args),
        Command::Deepfeat(args) => cmd_deepfeat(args),
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Combine(args) => cmd_combine(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Tables(args) => cmd_tables(args),
        Command::Pca(args) => cmd_pca(args),
        Command::Corr(args) => cmd_corr(args),
    }
}

fn schema_sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.schema.json"))
}

fn cmd_glcm(args: GlcmArgs) -> Result<()> {
    let direction = Direction::parse(&args.rel)?;
    let rel = SpatialRelationship::new(direction, args.dist)?;
    announce(
        "glcm",
        args.seed,
        &format!(
            "rel=({},{}) ngray={} manifest={} mask={:?}",
            direction.abbrev(),
            args.dist,
            args.ngray,
            args.manifest.display(),
            args.mask
        ),
    );

    let mask = match &args.mask {
        None => None,
        Some(dir) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("png") | Some("pgm")
                    )
                })
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::InvalidData(format!(
                    "no patch images found in {}",
                    dir.display()
                )));
            }
            let patches: Result<Vec<_>> =
                paths.iter().map(|p| quantize(&load_gray_image(p)?, args.ngray)).collect();
            Some(build_mask(&patches?, rel)?)
        }
    };

    let table = manifest_features(&args.manifest, rel, args.ngray, mask.as_ref())?;
    table.write_csv(&args.out)?;
    table.write_schema(&schema_sidecar(&args.out))?;

    if let Some(cache) = &args.cache {
        let entries = read_manifest(&args.manifest)?;
        let glcms: Result<Vec<_>> = entries
            .iter()
            .map(|e| Ok(compute_glcm(&quantize(&load_gray_image(&e.path)?, args.ngray)?, rel)))
            .collect();
        write_glcm_cache(cache, &glcms?)?;
    }
    eprintln!(
        "deepfeat glcm: wrote {} rows x {} columns to {}",
        table.n_rows(),
        table.n_cols(),
        args.out.display()
    );
    Ok(())
}

fn cmd_deepfeat(args: DeepfeatArgs) -> Result<()> {
    announce(
        "deepfeat",
        args.seed,
        &format!(
            "features={} methods={:?} k=[{},{}] rp_trees={} rp_leaf={}",
            args.features.display(),
            args.cluster_methods,
            args.k_min,
            args.k_max,
            args.rp_trees,
            args.rp_leaf
        ),
    );
    let mut table = FeatureMatrix::read_csv(&args.features, args.schema.as_deref())?;
    let methods: Result<Vec<ClusterMethod>> =
        args.cluster_methods.iter().map(|m| ClusterMethod::parse(m)).collect();
    let methods = methods?;
    let mut specs = Vec::new();
    if !methods.is_empty() {
        specs.push(DeepFeatureSpec::Clustering { methods, k_range: (args.k_min, args.k_max) });
    }
    if args.rp_trees > 0 {
        specs.push(DeepFeatureSpec::RpForest {
            n_trees: args.rp_trees,
            min_node_size: args.rp_leaf,
        });
    }
    let deep =
        crate::harness::fit_deep_features(&table.continuous_data(), &specs, args.seed)?;
    table.augment(&deep)?;
    table.write_csv(&args.out)?;
    table.write_schema(&schema_sidecar(&args.out))?;
    eprintln!(
        "deepfeat deepfeat: wrote {} columns ({} new) to {}",
        table.n_cols(),
        deep.n_columns(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let table = FeatureMatrix::read_csv(&args.features, args.schema.as_deref())?;
    let mtry = match args.mtry.as_str() {
        "auto" => crate::forest::mtry_candidates(table.n_cols())[0],
        other => other
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad --mtry value `{other}`")))?,
    };
    announce(
        "train",
        args.seed,
        &format!("features={} trees={} mtry={mtry}", args.features.display(), args.trees),
    );
    let model = train_forest(&table, &ForestParams::new(args.trees, mtry, args.seed))?;
    model.save_json(&args.model)?;
    match model.oob_error() {
        Some(oob) => eprintln!(
            "deepfeat train: {} trees, oob error {} -> {}",
            args.trees,
            sig6(oob),
            args.model.display()
        ),
        None => eprintln!("deepfeat train: {} trees -> {}", args.trees, args.model.display()),
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let model = ForestModel::load_json(&args.model)?;
    let mut table = FeatureMatrix::read_csv(&args.features, args.schema.as_deref())?;
    table.set_labels(None)?;
    let votes = model.predict_all_votes(&table)?;

    let mut out = String::from("prediction");
    if args.votes {
        for class in model.classes() {
            let _ = write!(out, ",vote_{class}");
        }
    }
    out.push('\n');
    for v in &votes {
        let label = model.classes()[v.argmax_index()];
        let _ = write!(out, "{label}");
        if args.votes {
            for w in v.weights() {
                let _ = write!(out, ",{w}");
            }
        }
        out.push('\n');
    }
    atomic_write(&args.out, out.as_bytes())?;
    eprintln!("deepfeat score: {} rows -> {}", votes.len(), args.out.display());
    Ok(())
}

fn read_votes_csv(path: &Path) -> Result<(Vec<u32>, Vec<VoteVector>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let vote_cols: Vec<(usize, u32)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("vote_").and_then(|c| c.parse().ok()).map(|c| (i, c)))
        .collect();
    if vote_cols.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no vote_<class> columns found",
            path.display()
        )));
    }
    let classes: Vec<u32> = vote_cols.iter().map(|(_, c)| *c).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let weights: Result<Vec<f64>> = vote_cols
            .iter()
            .map(|(i, _)| {
                record[*i]
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidData(format!("bad vote value `{}`", &record[*i])))
            })
            .collect();
        rows.push(VoteVector::new(weights?)?);
    }
    Ok((classes, rows))
}

fn cmd_combine(args: CombineArgs) -> Result<()> {
    let (classes1, votes1) = read_votes_csv(&args.votes1)?;
    let (classes2, votes2) = read_votes_csv(&args.votes2)?;
    if classes1 != classes2 {
        return Err(Error::InvalidData("vote tables have different class columns".into()));
    }
    if votes1.len() != votes2.len() {
        return Err(Error::InvalidData(format!(
            "vote tables have {} and {} rows",
            votes1.len(),
            votes2.len()
        )));
    }
    eprintln!("deepfeat combine: beta={} rows={}", args.beta, votes1.len());

    let mut out = String::from("label");
    for class in &classes1 {
        let _ = write!(out, ",vote_{class}");
    }
    out.push('\n');
    for (row, (v1, v2)) in votes1.iter().zip(&votes2).enumerate() {
        let combined = combine_votes(v1, v2, args.beta)?;
        let label = classes1[combined.argmax_index()];
        let _ = write!(out, "{label}");
        for w in combined.weights() {
            let _ = write!(out, ",{w}");
        }
        out.push('\n');
        println!(
            "row {row}: label {label} votes ({})",
            combined.weights().iter().map(|w| sig6(*w)).collect::<Vec<_>>().join(", ")
        );
    }
    if let Some(path) = &args.out {
        atomic_write(path, out.as_bytes())?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let (runs, trees, k_range, rp_trees, rp_leaf) = if args.paper_defaults {
        (100, 100, (10usize, 60usize), 800, 20)
    } else {
        (args.runs, args.trees, (args.k_min, args.k_max), args.rp_trees, args.rp_leaf)
    };
    let scope = match args.scope.as_str() {
        "pooled" => FitScope::Pooled,
        "train-only" => FitScope::TrainOnly,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown scope `{other}` (use pooled or train-only)"
            )))
        }
    };

    let mut g3_note = String::new();
    let spec = match args.family.as_str() {
        "g1" => make_g1(args.rho, 40, 0.3)?,
        "g2" => make_g2(args.rho, 40)?,
        "g3" => {
            let cov = match &args.cov_source {
                Some(path) => {
                    FeatureMatrix::read_csv(path, None)?.continuous_data()
                }
                None => default_g3_cov_source(args.seed)?,
            };
            match args.mu_scale {
                Some(scale) => {
                    let p = cov.n_cols();
                    let zero = make_g3(&cov, &vec![0.0; p])?;
                    let mut direction: Vec<f64> =
                        (0..p).map(|j| zero.covariance()[(j, j)].sqrt()).collect();
                    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        return Err(Error::InvalidData("covariance diagonal is zero".into()));
                    }
                    for d in &mut direction {
                        *d *= scale / norm;
                    }
                    let neg: Vec<f64> = direction.iter().map(|v| -v).collect();
                    g3_note = format!("mu_scale={scale}");
                    zero.with_means(vec![direction, neg])?
                }
                None => {
                    let calibrated =
                        calibrate_g3(&cov, (0.01, 0.03), args.n, 5, trees.min(60), args.seed)?;
                    g3_note = format!(
                        "calibrated mu_scale={} clean_error={}",
                        calibrated.scale, calibrated.clean_error
                    );
                    calibrated.spec
                }
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown family `{other}` (use g1/g2/g3)"
            )))
        }
    };

    let deep = match args.deep.as_str() {
        "none" => Vec::new(),
        "kmeans" => vec![DeepFeatureSpec::Clustering {
            methods: vec![ClusterMethod::KMeans],
            k_range: (args.k, args.k),
        }],
        "hclust" => vec![DeepFeatureSpec::Clustering {
            methods: crate::harness::tables::hierarchical_methods(),
            k_range,
        }],
        "rptrees" => {
            vec![DeepFeatureSpec::RpForest { n_trees: rp_trees, min_node_size: rp_leaf }]
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown deep feature kind `{other}` (use none/kmeans/hclust/rptrees)"
            )))
        }
    };

    announce(
        "bench",
        args.seed,
        &format!(
            "family={} rho={} eps={:?} runs={runs} n={} trees={trees} deep={} scope={:?} {g3_note}",
            args.family, args.rho, args.eps, args.n, args.deep, scope
        ),
    );

    let mut csv = String::from(
        "family,rho,epsilon,method,runs,n,trees,seed,mean_error,std_error,skipped_runs\n",
    );
    let mut meta_cells = Vec::new();
    for &eps in &args.eps {
        let cfg = ExperimentConfig {
            data: DataSource::Synthetic {
                spec: spec.clone(),
                n: args.n,
                sample_seed: args.seed,
            },
            deep: deep.clone(),
            fit_scope: scope,
            n_trees: trees,
            mtry: MtryPolicy::BetterOfGrid,
            train_fraction: 0.5,
            n_runs: runs,
            epsilon: eps,
            seed: args.seed,
        };
        let result = run_experiment(&cfg)?;
        println!(
            "{} rho={} eps={} {}: error {} (se {}, {} runs{})",
            args.family,
            args.rho,
            eps,
            args.deep,
            sig6(result.mean_error),
            sig6(result.std_error),
            result.per_run.len(),
            if result.skipped_runs > 0 {
                format!(", {} skipped", result.skipped_runs)
            } else {
                String::new()
            }
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            args.family,
            args.rho,
            eps,
            args.deep,
            runs,
            args.n,
            trees,
            args.seed,
            result.mean_error,
            result.std_error,
            result.skipped_runs
        );
        meta_cells.push(serde_json::json!({
            "epsilon": eps,
            "config_hash": format!("{:016x}", result.config_hash),
            "per_run": result.per_run,
            "skipped_runs": result.skipped_runs,
        }));
    }
    atomic_write(&args.out, csv.as_bytes())?;

    let meta = serde_json::json!({
        "family": args.family,
        "rho": args.rho,
        "seed": args.seed,
        "spec_hash": format!("{:016x}", spec.spec_hash()),
        "deep": args.deep,
        "scope": args.scope,
        "runs": runs,
        "n": args.n,
        "trees": trees,
        "note": g3_note,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "cells": meta_cells,
    });
    let meta_path = args.out.with_extension("meta.json");
    atomic_write(&meta_path, format!("{meta:#}\n").as_bytes())?;
    Ok(())
}

fn cmd_tables(args: TablesArgs) -> Result<()> {
    let selectors: Result<Vec<TableSelector>> =
        args.select.iter().map(|s| TableSelector::parse(s)).collect();
    let selectors = selectors?;
    let mut options = TableOptions::published_defaults(args.seed);
    if !args.paper_defaults {
        options.n_runs = args.runs;
        options.n = args.n;
        options.n_trees = args.trees;
    }
    options.tma_manifest = args.manifest.clone();
    announce(
        "tables",
        args.seed,
        &format!(
            "select={:?} runs={} n={} trees={} manifest={:?}",
            args.select, options.n_runs, options.n, options.n_trees, args.manifest
        ),
    );

    std::fs::create_dir_all(&args.out_dir)?;
    let tables = reproduce_tables(&selectors, &options)?;
    for table in &tables {
        let csv_path = args.out_dir.join(format!("{}.csv", table.name));
        let txt_path = args.out_dir.join(format!("{}.txt", table.name));
        atomic_write(&csv_path, table.to_csv_string().as_bytes())?;
        atomic_write(&txt_path, table.to_text_string().as_bytes())?;
        print!("{}", table.to_text_string());
    }
    Ok(())
}

fn parse_k_list(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let fields: Vec<&str> = part.split(':').collect();
        match fields.as_slice() {
            [single] => out.push(single.parse().map_err(|_| {
                Error::InvalidParameter(format!("bad component count `{single}`"))
            })?),
            [lo, hi] | [lo, hi, _] => {
                let lo: usize = lo
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad range start `{lo}`")))?;
                let hi: usize = hi
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad range end `{hi}`")))?;
                let step: usize = match fields.get(2) {
                    Some(s) => s.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad range step `{s}`"))
                    })?,
                    None => 1,
                };
                if step == 0 || hi < lo {
                    return Err(Error::InvalidParameter(format!("bad range `{part}`")));
                }
                out.extend((lo..=hi).step_by(step));
            }
            _ => return Err(Error::InvalidParameter(format!("bad component spec `{part}`"))),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("component list is empty".into()));
    }
    Ok(out)
}

fn cmd_pca(args: PcaArgs) -> Result<()> {
    let table = FeatureMatrix::read_csv(&args.features, args.schema.as_deref())?;
    let k_list = parse_k_list(&args.k)?;
    announce(
        "pca",
        args.seed,
        &format!("features={} k={:?} runs={} trees={}", args.features.display(), k_list, args.runs, args.trees),
    );
    let protocol = ExperimentConfig {
        data: DataSource::Table(table.clone()),
        deep: Vec::new(),
        fit_scope: FitScope::Pooled,
        n_trees: args.trees,
        mtry: MtryPolicy::BetterOfGrid,
        train_fraction: 0.5,
        n_runs: args.runs,
        epsilon: 0.0,
        seed: args.seed,
    };
    let runs = pca_baseline(&table, &k_list, &protocol)?;
    let mut csv = String::from("k_requested,k_used,runs,seed,mean_error,std_error,skipped_runs\n");
    for run in &runs {
        println!(
            "k={} (used {}): error {} (se {})",
            run.k_requested,
            run.k_used,
            sig6(run.result.mean_error),
            sig6(run.result.std_error)
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            run.k_requested,
            run.k_used,
            args.runs,
            args.seed,
            run.result.mean_error,
            run.result.std_error,
            run.result.skipped_runs
        );
    }
    atomic_write(&args.out, csv.as_bytes())?;
    Ok(())
}

fn cmd_corr(args: CorrArgs) -> Result<()> {
    let table = FeatureMatrix::read_csv(&args.features, args.schema.as_deref())?;
    announce(
        "corr",
        0,
        &format!("features={} threshold={}", args.features.display(), args.threshold),
    );
    let continuous = table.continuous_data();
    let counts = correlation_census(&continuous, args.threshold)?;
    let names: Vec<&String> = table
        .names()
        .iter()
        .zip(table.kinds())
        .filter(|(_, k)| !k.is_categorical())
        .map(|(n, _)| n)
        .collect();
    let mut csv = String::from("feature,count\n");
    for (name, count) in names.iter().zip(&counts) {
        let _ = writeln!(csv, "{name},{count}");
    }
    atomic_write(&args.out, csv.as_bytes())?;
    let max = counts.iter().max().copied().unwrap_or(0);
    eprintln!(
        "deepfeat corr: {} columns, max partner count {max} -> {}",
        counts.len(),
        args.out.display()
    );
    Ok(())
}
