//! Principal-component baseline and the feature-correlation census.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix};

use super::{run_experiment, DataSource, ExperimentConfig, ExperimentResult};

/// Principal directions of a column-centered matrix.
#[derive(Debug, Clone)]
pub struct PcaFit {
    /// `p x k`, one principal direction per column, descending variance.
    components: DMatrix<f64>,
    column_means: Vec<f64>,
    /// Variance along each kept direction (`σ²/(n-1)`), descending.
    explained: Vec<f64>,
    rank: usize,
}

impl PcaFit {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    /// Numerical rank of the centered data.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Projects rows onto the kept principal directions.
    pub fn project(&self, data: &DenseMatrix) -> Result<DenseMatrix> {
        let p = self.column_means.len();
        if data.n_cols() != p {
            return Err(Error::InvalidData(format!(
                "projection input has {} columns, fit used {p}",
                data.n_cols()
            )));
        }
        let n = data.n_rows();
        let k = self.n_components();
        let mut out = DenseMatrix::zeros(n, k);
        for row in 0..n {
            let centered: Vec<f64> =
                data.row(row).iter().zip(&self.column_means).map(|(v, m)| v - m).collect();
            for c in 0..k {
                let proj: f64 =
                    (0..p).map(|j| centered[j] * self.components[(j, c)]).sum();
                out.set(row, c, proj);
            }
        }
        Ok(out)
    }
}

/// Centers the columns and keeps the top `k` principal directions (by
/// singular value of the centered matrix). `k` beyond the numerical rank is
/// truncated with a warning.
pub fn fit_pca(data: &DenseMatrix, k: usize) -> Result<PcaFit> {
    let n = data.n_rows();
    let p = data.n_cols();
    if n < 2 || p == 0 {
        return Err(Error::InvalidParameter("PCA needs at least 2 rows and 1 column".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("component count must be >= 1".into()));
    }
    if !data.is_finite() {
        return Err(Error::InvalidData("PCA input contains non-finite values".into()));
    }

    let column_means: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| data.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let centered =
        DMatrix::from_fn(n, p, |i, j| data.get(i, j) - column_means[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());

    let max_sv = svd.singular_values[order[0]];
    let tol = max_sv * (n.max(p) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();

    let k_used = k.min(rank.max(1)).min(order.len());
    if k_used < k {
        log::warn!("requested {k} components, data rank is {rank}; keeping {k_used}");
    }

    let mut components = DMatrix::zeros(p, k_used);
    let mut explained = Vec::with_capacity(k_used);
    for (c, &i) in order.iter().take(k_used).enumerate() {
        for j in 0..p {
            components[(j, c)] = v_t[(i, j)];
        }
        explained.push(svd.singular_values[i].powi(2) / (n as f64 - 1.0));
    }
    Ok(PcaFit { components, column_means, explained, rank })
}

/// One PCA-baseline grid point.
#[derive(Debug, Clone)]
pub struct PcaRun {
    pub k_requested: usize,
    pub k_used: usize,
    pub result: ExperimentResult,
}

/// Runs the forest protocol over the leading principal components of the
/// table's continuous columns, once per requested component count. The PCA
/// is fit on all rows (like the other unsupervised, label-free learners).
pub fn pca_baseline(
    table: &FeatureMatrix,
    k_list: &[usize],
    protocol: &ExperimentConfig,
) -> Result<Vec<PcaRun>> {
    let labels = table
        .labels()
        .ok_or_else(|| Error::InvalidData("PCA baseline needs labels".into()))?
        .to_vec();
    let continuous = table.continuous_data();
    let mut out = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let fit = fit_pca(&continuous, k)?;
        let projected = fit.project(&continuous)?;
        let projected_table =
            FeatureMatrix::from_continuous(projected, "pc", Some(labels.clone()))?;
        let cfg = ExperimentConfig {
            data: DataSource::Table(projected_table),
            deep: Vec::new(),
            ..protocol.clone()
        };
        out.push(PcaRun { k_requested: k, k_used: fit.n_components(), result: run_experiment(&cfg)? });
    }
    Ok(out)
}

/// For each column, how many *other* columns correlate with it beyond the
/// threshold in absolute value. Constant columns count 0 and are excluded as
/// partners.
pub fn correlation_census(data: &DenseMatrix, threshold: f64) -> Result<Vec<u32>> {
    let n = data.n_rows();
    let p = data.n_cols();
    if n < 2 {
        return Err(Error::InvalidParameter("census needs at least 2 rows".into()));
    }
    if !data.is_finite() {
        return Err(Error::InvalidData("census input contains non-finite values".into()));
    }

    // standardize the non-constant columns so correlations become dot
    // products, then one symmetric product gives the whole matrix
    let mut live_cols = Vec::new();
    let mut z_cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let mean = (0..n).map(|i| data.get(i, j)).sum::<f64>() / n as f64;
        let ss = (0..n).map(|i| (data.get(i, j) - mean).powi(2)).sum::<f64>();
        if ss == 0.0 {
            continue;
        }
        let norm = ss.sqrt();
        live_cols.push(j);
        z_cols.push((0..n).map(|i| (data.get(i, j) - mean) / norm).collect());
    }

    let m = live_cols.len();
    let mut counts = vec![0u32; p];
    if m < 2 {
        return Ok(counts);
    }
    let z = DMatrix::from_fn(n, m, |i, c| z_cols[c][i]);
    let r = z.transpose() * &z;
    for a in 0..m {
        let mut c = 0u32;
        for b in 0..m {
            if a != b && r[(a, b)].abs() > threshold {
                c += 1;
            }
        }
        counts[live_cols[a]] = c;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Cyclic Jacobi eigensolver for small symmetric matrices; the
    /// independent route for variance identities.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let p = a.len();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..p {
                for j in i + 1..p {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for i in 0..p {
                for j in i + 1..p {
                    if a[i][j].abs() < 1e-18 {
                        continue;
                    }
                    let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let (aik, ajk) = (a[i][k], a[j][k]);
                        a[i][k] = c * aik - s * ajk;
                        a[j][k] = s * aik + c * ajk;
                    }
                    for k in 0..p {
                        let (aki, akj) = (a[k][i], a[k][j]);
                        a[k][i] = c * aki - s * akj;
                        a[k][j] = s * aki + c * akj;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..p).map(|i| a[i][i]).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> DenseMatrix {
        let mut rng = crate::rng::stream(seed, "pca-data");
        DenseMatrix::new(n, p, (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn line_data_is_one_dimensional() {
        let mut rng = crate::rng::stream(71, "pca-line");
        let direction = [3.0, -1.0, 2.0];
        let mut data = Vec::new();
        for _ in 0..40 {
            let t: f64 = rng.gen_range(-2.0..2.0);
            for d in direction {
                data.push(5.0 + t * d);
            }
        }
        let m = DenseMatrix::new(40, 3, data).unwrap();
        let fit = fit_pca(&m, 3).unwrap();
        let total: f64 = fit.explained_variance().iter().sum();
        assert!(fit.explained_variance()[0] / total >= 0.999);
    }

    #[test]
    fn full_rank_projection_is_an_isometry() {
        let data = random_matrix(50, 10, 72);
        let fit = fit_pca(&data, 10).unwrap();
        assert_eq!(fit.n_components(), 10);
        let projected = fit.project(&data).unwrap();
        let mut worst = 0.0f64;
        for i in 0..50 {
            for j in i + 1..50 {
                let original: f64 = (0..10)
                    .map(|c| (data.get(i, c) - data.get(j, c)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let rotated: f64 = (0..10)
                    .map(|c| (projected.get(i, c) - projected.get(j, c)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max((original - rotated).abs());
            }
        }
        assert!(worst < 1e-9, "max pairwise distance deviation {worst}");
    }

    #[test]
    fn discarded_variance_matches_eigendecomposition_oracle() {
        let n = 60;
        let p = 8;
        let data = random_matrix(n, p, 73);
        let means: Vec<f64> =
            (0..p).map(|j| (0..n).map(|i| data.get(i, j)).sum::<f64>() / n as f64).collect();
        let mut cov = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                cov[i][j] = (0..n)
                    .map(|r| (data.get(r, i) - means[i]) * (data.get(r, j) - means[j]))
                    .sum::<f64>()
                    / (n as f64 - 1.0);
            }
        }
        let oracle = jacobi_eigenvalues(cov);
        let fit = fit_pca(&data, p).unwrap();
        for (got, want) in fit.explained_variance().iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-9, "eigenvalue {got} vs oracle {want}");
        }

        // reconstruction error with top-k equals the discarded eigenvalues
        for k in 1..p {
            let top = fit_pca(&data, k).unwrap();
            let projected = top.project(&data).unwrap();
            // rebuild in the original space and measure the residual
            let mut residual = 0.0;
            for row in 0..n {
                for j in 0..p {
                    let mut rebuilt = means[j];
                    for c in 0..k {
                        rebuilt += projected.get(row, c) * top.components[(j, c)];
                    }
                    residual += (data.get(row, j) - rebuilt).powi(2);
                }
            }
            let discarded: f64 = oracle[k..].iter().sum();
            let got = residual / (n as f64 - 1.0);
            assert!(
                (got - discarded).abs() < 1e-9,
                "k={k}: residual variance {got} vs discarded eigenvalues {discarded}"
            );
        }
    }

    #[test]
    fn rank_truncation_warns_and_clamps() {
        // rank-2 data in 5 columns
        let mut rng = crate::rng::stream(74, "pca-rank");
        let mut data = Vec::new();
        for _ in 0..30 {
            let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            data.extend_from_slice(&[a, b, a + b, a - b, 2.0 * a]);
        }
        let m = DenseMatrix::new(30, 5, data).unwrap();
        let fit = fit_pca(&m, 5).unwrap();
        assert_eq!(fit.rank(), 2);
        assert_eq!(fit.n_components(), 2);
    }

    #[test]
    fn census_counts_duplicates_negations_and_ignores_constants() {
        let mut rng = crate::rng::stream(75, "census");
        let n = 200;
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut data = Vec::with_capacity(n * 4);
        for i in 0..n {
            data.push(base[i]);
            data.push(-base[i]);
            data.push(7.0);
            data.push(noise[i]);
        }
        let m = DenseMatrix::new(n, 4, data).unwrap();
        let counts = correlation_census(&m, 0.6).unwrap();
        assert!(counts[0] >= 1 && counts[1] >= 1, "negated pair must count each other");
        assert_eq!(counts[2], 0, "constant column");
    }

    #[test]
    fn census_on_independent_normals_is_near_zero() {
        let mut rng = crate::rng::stream(76, "census-null");
        let n = 10_000;
        let p = 8;
        let mut data = Vec::with_capacity(n * p);
        for _ in 0..n * p {
            data.push(rng.sample::<f64, _>(rand_distr::StandardNormal));
        }
        let m = DenseMatrix::new(n, p, data).unwrap();
        let counts = correlation_census(&m, 0.6).unwrap();
        assert!(counts.iter().all(|&c| c == 0), "independent columns flagged: {counts:?}");
    }
}
