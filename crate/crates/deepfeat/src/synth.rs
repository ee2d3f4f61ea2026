//! Gaussian-mixture benchmark generators with AR(1)-style covariance, a
//! seeded sampler, and training-label noise injection.
//!
//! Three stock mixtures are provided: `g1` (two components at ±μ), `g2`
//! (four components, two per class, on disjoint coordinate blocks), and `g3`
//! (two components whose covariance is estimated from a feature matrix, e.g.
//! flattened co-occurrence matrices of an image corpus).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::stream;

/// Shrinkage ladder for covariance estimation; the first value whose
/// diagonal-shrunk matrix factors is kept.
const SHRINKAGE_LADDER: [f64; 14] =
    [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0];

/// A finite Gaussian mixture with a shared covariance matrix and a component
/// → class-label map.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    means: Vec<DVector<f64>>,
    weights: Vec<f64>,
    class_of_component: Vec<u32>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    shrinkage: f64,
}

impl MixtureSpec {
    pub fn new(
        means: Vec<Vec<f64>>,
        weights: Vec<f64>,
        class_of_component: Vec<u32>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() || means.len() != class_of_component.len() {
            return Err(Error::InvalidParameter("component lists must be nonempty and aligned".into()));
        }
        let p = means[0].len();
        if means.iter().any(|m| m.len() != p) {
            return Err(Error::InvalidParameter("component means must share a dimension".into()));
        }
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(Error::InvalidParameter("covariance does not match mean dimension".into()));
        }
        if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("weights must be nonnegative and sum to 1".into()));
        }
        let max_asym = (0..p)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (covariance[(i, j)] - covariance[(j, i)]).abs())
            .fold(0.0f64, f64::max);
        if max_asym > 1e-9 {
            return Err(Error::InvalidData(format!("covariance asymmetric by {max_asym}")));
        }
        let cholesky = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidData("covariance is not positive definite".into()))?
            .unpack();
        Ok(Self {
            means: means.into_iter().map(DVector::from_vec).collect(),
            weights,
            class_of_component,
            covariance,
            cholesky,
            shrinkage: 0.0,
        })
    }

    /// Same covariance (and factor), new component means.
    pub fn with_means(&self, means: Vec<Vec<f64>>) -> Result<Self> {
        if means.len() != self.means.len() || means.iter().any(|m| m.len() != self.dim()) {
            return Err(Error::InvalidParameter("means must match the existing layout".into()));
        }
        Ok(Self { means: means.into_iter().map(DVector::from_vec).collect(), ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, component: usize) -> &[f64] {
        self.means[component].as_slice()
    }

    pub fn class_of_component(&self) -> &[u32] {
        &self.class_of_component
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Diagonal-shrinkage weight used when the covariance was estimated.
    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    /// Stable fingerprint of the spec for audit metadata.
    pub fn spec_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for m in &self.means {
            m.iter().copied().for_each(&mut eat);
        }
        self.weights.iter().copied().for_each(&mut eat);
        self.class_of_component.iter().for_each(|c| eat(f64::from(*c)));
        self.covariance.iter().copied().for_each(&mut eat);
        h
    }
}

/// `Σ_ij = rho^|i-j|` (unit diagonal, symmetric, positive definite for
/// `|rho| < 1`).
pub fn ar1_covariance(rho: f64, p: usize) -> Result<DMatrix<f64>> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must be in (-1, 1), got {rho}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs())))
}

/// Two equal-weight components at `±mu_val·1`, classes 1 and 2, AR(1)
/// covariance.
pub fn make_g1(rho: f64, p: usize, mu_val: f64) -> Result<MixtureSpec> {
    let cov = ar1_covariance(rho, p)?;
    MixtureSpec::new(
        vec![vec![mu_val; p], vec![-mu_val; p]],
        vec![0.5, 0.5],
        vec![1, 2],
        cov,
    )
}

/// Four equal-weight components `±μ₁, ±μ₂` on complementary coordinate
/// halves (heterogeneous classes: `{+μ₁, +μ₂}` → class 1, the rest class 2).
pub fn make_g2(rho: f64, p: usize) -> Result<MixtureSpec> {
    if p % 2 != 0 {
        return Err(Error::InvalidParameter("g2 needs an even dimension".into()));
    }
    let half = p / 2;
    let mut mu1 = vec![0.0; p];
    let mut mu2 = vec![0.0; p];
    mu1[..half].fill(0.5);
    mu2[half..].fill(0.5);
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let cov = ar1_covariance(rho, p)?;
    MixtureSpec::new(
        vec![mu1.clone(), mu2.clone(), neg(&mu1), neg(&mu2)],
        vec![0.25; 4],
        vec![1, 1, 2, 2],
        cov,
    )
}

/// Two components at `±mu` with covariance estimated from `cov_source`
/// (sample covariance, shrunk toward its diagonal by the smallest ladder
/// weight that factors).
pub fn make_g3(cov_source: &DenseMatrix, mu: &[f64]) -> Result<MixtureSpec> {
    let n = cov_source.n_rows();
    let p = cov_source.n_cols();
    if mu.len() != p {
        return Err(Error::InvalidParameter(format!(
            "mean has {} coordinates, covariance source has {p}",
            mu.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidData("covariance estimation needs at least 2 rows".into()));
    }
    let mut means = vec![0.0; p];
    for row in 0..n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += cov_source.get(row, j);
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut sample = DMatrix::zeros(p, p);
    for row in 0..n {
        let centered: Vec<f64> = (0..p).map(|j| cov_source.get(row, j) - means[j]).collect();
        for i in 0..p {
            if centered[i] == 0.0 {
                continue;
            }
            for j in i..p {
                sample[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            sample[(i, j)] /= denom;
            sample[(j, i)] = sample[(i, j)];
        }
    }

    for &lambda in &SHRINKAGE_LADDER {
        let mut shrunk = sample.clone() * (1.0 - lambda);
        for i in 0..p {
            shrunk[(i, i)] += lambda * sample[(i, i)];
        }
        if let Some(chol) = shrunk.clone().cholesky() {
            return Ok(MixtureSpec {
                means: vec![
                    DVector::from_vec(mu.to_vec()),
                    DVector::from_vec(mu.iter().map(|x| -x).collect()),
                ],
                weights: vec![0.5, 0.5],
                class_of_component: vec![1, 2],
                covariance: shrunk,
                cholesky: chol.unpack(),
                shrinkage: lambda,
            });
        }
    }
    Err(Error::InvalidData(
        "estimated covariance is not positive definite even at full diagonal shrinkage".into(),
    ))
}

/// How component memberships are drawn in [`sample_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentDraw {
    /// Each row draws its component by the mixture weights.
    Multinomial,
    /// Component counts are fixed at `round(wᵢ·n)` and shuffled
    /// (variance-reduced testing mode).
    ExactCounts,
}

/// A drawn dataset: features, working labels, and the pre-noise labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: DenseMatrix,
    pub y: Vec<u32>,
    pub clean_y: Vec<u32>,
    /// Indices whose labels were flipped, for audit metadata.
    pub flipped: Vec<usize>,
}

/// Draws `n` rows from the mixture with multinomial component counts.
pub fn sample(spec: &MixtureSpec, n: usize, seed: u64) -> Result<LabeledSample> {
    sample_with(spec, n, seed, ComponentDraw::Multinomial)
}

pub fn sample_with(spec: &MixtureSpec, n: usize, seed: u64, draw: ComponentDraw) -> Result<LabeledSample> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    let mut rng = stream(seed, "mixture-sample");
    let p = spec.dim();

    let components: Vec<usize> = match draw {
        ComponentDraw::Multinomial => {
            let cumulative: Vec<f64> = spec
                .weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            (0..n)
                .map(|_| {
                    let u: f64 = rng.gen();
                    cumulative.iter().position(|&c| u < c).unwrap_or(spec.n_components() - 1)
                })
                .collect()
        }
        ComponentDraw::ExactCounts => {
            let mut counts: Vec<usize> =
                spec.weights.iter().map(|w| (w * n as f64).floor() as usize).collect();
            let mut remainder: Vec<(usize, f64)> = spec
                .weights
                .iter()
                .enumerate()
                .map(|(i, w)| (i, w * n as f64 - (w * n as f64).floor()))
                .collect();
            remainder.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let missing = n - counts.iter().sum::<usize>();
            for (i, _) in remainder.into_iter().take(missing) {
                counts[i] += 1;
            }
            let mut out: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat(i).take(c))
                .collect();
            // Fisher-Yates so labels are not blocked by component
            for i in (1..out.len()).rev() {
                out.swap(i, rng.gen_range(0..=i));
            }
            out
        }
    };

    let mut data = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for &component in &components {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &spec.means[component] + &spec.cholesky * z;
        data.extend_from_slice(x.as_slice());
        labels.push(spec.class_of_component[component]);
    }
    Ok(LabeledSample {
        x: DenseMatrix::new(n, p, data)?,
        y: labels.clone(),
        clean_y: labels,
        flipped: Vec::new(),
    })
}

/// The flip core shared with the experiment harness: flips exactly
/// `round(epsilon·|scope|)` distinct scope indices in place and returns them
/// sorted. Binary label sets swap the two values; larger sets move each
/// flipped label to a uniformly drawn other class.
pub(crate) fn flip_label_values(
    labels: &mut [u32],
    scope: &[usize],
    epsilon: f64,
    classes: &[u32],
    rng: &mut impl Rng,
) -> Vec<usize> {
    let n_flip = (epsilon * scope.len() as f64).round() as usize;
    if n_flip == 0 {
        return Vec::new();
    }
    let chosen = rand::seq::index::sample(rng, scope.len(), n_flip);
    let mut flipped: Vec<usize> = chosen.iter().map(|i| scope[i]).collect();
    flipped.sort_unstable();
    for &i in &flipped {
        let current = labels[i];
        labels[i] = if classes.len() == 2 {
            if current == classes[0] {
                classes[1]
            } else {
                classes[0]
            }
        } else {
            let others: Vec<u32> = classes.iter().copied().filter(|&c| c != current).collect();
            others[rng.gen_range(0..others.len())]
        };
    }
    flipped
}

/// Flips the labels of exactly `round(epsilon·|scope|)` distinct indices
/// drawn uniformly from `scope`.
pub fn flip_labels(sample: &LabeledSample, epsilon: f64, seed: u64, scope: &[usize]) -> Result<LabeledSample> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon must be in [0, 1], got {epsilon}")));
    }
    if scope.is_empty() && epsilon > 0.0 {
        return Err(Error::InvalidParameter("cannot flip labels over an empty scope".into()));
    }
    if let Some(&bad) = scope.iter().find(|&&i| i >= sample.y.len()) {
        return Err(Error::InvalidParameter(format!("scope index {bad} out of range")));
    }

    let mut out = sample.clone();
    let mut classes: Vec<u32> = sample.y.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut rng = stream(seed, "label-noise");
    out.flipped = flip_label_values(&mut out.y, scope, epsilon, &classes, &mut rng);
    Ok(out)
}
