//! Hierarchical clustering: bottom-up merges under single / complete /
//! average linkage, and top-down divisive splitting via the splinter-group
//! procedure. Both produce a [`Dendrogram`] — a stepwise merge list — that
//! can be cut at any cluster count.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::ClusterAssignment;

/// How the dissimilarity between merged clusters is derived from pointwise
/// Euclidean distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Minimum pointwise distance between the clusters.
    Single,
    /// Maximum pointwise distance.
    Complete,
    /// Size-weighted mean pointwise distance.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyMethod {
    Agglomerative(Linkage),
    Divisive,
}

/// One merge step. Cluster ids follow the stepwise convention: ids below
/// `n` are singleton leaves; the step at position `t` creates cluster
/// `n + t` from its two children.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// A full merge hierarchy over `n` points (`n - 1` steps). For divisive
/// clustering the recorded splits are stored in reverse, so that undoing the
/// last `k - 1` merges always yields the first `k - 1` splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
    method: HierarchyMethod,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn method(&self) -> HierarchyMethod {
        self.method
    }
}

fn distance_matrix(data: &DenseMatrix) -> Vec<f64> {
    let n = data.n_rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dist = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// Bottom-up clustering: every point starts as a singleton and the pair of
/// clusters with minimal linkage dissimilarity merges, `n - 1` times. Ties
/// go to the lowest slot pair, so the result is deterministic.
pub fn agglomerative(data: &DenseMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidParameter("clustering needs at least 2 points".into()));
    }
    if !data.is_finite() {
        return Err(Error::InvalidData("clustering input contains non-finite values".into()));
    }

    // dist[i*n+j] holds the current cluster-level dissimilarity between the
    // clusters seated at slots i and j; Lance-Williams updates keep it exact.
    let mut dist = distance_matrix(data);
    let mut active: Vec<bool> = vec![true; n];
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut size: Vec<f64> = vec![1.0; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, height) = best.expect("at least two active clusters");
        merges.push(Merge { left: cluster_id[i], right: cluster_id[j], height });

        for x in 0..n {
            if !active[x] || x == i || x == j {
                continue;
            }
            let di = dist[i * n + x];
            let dj = dist[j * n + x];
            let updated = match linkage {
                Linkage::Single => di.min(dj),
                Linkage::Complete => di.max(dj),
                Linkage::Average => (size[i] * di + size[j] * dj) / (size[i] + size[j]),
            };
            dist[i * n + x] = updated;
            dist[x * n + i] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        cluster_id[i] = n + step;
    }

    Ok(Dendrogram { n, merges, method: HierarchyMethod::Agglomerative(linkage) })
}

struct DivCluster {
    members: Vec<usize>,
    diameter: f64,
    split_event: Option<usize>,
}

fn cluster_diameter(members: &[usize], dist: &[f64], n: usize) -> f64 {
    let mut d = 0.0f64;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            d = d.max(dist[i * n + j]);
        }
    }
    d
}

/// Top-down clustering: the cluster with the largest diameter is split by
/// seeding a splinter group with its most disparate member, then moving over
/// every point whose average dissimilarity to the splinter group is smaller
/// than to the remainder. Split heights are the split cluster's diameter.
pub fn divisive(data: &DenseMatrix) -> Result<Dendrogram> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InvalidParameter("clustering needs at least 2 points".into()));
    }
    if !data.is_finite() {
        return Err(Error::InvalidData("clustering input contains non-finite values".into()));
    }
    let dist = distance_matrix(data);

    let mut clusters = vec![DivCluster {
        members: (0..n).collect(),
        diameter: cluster_diameter(&(0..n).collect::<Vec<_>>(), &dist, n),
        split_event: None,
    }];
    let mut active: Vec<usize> = vec![0];
    // (cluster, splinter child, remainder child, height), in split order
    let mut events: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(n - 1);

    while let Some(&target) = active
        .iter()
        .filter(|&&c| clusters[c].members.len() >= 2)
        .max_by(|&&a, &&b| {
            clusters[a]
                .diameter
                .partial_cmp(&clusters[b].diameter)
                .unwrap()
                // prefer the cluster holding the smallest member on ties
                .then_with(|| clusters[b].members[0].cmp(&clusters[a].members[0]))
        })
    {
        let members = clusters[target].members.clone();
        let avg_to = |point: usize, group: &[usize]| -> f64 {
            let total: f64 =
                group.iter().filter(|&&m| m != point).map(|&m| dist[point * n + m]).sum();
            total / (group.iter().filter(|&&m| m != point).count() as f64)
        };

        // seed: the member with the largest average dissimilarity to the rest
        let seed = *members
            .iter()
            .max_by(|&&a, &&b| {
                avg_to(a, &members).partial_cmp(&avg_to(b, &members)).unwrap().then(b.cmp(&a))
            })
            .expect("cluster has members");

        let mut splinter = vec![seed];
        let mut rest: Vec<usize> = members.iter().copied().filter(|&m| m != seed).collect();
        while rest.len() > 1 {
            let mut best: Option<(usize, f64)> = None;
            for (pos, &point) in rest.iter().enumerate() {
                let to_splinter: f64 =
                    splinter.iter().map(|&s| dist[point * n + s]).sum::<f64>() / splinter.len() as f64;
                let to_rest = avg_to(point, &rest);
                let gap = to_rest - to_splinter;
                if best.map_or(true, |(_, g)| gap > g) {
                    best = Some((pos, gap));
                }
            }
            let (pos, gap) = best.expect("rest is nonempty");
            if gap <= 0.0 {
                break;
            }
            splinter.push(rest.remove(pos));
        }
        splinter.sort_unstable();
        rest.sort_unstable();

        let height = clusters[target].diameter;
        let (first, second) =
            if splinter[0] < rest[0] { (splinter, rest) } else { (rest, splinter) };
        let a_idx = clusters.len();
        clusters.push(DivCluster {
            diameter: cluster_diameter(&first, &dist, n),
            members: first,
            split_event: None,
        });
        let b_idx = clusters.len();
        clusters.push(DivCluster {
            diameter: cluster_diameter(&second, &dist, n),
            members: second,
            split_event: None,
        });
        clusters[target].split_event = Some(events.len());
        events.push((target, a_idx, b_idx, height));
        active.retain(|&c| c != target);
        active.push(a_idx);
        active.push(b_idx);
    }

    // reverse the splits into merges; the cluster split at event i becomes
    // merge id n + (m - 1 - i)
    let m = events.len();
    debug_assert_eq!(m, n - 1);
    let id_of = |cluster: &DivCluster| -> usize {
        if cluster.members.len() == 1 {
            cluster.members[0]
        } else {
            n + (m - 1 - cluster.split_event.expect("non-singleton clusters were split"))
        }
    };
    let merges = events
        .iter()
        .rev()
        .map(|&(_, a, b, height)| Merge { left: id_of(&clusters[a]), right: id_of(&clusters[b]), height })
        .collect();

    Ok(Dendrogram { n, merges, method: HierarchyMethod::Divisive })
}

/// Flat clustering with exactly `k` clusters: the first `n - k` merges are
/// applied (equivalently, the last `k - 1` merges are undone, or the first
/// `k - 1` divisive splits are taken). IDs are canonical by first
/// appearance.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.n;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must be in [1, {n}], got {k}")));
    }
    let applied = n - k;
    let mut parent: Vec<usize> = (0..n + applied).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (t, merge) in dendrogram.merges[..applied].iter().enumerate() {
        let target = n + t;
        let l = find(&mut parent, merge.left);
        let r = find(&mut parent, merge.right);
        parent[l] = target;
        parent[r] = target;
    }

    let mut labels = vec![0u32; n];
    let mut canonical: std::collections::HashMap<usize, u32> = std::collections::HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let next = canonical.len() as u32;
        labels[i] = *canonical.entry(root).or_insert(next);
    }
    debug_assert_eq!(canonical.len(), k);
    Ok(ClusterAssignment { labels, k: k as u32, inertia: None })
}
