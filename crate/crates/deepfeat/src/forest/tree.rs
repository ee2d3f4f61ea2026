//! Single classification tree: Gini splits over mixed continuous and
//! categorical columns, grown to purity with no pruning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{ColumnKind, FeatureMatrix};

/// Gain below this is treated as no improvement; an impure node with no
/// useful split becomes a leaf.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Continuous: rows with `value < threshold` go left.
    Threshold { threshold: f64 },
    /// Categorical: rows whose code is in `left` (sorted) go left; codes
    /// never seen at this node route right.
    Categories { left: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        column: usize,
        rule: SplitRule,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Index into the model's sorted class list.
        class: usize,
    },
}

impl TreeNode {
    /// Routes one row to its leaf class index.
    pub fn route(&self, x: &FeatureMatrix, row: usize) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split { column, rule, left, right } => {
                    let go_left = match rule {
                        SplitRule::Threshold { threshold } => x.value(row, *column) < *threshold,
                        SplitRule::Categories { left } => {
                            left.binary_search(&x.category(row, *column)).is_ok()
                        }
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = f64::from(total);
    1.0 - counts.iter().map(|&c| (f64::from(c) / t).powi(2)).sum::<f64>()
}

#[derive(Debug)]
struct Candidate {
    rule: SplitRule,
    gain: f64,
}

/// Best threshold split of one continuous column, as (rule, gain).
pub(crate) fn best_threshold_split(
    values: &mut Vec<(f64, usize)>,
    n_classes: usize,
    parent_gini: f64,
) -> Option<(SplitRule, f64)> {
    values.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
    let n = values.len() as u32;
    let mut left = vec![0u32; n_classes];
    let mut right = vec![0u32; n_classes];
    for &(_, c) in values.iter() {
        right[c] += 1;
    }
    let mut best: Option<(SplitRule, f64)> = None;
    let mut n_left = 0u32;
    for i in 0..values.len() - 1 {
        let class = values[i].1;
        left[class] += 1;
        right[class] -= 1;
        n_left += 1;
        if values[i].0 == values[i + 1].0 {
            continue;
        }
        let n_right = n - n_left;
        let weighted = (f64::from(n_left) * gini(&left, n_left)
            + f64::from(n_right) * gini(&right, n_right))
            / f64::from(n);
        let gain = parent_gini - weighted;
        if best.as_ref().map_or(true, |(_, g)| gain > *g) {
            let threshold = values[i].0 / 2.0 + values[i + 1].0 / 2.0;
            best = Some((SplitRule::Threshold { threshold }, gain));
        }
    }
    best
}

/// Best subset split of one categorical column using the class-probability
/// ordering: categories are sorted by the fraction of one target class and a
/// boundary is scanned over that order. For two classes this is exactly the
/// optimal subset; with more classes each class is tried one-vs-rest.
pub(crate) fn best_categorical_split(
    per_category: &[(u32, Vec<u32>)],
    n_classes: usize,
    parent_gini: f64,
) -> Option<(SplitRule, f64)> {
    if per_category.len() < 2 {
        return None;
    }
    let n: u32 = per_category.iter().map(|(_, counts)| counts.iter().sum::<u32>()).sum();
    let mut best: Option<(SplitRule, f64)> = None;
    for target in 0..n_classes {
        let mut order: Vec<usize> = (0..per_category.len()).collect();
        order.sort_by(|&i, &j| {
            let pi = f64::from(per_category[i].1[target])
                / f64::from(per_category[i].1.iter().sum::<u32>());
            let pj = f64::from(per_category[j].1[target])
                / f64::from(per_category[j].1.iter().sum::<u32>());
            pi.partial_cmp(&pj).unwrap().then(per_category[i].0.cmp(&per_category[j].0))
        });
        let mut left = vec![0u32; n_classes];
        let mut right = vec![0u32; n_classes];
        for (_, counts) in per_category {
            for (c, &k) in counts.iter().enumerate() {
                right[c] += k;
            }
        }
        let mut n_left = 0u32;
        for boundary in 0..order.len() - 1 {
            let (_, counts) = &per_category[order[boundary]];
            for (c, &k) in counts.iter().enumerate() {
                left[c] += k;
                right[c] -= k;
                n_left += k;
            }
            let n_right = n - n_left;
            let weighted = (f64::from(n_left) * gini(&left, n_left)
                + f64::from(n_right) * gini(&right, n_right))
                / f64::from(n);
            let gain = parent_gini - weighted;
            if best.as_ref().map_or(true, |(_, g)| gain > *g) {
                let mut codes: Vec<u32> =
                    order[..=boundary].iter().map(|&i| per_category[i].0).collect();
                codes.sort_unstable();
                best = Some((SplitRule::Categories { left: codes }, gain));
            }
        }
    }
    best
}

/// Grows a tree on `rows` (indices into `x`, possibly repeated by the
/// bootstrap). `y` maps each row of `x` to its class index.
pub(crate) fn grow_tree(
    x: &FeatureMatrix,
    y: &[usize],
    rows: &[usize],
    n_classes: usize,
    mtry: usize,
    rng: &mut impl Rng,
) -> TreeNode {
    let mut counts = vec![0u32; n_classes];
    for &r in rows {
        counts[y[r]] += 1;
    }
    let majority = majority_class(&counts);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || rows.len() < 2 {
        return TreeNode::Leaf { class: majority };
    }

    let parent_gini = gini(&counts, rows.len() as u32);
    let mut columns = rand::seq::index::sample(rng, x.n_cols(), mtry).into_vec();
    columns.sort_unstable();

    let mut best: Option<(usize, Candidate)> = None;
    for col in columns {
        let candidate = match x.kinds()[col] {
            ColumnKind::Continuous => {
                let mut values: Vec<(f64, usize)> =
                    rows.iter().map(|&r| (x.value(r, col), y[r])).collect();
                best_threshold_split(&mut values, n_classes, parent_gini)
            }
            ColumnKind::Categorical { cardinality } => {
                let mut by_code = vec![Vec::new(); cardinality as usize];
                for &r in rows {
                    by_code[x.category(r, col) as usize].push(y[r]);
                }
                let per_category: Vec<(u32, Vec<u32>)> = by_code
                    .iter()
                    .enumerate()
                    .filter(|(_, members)| !members.is_empty())
                    .map(|(code, members)| {
                        let mut c = vec![0u32; n_classes];
                        for &cls in members {
                            c[cls] += 1;
                        }
                        (code as u32, c)
                    })
                    .collect();
                best_categorical_split(&per_category, n_classes, parent_gini)
            }
        };
        if let Some((rule, gain)) = candidate {
            if best.as_ref().map_or(true, |(_, b)| gain > b.gain) {
                best = Some((col, Candidate { rule, gain }));
            }
        }
    }

    let Some((column, Candidate { rule, gain })) = best else {
        return TreeNode::Leaf { class: majority };
    };
    if gain <= MIN_GAIN {
        return TreeNode::Leaf { class: majority };
    }
    debug_assert!(gain > 0.0, "accepted split must strictly reduce impurity");

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| match &rule {
        SplitRule::Threshold { threshold } => x.value(r, column) < *threshold,
        SplitRule::Categories { left } => left.binary_search(&x.category(r, column)).is_ok(),
    });
    debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

    let left = grow_tree(x, y, &left_rows, n_classes, mtry, rng);
    let right = grow_tree(x, y, &right_rows, n_classes, mtry, rng);
    TreeNode::Split { column, rule, left: Box::new(left), right: Box::new(right) }
}

/// Majority class index; ties go to the smallest index.
pub(crate) fn majority_class(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive subset-split oracle over all 2^C category bipartitions.
    fn brute_force_best_gain(per_category: &[(u32, Vec<u32>)], n_classes: usize) -> f64 {
        let c = per_category.len();
        let n: u32 = per_category.iter().map(|(_, k)| k.iter().sum::<u32>()).sum();
        let mut parent = vec![0u32; n_classes];
        for (_, k) in per_category {
            for (i, &v) in k.iter().enumerate() {
                parent[i] += v;
            }
        }
        let parent_gini = gini(&parent, n);
        let mut best = f64::NEG_INFINITY;
        for mask in 1..(1u32 << c) - 1 {
            let mut left = vec![0u32; n_classes];
            let mut right = vec![0u32; n_classes];
            for (i, (_, k)) in per_category.iter().enumerate() {
                let side = if mask & (1 << i) != 0 { &mut left } else { &mut right };
                for (cls, &v) in k.iter().enumerate() {
                    side[cls] += v;
                }
            }
            let nl: u32 = left.iter().sum();
            let nr: u32 = right.iter().sum();
            let weighted =
                (f64::from(nl) * gini(&left, nl) + f64::from(nr) * gini(&right, nr)) / f64::from(n);
            best = best.max(parent_gini - weighted);
        }
        best
    }

    #[test]
    fn categorical_split_matches_exhaustive_search_two_classes() {
        let mut rng = crate::rng::stream(21, "cat-split-oracle");
        use rand::Rng;
        for _ in 0..200 {
            let c = rng.gen_range(2..=8usize);
            let per_category: Vec<(u32, Vec<u32>)> = (0..c)
                .map(|code| {
                    (code as u32, vec![rng.gen_range(0..6u32), rng.gen_range(0..6u32)])
                })
                .filter(|(_, k)| k.iter().sum::<u32>() > 0)
                .collect();
            if per_category.len() < 2 {
                continue;
            }
            let n: u32 = per_category.iter().map(|(_, k)| k.iter().sum::<u32>()).sum();
            let mut parent = vec![0u32; 2];
            for (_, k) in &per_category {
                parent[0] += k[0];
                parent[1] += k[1];
            }
            let parent_gini = gini(&parent, n);
            let (_, gain) =
                best_categorical_split(&per_category, 2, parent_gini).expect("split exists");
            let oracle = brute_force_best_gain(&per_category, 2);
            assert!(
                (gain - oracle).abs() < 1e-12,
                "heuristic gain {gain} != exhaustive {oracle} for {per_category:?}"
            );
        }
    }

    #[test]
    fn threshold_split_separates_obvious_boundary() {
        let mut values = vec![(0.0, 0), (1.0, 0), (10.0, 1), (11.0, 1)];
        let (rule, gain) = best_threshold_split(&mut values, 2, 0.5).unwrap();
        assert!((gain - 0.5).abs() < 1e-12);
        match rule {
            SplitRule::Threshold { threshold } => assert_eq!(threshold, 5.5),
            other => panic!("unexpected rule {other:?}"),
        }
    }

    #[test]
    fn gini_gain_never_negative_on_random_columns() {
        let mut rng = crate::rng::stream(22, "gini-nonneg");
        use rand::Rng;
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let mut values: Vec<(f64, usize)> =
                (0..n).map(|_| (rng.gen_range(0.0..4.0), rng.gen_range(0..3))).collect();
            let mut counts = [0u32; 3];
            for &(_, c) in &values {
                counts[c] += 1;
            }
            let parent = gini(&counts, n as u32);
            if let Some((_, gain)) = best_threshold_split(&mut values, 3, parent) {
                assert!(gain > -1e-12, "negative gain {gain}");
            }
        }
    }

    #[test]
    fn majority_tie_breaks_low() {
        assert_eq!(majority_class(&[2, 2, 1]), 0);
        assert_eq!(majority_class(&[1, 3, 3]), 1);
    }
}
