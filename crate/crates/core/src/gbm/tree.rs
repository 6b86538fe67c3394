use rayon::prelude::*;

use super::pool::{BinnedPool, MISSING_BIN};
use crate::is_missing;

/// Relative tolerance under which two split gains count as tied.
pub const TIE_EPS: f64 = 1e-12;

/// One depth of an oblivious tree. Samples with `x[feature] > threshold` go
/// right; missing values go left iff `missing_left`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub feature: usize,
    pub threshold: f64,
    pub missing_left: bool,
    /// Squared-error reduction achieved by this split (0 for a no-op).
    pub gain: f64,
}

impl Level {
    pub const NOOP: Level = Level {
        feature: 0,
        threshold: f64::INFINITY,
        missing_left: true,
        gain: 0.0,
    };

    /// Sends every sample left.
    pub fn is_noop(&self) -> bool {
        self.threshold == f64::INFINITY && self.missing_left
    }

    #[inline]
    pub fn goes_right(&self, x: f64) -> bool {
        if is_missing(x) {
            !self.missing_left
        } else {
            x > self.threshold
        }
    }
}

/// Leaf index bit `j` is the outcome of level `j` (1 = right).
#[derive(Clone, Debug, PartialEq)]
pub struct ObliviousTree {
    pub levels: Vec<Level>,
    pub leaves: Vec<f64>,
}

impl ObliviousTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        self.levels
            .iter()
            .enumerate()
            .fold(0, |acc, (j, l)| acc | (l.goes_right(x[l.feature]) as usize) << j)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_index(x)]
    }

    /// Obliviousness is structural here; what can still go wrong is the
    /// leaf count or a level referencing a feature out of range.
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        self.leaves.len() == 1 << self.levels.len() && self.levels.iter().all(|l| l.feature < n_features)
    }
}

/// `true` when `gain` beats `best` by more than the tie tolerance.
/// Candidates are visited in (feature, threshold, missing-left first) order,
/// so ties resolve to the lowest such triple.
#[inline]
pub fn split_gain_better(gain: f64, best: f64) -> bool {
    gain > best + TIE_EPS * best.abs()
}

/// A built tree plus its splits in bin space (`bin > index` goes right),
/// which route training rows without touching raw values.
#[derive(Clone, Debug)]
pub struct TreeBuild {
    pub tree: ObliviousTree,
    pub bin_splits: Vec<(usize, usize, bool)>,
}

impl TreeBuild {
    pub fn leaf_of_row(&self, data: &BinnedPool, row: usize) -> usize {
        let mut leaf = 0;
        for (j, &(f, t, ml)) in self.bin_splits.iter().enumerate() {
            let b = data.column(f)[row];
            let right = if b == MISSING_BIN { !ml } else { b as usize > t };
            leaf |= (right as usize) << j;
        }
        leaf
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
    missing_left: bool,
}

/// Best split of one feature given per-(leaf, bin) residual histograms.
fn best_for_feature(
    data: &BinnedPool,
    f: usize,
    active_res: &[f64],
    active: &[u32],
    leaf_of: &[u32],
    parents: &[(f64, u32)],
    min_leaf: u32,
) -> Option<Candidate> {
    let n_leaves = parents.len();
    let nb = data.borders(f).len();
    let width = nb + 2; // bins 0..=nb, then missing
    let mut hs = vec![0.0f64; n_leaves * width];
    let mut hc = vec![0u32; n_leaves * width];
    let col = data.column(f);
    for (k, &row) in active.iter().enumerate() {
        let b = col[row as usize];
        let slot = if b == MISSING_BIN { nb + 1 } else { b as usize };
        let at = leaf_of[k] as usize * width + slot;
        hs[at] += active_res[k];
        hc[at] += 1;
    }
    // without missing values both routings give identical partitions, and
    // missing-left wins the tie
    let has_missing = (0..n_leaves).any(|l| hc[l * width + nb + 1] > 0);
    let routings: &[bool] = if has_missing { &[true, false] } else { &[true] };
    let mut best: Option<Candidate> = None;
    let mut prefix = vec![(0.0f64, 0u32); n_leaves];
    // threshold index t = nb means +∞: no present value goes right
    for t in 0..=nb {
        for (l, p) in prefix.iter_mut().enumerate() {
            p.0 += hs[l * width + t];
            p.1 += hc[l * width + t];
        }
        for &missing_left in routings {
            let mut gain = 0.0;
            let mut ok = true;
            for (l, &(s, n)) in parents.iter().enumerate() {
                let (ms, mc) = (hs[l * width + nb + 1], hc[l * width + nb + 1]);
                let (mut ls, mut lc) = prefix[l];
                if missing_left {
                    ls += ms;
                    lc += mc;
                }
                let (rs, rc) = (s - ls, n - lc);
                if (lc > 0 && lc < min_leaf) || (rc > 0 && rc < min_leaf) {
                    ok = false;
                    break;
                }
                gain += split_term(ls, lc) + split_term(rs, rc) - split_term(s, n);
            }
            if !ok {
                continue;
            }
            if best.is_none_or(|b| split_gain_better(gain, b.gain)) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    bin: t,
                    missing_left,
                });
            }
        }
    }
    best
}

/// S²/n, the SSE reduction contribution of a group; 0 for an empty group.
#[inline]
pub(crate) fn split_term(s: f64, n: u32) -> f64 {
    if n == 0 {
        0.0
    } else {
        s * s / n as f64
    }
}

/// Greedy level-wise oblivious tree on `residuals` restricted to the
/// `active` rows. Each level tries every feature and border on all current
/// leaves at once and keeps the pair with the largest squared-error
/// reduction. When no split reduces error, the remaining levels are no-ops.
pub fn build_oblivious_tree(
    data: &BinnedPool,
    residuals: &[f64],
    active: &[u32],
    depth: usize,
    min_samples_leaf: usize,
) -> TreeBuild {
    let mut leaf_of = vec![0u32; active.len()];
    let mut levels = Vec::with_capacity(depth);
    let mut bin_splits = Vec::with_capacity(depth);
    let active_res: Vec<f64> = active.iter().map(|&r| residuals[r as usize]).collect();
    let total_ss: f64 = active_res.iter().map(|r| r * r).sum();
    let mut degenerate = false;
    for j in 0..depth {
        let n_leaves = 1usize << j;
        let mut parents = vec![(0.0f64, 0u32); n_leaves];
        for (k, &row) in active.iter().enumerate() {
            let p = &mut parents[leaf_of[k] as usize];
            p.0 += residuals[row as usize];
            p.1 += 1;
        }
        let chosen = if degenerate {
            None
        } else {
            let per_feature: Vec<Option<Candidate>> = (0..data.n_features())
                .into_par_iter()
                .map(|f| best_for_feature(data, f, &active_res, active, &leaf_of, &parents, min_samples_leaf as u32))
                .collect();
            let mut best: Option<Candidate> = None;
            for c in per_feature.into_iter().flatten() {
                if best.is_none_or(|b| split_gain_better(c.gain, b.gain)) {
                    best = Some(c);
                }
            }
            best.filter(|c| c.gain > TIE_EPS * total_ss)
        };
        match chosen {
            Some(c) => {
                let borders = data.borders(c.feature);
                let threshold = borders.get(c.bin).copied().unwrap_or(f64::INFINITY);
                levels.push(Level {
                    feature: c.feature,
                    threshold,
                    missing_left: c.missing_left,
                    gain: c.gain,
                });
                bin_splits.push((c.feature, c.bin, c.missing_left));
                let col = data.column(c.feature);
                for (k, &row) in active.iter().enumerate() {
                    let b = col[row as usize];
                    let right = if b == MISSING_BIN { !c.missing_left } else { b as usize > c.bin };
                    leaf_of[k] |= (right as u32) << j;
                }
            }
            None => {
                degenerate = true;
                levels.push(Level::NOOP);
                bin_splits.push((0, usize::MAX, true));
            }
        }
    }
    let n_leaves = 1usize << depth;
    let mut sums = vec![(0.0f64, 0u32); n_leaves];
    for (k, &row) in active.iter().enumerate() {
        let s = &mut sums[leaf_of[k] as usize];
        s.0 += residuals[row as usize];
        s.1 += 1;
    }
    let leaves = sums.iter().map(|&(s, n)| if n == 0 { 0.0 } else { s / n as f64 }).collect();
    TreeBuild {
        tree: ObliviousTree { levels, leaves },
        bin_splits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbm::pool::{Binning, TrainPool};
    use crate::MISSING;
    use proptest::prelude::*;

    fn pool_of(rows: &[Vec<f64>]) -> TrainPool {
        let mut p = TrainPool::new(rows[0].len());
        for r in rows {
            p.push(0, r).unwrap();
        }
        p
    }

    #[test]
    fn perfect_split_is_found() {
        // residual is +1 when feature 3 > 0.5, else −1; other features are noise
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 5) as f64, (i % 3) as f64, (i * 11 % 13) as f64, if i % 2 == 0 { 0.0 } else { 1.0 }])
            .collect();
        let res: Vec<f64> = rows.iter().map(|r| if r[3] > 0.5 { 1.0 } else { -1.0 }).collect();
        let data = BinnedPool::new(&pool_of(&rows), Binning::Histogram(32));
        let active: Vec<u32> = (0..40).collect();
        let b = build_oblivious_tree(&data, &res, &active, 1, 1);
        assert_eq!((b.tree.levels[0].feature, b.tree.levels[0].threshold), (3, 0.5));
        assert_eq!(b.tree.leaves, vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_residuals_give_noop_levels() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i % 2) as f64]).collect();
        let data = BinnedPool::new(&pool_of(&rows), Binning::Histogram(32));
        let b = build_oblivious_tree(&data, &[0.25; 10], &(0..10).collect::<Vec<_>>(), 3, 1);
        assert!(b.tree.levels.iter().all(Level::is_noop));
        assert_eq!(b.tree.leaves[0], 0.25);
        assert!(b.tree.leaves[1..].iter().all(|&v| v == 0.0));
        for x in &rows {
            assert_eq!(b.tree.value(x), 0.25);
        }
    }

    #[test]
    fn missing_values_route_by_flag() {
        let rows = vec![vec![1.0], vec![2.0], vec![MISSING], vec![MISSING]];
        let res = [-1.0, -1.0, 1.0, 1.0];
        let data = BinnedPool::new(&pool_of(&rows), Binning::Exact);
        let b = build_oblivious_tree(&data, &res, &[0, 1, 2, 3], 1, 1);
        let l = b.tree.levels[0];
        assert!(!l.missing_left && l.threshold == f64::INFINITY);
        assert_eq!(b.tree.value(&[MISSING]), 1.0);
        assert_eq!(b.tree.value(&[5.0]), -1.0);
    }

    #[test]
    fn leaf_routing_agrees_between_bins_and_values() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i * 37 % 17) as f64 * 0.3, if i % 7 == 0 { MISSING } else { (i % 5) as f64 }])
            .collect();
        let res: Vec<f64> = (0..50).map(|i| ((i * 13 % 11) as f64 - 5.0) / 4.0).collect();
        let data = BinnedPool::new(&pool_of(&rows), Binning::Histogram(4));
        let b = build_oblivious_tree(&data, &res, &(0..50).collect::<Vec<_>>(), 3, 1);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(b.leaf_of_row(&data, i), b.tree.leaf_index(r));
        }
    }

    // Exhaustive search straight from rows: every feature, every midpoint
    // between consecutive distinct values plus +∞, both missing sides.
    fn brute_force_levels(rows: &[Vec<f64>], res: &[f64], depth: usize) -> Vec<(usize, f64, bool)> {
        let p = rows[0].len();
        let mut leaf = vec![0usize; rows.len()];
        let mut out = Vec::new();
        for j in 0..depth {
            let n_leaves = 1 << j;
            let mut best: Option<(f64, usize, f64, bool)> = None;
            for f in 0..p {
                let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).filter(|v| !v.is_nan()).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let mut thr: Vec<f64> = vals.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
                thr.push(f64::INFINITY);
                for &t in &thr {
                    for ml in [true, false] {
                        let mut gain = 0.0;
                        for l in 0..n_leaves {
                            let (mut s, mut n, mut ls, mut ln) = (0.0, 0u32, 0.0, 0u32);
                            let (mut ms, mut mn) = (0.0, 0u32);
                            for (i, r) in rows.iter().enumerate() {
                                if leaf[i] != l {
                                    continue;
                                }
                                s += res[i];
                                n += 1;
                                if r[f].is_nan() {
                                    ms += res[i];
                                    mn += 1;
                                } else if !(r[f] > t) {
                                    ls += res[i];
                                    ln += 1;
                                }
                            }
                            if ml {
                                ls += ms;
                                ln += mn;
                            }
                            gain += split_term(ls, ln) + split_term(s - ls, n - ln) - split_term(s, n);
                        }
                        if best.is_none_or(|b| split_gain_better(gain, b.0)) {
                            best = Some((gain, f, t, ml));
                        }
                    }
                }
            }
            let total: f64 = res.iter().map(|r| r * r).sum();
            let (g, f, t, ml) = best.unwrap();
            if !(g > TIE_EPS * total) {
                out.push((0, f64::INFINITY, true));
                break;
            }
            out.push((f, t, ml));
            for (i, r) in rows.iter().enumerate() {
                let right = if r[f].is_nan() { !ml } else { r[f] > t };
                leaf[i] |= (right as usize) << j;
            }
        }
        out
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..=4, 2usize..=64).prop_flat_map(|(p, n)| {
            let cell = prop_oneof![8 => (0i32..6).prop_map(|v| v as f64 * 0.5), 1 => Just(MISSING)];
            (
                prop::collection::vec(prop::collection::vec(cell, p), n),
                // dyadic residuals keep every partial sum exact
                prop::collection::vec((-16i32..=16).prop_map(|v| v as f64 / 8.0), n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn greedy_split_equals_exhaustive_search((rows, res) in instance(), depth in 1usize..=2) {
            let data = BinnedPool::new(&pool_of(&rows), Binning::Exact);
            let active: Vec<u32> = (0..rows.len() as u32).collect();
            let b = build_oblivious_tree(&data, &res, &active, depth, 1);
            let oracle = brute_force_levels(&rows, &res, depth);
            for (lvl, want) in b.tree.levels.iter().zip(&oracle) {
                prop_assert_eq!((lvl.feature, lvl.threshold, lvl.missing_left), *want);
            }
            prop_assert!(b.tree.is_well_formed(rows[0].len()));
        }
    }
}
