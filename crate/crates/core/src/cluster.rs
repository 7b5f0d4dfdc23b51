//! Ward agglomerative clustering with Calinski-Harabasz model selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster id per input row. Ids are numbered by first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    /// `None` where the index is undefined (k == 1 or k == m).
    pub ch_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSearchResult {
    pub best: ClusterAssignment,
    pub scores: BTreeMap<usize, f64>,
}

/// One merge step: clusters represented by rows `a < b` join at `cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub size: usize,
}

/// Stepwise dendrogram produced by Ward linkage on squared Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub observations: usize,
    pub merges: Vec<Merge>,
}

fn check_rows(features: &[Vec<f64>]) -> Result<usize> {
    let d = features.first().map_or(0, Vec::len);
    if let Some(r) = features.iter().find(|r| r.len() != d) {
        return Err(Error::Length {
            expected: d,
            actual: r.len(),
        });
    }
    if features.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("features contain non-finite values".into()));
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Condensed upper-triangular distance storage.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

impl Dendrogram {
    /// Build the full merge sequence. At each step the pair with the smallest
    /// Ward cost merges; ties go to the lexicographically smallest (i, j).
    pub fn build(features: &[Vec<f64>]) -> Result<Self> {
        check_rows(features)?;
        let n = features.len();
        let mut dist = Condensed {
            n,
            d: Vec::with_capacity(n * n.saturating_sub(1) / 2),
        };
        for i in 0..n {
            for j in i + 1..n {
                dist.d.push(sq_dist(&features[i], &features[j]));
            }
        }
        let mut size = vec![1usize; n];
        let mut active = vec![true; n];
        // Nearest active neighbour with a larger index.
        let mut nn = vec![usize::MAX; n];
        let mut nn_d = vec![f64::INFINITY; n];
        let refresh = |i: usize, active: &[bool], dist: &Condensed, nn: &mut [usize], nn_d: &mut [f64]| {
            nn[i] = usize::MAX;
            nn_d[i] = f64::INFINITY;
            for j in i + 1..n {
                if active[j] {
                    let v = dist.get(i, j);
                    if v < nn_d[i] {
                        nn_d[i] = v;
                        nn[i] = j;
                    }
                }
            }
        };
        for i in 0..n {
            refresh(i, &active, &dist, &mut nn, &mut nn_d);
        }

        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut a = usize::MAX;
            for i in 0..n {
                if active[i] && nn[i] != usize::MAX && (a == usize::MAX || nn_d[i] < nn_d[a]) {
                    a = i;
                }
            }
            let b = nn[a];
            let cost = nn_d[a];
            let (na, nb) = (size[a] as f64, size[b] as f64);
            active[b] = false;
            for k in 0..n {
                if !active[k] || k == a {
                    continue;
                }
                let nk = size[k] as f64;
                let v = ((na + nk) * dist.get(k, a) + (nb + nk) * dist.get(k, b) - nk * cost) / (na + nb + nk);
                dist.set(k, a, v);
            }
            size[a] += size[b];
            merges.push(Merge {
                a,
                b,
                cost,
                size: size[a],
            });

            refresh(a, &active, &dist, &mut nn, &mut nn_d);
            for k in 0..n {
                if !active[k] || k == a {
                    continue;
                }
                if nn[k] == a || nn[k] == b {
                    refresh(k, &active, &dist, &mut nn, &mut nn_d);
                } else if k < a {
                    let v = dist.get(k, a);
                    if v < nn_d[k] || (v == nn_d[k] && a < nn[k]) {
                        nn_d[k] = v;
                        nn[k] = a;
                    }
                }
            }
        }
        Ok(Dendrogram {
            observations: n,
            merges,
        })
    }

    /// Flat labels after replaying merges until `k` clusters remain.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.observations;
        if k < 1 || k > n {
            return Err(Error::OutOfRange(format!("cluster count {k} outside 1..={n}")));
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..n - k] {
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[rb] = ra;
        }
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let root = find(&mut parent, i);
            let next = ids.len();
            labels.push(*ids.entry(root).or_insert(next));
        }
        Ok(labels)
    }
}

/// Ward clustering of `features` into exactly `k` clusters.
pub fn agglomerate(features: &[Vec<f64>], k: usize) -> Result<ClusterAssignment> {
    if k < 1 || k > features.len() {
        return Err(Error::OutOfRange(format!(
            "cluster count {k} outside 1..={}",
            features.len()
        )));
    }
    let labels = Dendrogram::build(features)?.cut(k)?;
    let ch_score = calinski_harabasz(features, &labels).ok();
    Ok(ClusterAssignment { labels, k, ch_score })
}

/// Between- and within-cluster sums of squared distances to centroids.
pub fn scatter(features: &[Vec<f64>], labels: &[usize]) -> Result<(f64, f64, usize)> {
    let d = check_rows(features)?;
    if labels.len() != features.len() {
        return Err(Error::Length {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    let mut grand = vec![0.0; d];
    for (row, &l) in features.iter().zip(labels) {
        counts[l] += 1;
        for j in 0..d {
            sums[l][j] += row[j];
            grand[j] += row[j];
        }
    }
    if counts.contains(&0) {
        return Err(Error::IndexUndefined(
            "cluster ids must be contiguous and non-empty".into(),
        ));
    }
    let m = features.len() as f64;
    grand.iter_mut().for_each(|g| *g /= m);
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|x| x / c as f64).collect())
        .collect();
    let within: f64 = features
        .iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, &centroids[l]))
        .sum();
    let between: f64 = centroids
        .iter()
        .zip(&counts)
        .map(|(c, &n)| n as f64 * sq_dist(c, &grand))
        .sum();
    Ok((between, within, k))
}

/// `[B / (k − 1)] / [W / (m − k)]`.
///
/// Infinite when every cluster is a set of coincident points; an error when
/// all points coincide.
pub fn calinski_harabasz(features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let (between, within, k) = scatter(features, labels)?;
    let m = features.len();
    if k < 2 || m <= k {
        return Err(Error::IndexUndefined(format!(
            "Calinski-Harabasz needs 2 <= k < m, got k={k}, m={m}"
        )));
    }
    if within == 0.0 {
        if between == 0.0 {
            return Err(Error::Degenerate("all points identical".into()));
        }
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (m - k) as f64))
}

/// Sweep `k_min..=k_max` over one dendrogram and keep the best CH score
/// (ties to the smaller k). `k_max` is clamped to `m − 1`.
pub fn select_clustering(features: &[Vec<f64>], k_min: usize, k_max: usize) -> Result<ClusterSearchResult> {
    let m = features.len();
    let k_min = k_min.max(2);
    if m <= k_min {
        return Err(Error::InsufficientData(format!(
            "need more than {k_min} points to search clusterings, got {m}"
        )));
    }
    if k_max < k_min {
        return Err(Error::InvalidConfig(format!("empty search range {k_min}..={k_max}")));
    }
    let k_max = k_max.min(m - 1);
    let (_, total, _) = scatter(features, &vec![0; m])?;
    if total == 0.0 {
        return Err(Error::Degenerate("all points identical".into()));
    }
    let dendrogram = Dendrogram::build(features)?;
    let mut scores = BTreeMap::new();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for k in k_min..=k_max {
        let labels = dendrogram.cut(k)?;
        let score = calinski_harabasz(features, &labels)?;
        scores.insert(k, score);
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((k, score, labels));
        }
    }
    let (k, score, labels) = best.expect("range is non-empty");
    Ok(ClusterSearchResult {
        best: ClusterAssignment {
            labels,
            k,
            ch_score: Some(score),
        },
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_points() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]]
    }

    #[test]
    fn ch_on_four_point_fixture() {
        // Centroids (0, 0.5) and (10, 0.5); grand mean (5, 0.5).
        // B = 2·25 + 2·25 = 100, W = 4·0.25 = 1, k = 2, m = 4.
        // CH = (100 / 1) / (1 / 2) = 200.
        let ch = calinski_harabasz(&four_points(), &[0, 0, 1, 1]).unwrap();
        assert!((ch - 200.0).abs() < 1e-9);
        // Crossed: centroids (5, 0) and (5, 1). B = 4·0.25 = 1, W = 4·25 = 100.
        let crossed = calinski_harabasz(&four_points(), &[0, 1, 0, 1]).unwrap();
        assert!((crossed - 0.02).abs() < 1e-12);
        assert!(crossed < ch);
    }

    #[test]
    fn ch_undefined_cases() {
        assert!(matches!(
            calinski_harabasz(&four_points(), &[0; 4]),
            Err(Error::IndexUndefined(_))
        ));
        assert!(matches!(
            calinski_harabasz(&four_points(), &[0, 1, 2, 3]),
            Err(Error::IndexUndefined(_))
        ));
        assert!(calinski_harabasz(&four_points(), &[0, 0, 2, 2]).is_err());
    }

    #[test]
    fn extreme_k() {
        let pts = four_points();
        let singletons = agglomerate(&pts, 4).unwrap();
        assert_eq!(singletons.labels, vec![0, 1, 2, 3]);
        assert_eq!(singletons.ch_score, None);
        assert_eq!(agglomerate(&pts, 1).unwrap().labels, vec![0; 4]);
        assert!(agglomerate(&pts, 0).is_err());
        assert!(agglomerate(&pts, 5).is_err());
        assert_eq!(agglomerate(&pts, 2).unwrap().labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn merge_ties_take_smallest_pair() {
        // Equally spaced on a line: (0,1) and (1,2), (2,3) tie; (0,1) must merge first.
        let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let d = Dendrogram::build(&pts).unwrap();
        assert_eq!((d.merges[0].a, d.merges[0].b), (0, 1));
        assert_eq!((d.merges[1].a, d.merges[1].b), (2, 3));
    }

    #[test]
    fn ward_costs_match_variance_increase() {
        // Lance-Williams Ward on squared distances yields 2·ΔSSE per merge.
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        let d = Dendrogram::build(&pts).unwrap();
        assert_eq!(d.merges[0].cost, 1.0);
        // Merging {0,1} (centroid 0.5) with {5}: ΔSSE = (2·1/3)·4.5² = 13.5.
        assert!((d.merges[1].cost - 27.0).abs() < 1e-12);
    }

    fn blobs(rng: &mut ChaCha8Rng, centers: &[[f64; 2]], per: usize, sigma: f64) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for c in centers {
            for _ in 0..per {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                let h: f64 = rng.sample(rand_distr::StandardNormal);
                out.push(vec![c[0] + sigma * g, c[1] + sigma * h]);
            }
        }
        out
    }

    #[test]
    fn two_far_blobs_match_exhaustive_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = blobs(&mut rng, &[[0.0, 0.0], [100.0, 0.0]], 4, 1.0);
        let got = agglomerate(&pts, 2).unwrap().labels;
        // Exhaustive search over all 2-partitions for minimum W.
        let m = pts.len();
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1..(1u32 << (m - 1)) {
            let labels: Vec<usize> = (0..m).map(|i| ((mask >> i) & 1) as usize).collect();
            let (_, w, _) = scatter(&pts, &labels).unwrap();
            if w < best.0 {
                best = (w, mask);
            }
        }
        let brute: Vec<usize> = (0..m).map(|i| ((best.1 >> i) & 1) as usize).collect();
        let same = got.iter().zip(&brute).all(|(a, b)| a == b) || got.iter().zip(&brute).all(|(a, b)| a != b);
        assert!(same, "{got:?} vs {brute:?}");
    }

    #[test]
    fn three_blobs_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = blobs(&mut rng, &[[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]], 15, 1.0);
        let res = select_clustering(&pts, 2, 10).unwrap();
        assert_eq!(res.best.k, 3);
        assert_eq!(res.scores.len(), 9);
        let max = res.scores.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(res.best.ch_score, Some(max));
    }

    #[test]
    fn search_edges() {
        let pts = four_points();
        let single = select_clustering(&pts, 2, 2).unwrap();
        assert_eq!(single.best.k, 2);
        assert!(matches!(
            select_clustering(&vec![vec![1.0, 1.0]; 20], 2, 10),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            select_clustering(&pts[..2], 2, 10),
            Err(Error::InsufficientData(_))
        ));
        // k_max clamps to m − 1.
        assert_eq!(select_clustering(&pts, 2, 10).unwrap().scores.len(), 2);
    }

    #[test]
    fn nesting_and_translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random(), rng.random()]).collect();
        let d = Dendrogram::build(&pts).unwrap();
        for k in 1..pts.len() {
            let coarse = d.cut(k).unwrap();
            let fine = d.cut(k + 1).unwrap();
            // Every fine cluster lies inside one coarse cluster.
            let mut parent = BTreeMap::new();
            for (f, c) in fine.iter().zip(&coarse) {
                assert_eq!(*parent.entry(*f).or_insert(*c), *c);
            }
        }
        let labels = d.cut(4).unwrap();
        let shifted: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 7.5, p[1] - 3.25]).collect();
        let a = calinski_harabasz(&pts, &labels).unwrap();
        let b = calinski_harabasz(&shifted, &labels).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs());
    }
}
