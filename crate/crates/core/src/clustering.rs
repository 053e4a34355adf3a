//! Hard K-means and fuzzy c-means over feature vectors.
//!
//! K-means is the default facies generator; the fuzzy objective
//! `J_m = sum_ij u_ij^m ||x_i - C_j||^2` with its membership and centroid
//! updates is available as `Fuzzy` mode. Both share seeded k-means++
//! initialization and are bit-reproducible per seed.

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::rng::{self, stream, SeedRng};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMode {
    Hard,
    Fuzzy,
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub clusters: usize,
    /// Fuzzifier m > 1; fuzzy mode only.
    pub fuzzifier: f64,
    pub max_iter: usize,
    /// Hard mode: relative objective improvement; fuzzy mode: max
    /// membership change.
    pub tol: f64,
    pub seed: u64,
    pub mode: ClusterMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            clusters: 5,
            fuzzifier: 2.0,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
            mode: ClusterMode::Hard,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least 2 clusters, got {}",
                self.clusters
            )));
        }
        if self.mode == ClusterMode::Fuzzy && !(self.fuzzifier > 1.0) {
            return Err(Error::InvalidArchitecture(format!(
                "fuzzifier must exceed 1, got {}",
                self.fuzzifier
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArchitecture(
                "tolerance must be positive and max_iter at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClusterResult {
    /// c x d, row per cluster.
    pub centroids: Matrix,
    /// N x c; one-hot rows in hard mode.
    pub memberships: Matrix,
    pub labels: Vec<usize>,
    /// Objective value after every iteration.
    pub objective: Vec<f64>,
}

fn check_input(x: &Matrix, cfg: &ClusterConfig) -> Result<()> {
    cfg.validate()?;
    if x.rows() < cfg.clusters {
        return Err(Error::TooFewPoints {
            points: x.rows(),
            clusters: cfg.clusters,
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite {
            context: "clustering input",
        });
    }
    Ok(())
}

/// Seeded k-means++: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the nearest chosen
/// centroid. Coincident duplicates degrade to a uniform draw.
fn kmeanspp_init(x: &Matrix, c: usize, rng: &mut SeedRng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(c, x.cols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, x.row(first));
    let mut best = vec![f64::INFINITY; n];
    for j in 1..c {
        for (i, b) in best.iter_mut().enumerate() {
            let d = sq_dist(x.row(i), centroids.row(j - 1));
            if d < *b {
                *b = d;
            }
        }
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in best.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(j, x.row(pick));
    }
    centroids
}

/// Nearest-centroid assignment, ties to the lowest cluster index.
fn assign(x: &Matrix, centroids: &Matrix) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let mut label = 0;
            let mut best = f64::INFINITY;
            for j in 0..centroids.rows() {
                let d = sq_dist(x.row(i), centroids.row(j));
                if d < best {
                    best = d;
                    label = j;
                }
            }
            label
        })
        .collect()
}

/// Hard-assignment objective: `sum_i ||x_i - C_{label_i}||^2`.
pub(crate) fn hard_objective(x: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), centroids.row(l)))
        .sum()
}

/// Lloyd iterations with seeded k-means++ start. Empty clusters are
/// repaired by reseeding to the point currently farthest from its
/// centroid, which strictly lowers the objective.
pub fn kmeans(x: &Matrix, cfg: &ClusterConfig) -> Result<ClusterResult> {
    check_input(x, cfg)?;
    let (n, c) = (x.rows(), cfg.clusters);
    let mut rng = rng::seeded(cfg.seed, stream::CLUSTER);
    let mut centroids = kmeanspp_init(x, c, &mut rng);
    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let mut new_labels = assign(x, &centroids);
        repair_empty_clusters(x, &centroids, &mut new_labels, c);
        let changed = new_labels != labels;
        labels = new_labels;
        // centroid = mean of members
        let mut counts = vec![0usize; c];
        let mut sums = Matrix::zeros(c, x.cols());
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            sums.add_to_row(l, x.row(i));
        }
        for j in 0..c {
            debug_assert!(counts[j] > 0, "repair leaves no cluster empty");
            sums.scale_row(j, 1.0 / counts[j] as f64);
        }
        centroids = sums;
        let j = hard_objective(x, &centroids, &labels);
        let improved_below_tol = history
            .last()
            .map(|&prev: &f64| (prev - j) <= cfg.tol * prev.max(f64::MIN_POSITIVE))
            .unwrap_or(false);
        history.push(j);
        if !changed || improved_below_tol {
            break;
        }
    }
    let mut memberships = Matrix::zeros(n, c);
    for (i, &l) in labels.iter().enumerate() {
        memberships.set(i, l, 1.0);
    }
    Ok(ClusterResult {
        centroids,
        memberships,
        labels,
        objective: history,
    })
}

fn repair_empty_clusters(x: &Matrix, centroids: &Matrix, labels: &mut [usize], c: usize) {
    let mut counts = vec![0usize; c];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut dist: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(x.row(i), centroids.row(l)))
        .collect();
    for e in 0..c {
        if counts[e] > 0 {
            continue;
        }
        let (far, _) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .expect("at least c points");
        counts[labels[far]] -= 1;
        labels[far] = e;
        counts[e] = 1;
        dist[far] = 0.0;
    }
}

/// Membership update: `u_ij = 1 / sum_l (d_ij / d_il)^(2/(m-1))` with
/// Euclidean `d`. A point coincident with centroids splits its membership
/// equally among them.
pub fn fcm_memberships(x: &Matrix, centroids: &Matrix, m: f64) -> Matrix {
    let (n, c) = (x.rows(), centroids.rows());
    let exponent = 1.0 / (m - 1.0);
    let mut u = Matrix::zeros(n, c);
    let mut d2 = vec![0.0; c];
    for i in 0..n {
        for (j, d) in d2.iter_mut().enumerate() {
            *d = sq_dist(x.row(i), centroids.row(j));
        }
        let zeros: Vec<usize> = (0..c).filter(|&j| d2[j] == 0.0).collect();
        if !zeros.is_empty() {
            for &j in &zeros {
                u.set(i, j, 1.0 / zeros.len() as f64);
            }
            continue;
        }
        for j in 0..c {
            let denom: f64 = d2.iter().map(|&dl| (d2[j] / dl).powf(exponent)).sum();
            u.set(i, j, 1.0 / denom);
        }
    }
    u
}

/// Centroid update: `C_j = sum_i u_ij^m x_i / sum_i u_ij^m`. A cluster
/// with zero total weight keeps its previous centroid.
pub fn fcm_centroids(x: &Matrix, u: &Matrix, m: f64, previous: &Matrix) -> Matrix {
    let (n, c, d) = (x.rows(), u.cols(), x.cols());
    let mut out = Matrix::zeros(c, d);
    for j in 0..c {
        let mut weight = 0.0;
        let mut acc = vec![0.0; d];
        for i in 0..n {
            let w = u.get(i, j).powf(m);
            weight += w;
            for (a, &v) in acc.iter_mut().zip(x.row(i)) {
                *a += w * v;
            }
        }
        if weight > 0.0 {
            for a in &mut acc {
                *a /= weight;
            }
            out.set_row(j, &acc);
        } else {
            out.set_row(j, previous.row(j));
        }
    }
    out
}

pub(crate) fn fuzzy_objective(x: &Matrix, u: &Matrix, centroids: &Matrix, m: f64) -> f64 {
    let mut j_m = 0.0;
    for i in 0..x.rows() {
        for j in 0..centroids.rows() {
            j_m += u.get(i, j).powf(m) * sq_dist(x.row(i), centroids.row(j));
        }
    }
    j_m
}

/// Alternating membership/centroid updates; stops when the largest
/// membership change drops below the tolerance.
pub fn fuzzy_cmeans(x: &Matrix, cfg: &ClusterConfig) -> Result<ClusterResult> {
    let cfg = ClusterConfig {
        mode: ClusterMode::Fuzzy,
        ..cfg.clone()
    };
    check_input(x, &cfg)?;
    let (n, c, m) = (x.rows(), cfg.clusters, cfg.fuzzifier);
    let mut rng = rng::seeded(cfg.seed, stream::CLUSTER);
    let mut centroids = kmeanspp_init(x, c, &mut rng);
    let mut u = Matrix::zeros(n, c);
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let next = fcm_memberships(x, &centroids, m);
        let delta = u
            .data()
            .iter()
            .zip(next.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        u = next;
        centroids = fcm_centroids(x, &u, m, &centroids);
        history.push(fuzzy_objective(x, &u, &centroids, m));
        if delta < cfg.tol {
            break;
        }
    }
    let labels = harden(&u);
    Ok(ClusterResult {
        centroids,
        memberships: u,
        labels,
        objective: history,
    })
}

/// Argmax membership per row, ties to the lowest cluster index.
pub fn harden(memberships: &Matrix) -> Vec<usize> {
    (0..memberships.rows())
        .map(|i| {
            let row = memberships.row(i);
            let mut label = 0;
            let mut best = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    label = j;
                }
            }
            label
        })
        .collect()
}

/// Mode dispatch for the pipeline driver.
pub fn cluster(x: &Matrix, cfg: &ClusterConfig) -> Result<ClusterResult> {
    match cfg.mode {
        ClusterMode::Hard => kmeans(x, cfg),
        ClusterMode::Fuzzy => fuzzy_cmeans(x, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn cfg(clusters: usize, seed: u64) -> ClusterConfig {
        ClusterConfig {
            clusters,
            seed,
            ..ClusterConfig::default()
        }
    }

    fn points(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn two_separated_pairs_find_their_centroids() {
        let x = points(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]);
        let r = kmeans(&x, &cfg(2, 0)).unwrap();
        let mut centroids: Vec<Vec<f64>> =
            (0..2).map(|j| r.centroids.row(j).to_vec()).collect();
        centroids.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(centroids[0], vec![0.0, 0.5]);
        assert_eq!(centroids[1], vec![10.0, 10.5]);
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
    }

    #[test]
    fn n_equals_c_gives_singletons_with_zero_objective() {
        let x = points(&[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]]);
        let r = kmeans(&x, &cfg(3, 1)).unwrap();
        let mut sorted = r.labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert_eq!(*r.objective.last().unwrap(), 0.0);
    }

    #[test]
    fn too_few_points_errors() {
        let x = points(&[[0.0, 0.0]]);
        assert!(matches!(
            kmeans(&x, &cfg(2, 0)),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn hard_memberships_are_one_hot() {
        let x = points(&[[0.0, 0.0], [1.0, 0.0], [9.0, 9.0], [10.0, 9.0]]);
        let r = kmeans(&x, &cfg(2, 3)).unwrap();
        for i in 0..4 {
            let row = r.memberships.row(i);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(row[r.labels[i]], 1.0);
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let mut r = seeded(9, 9);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let a = kmeans(&x, &cfg(3, 7)).unwrap();
        let b = kmeans(&x, &cfg(3, 7)).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centroids.data(), b.centroids.data());
        let fa = fuzzy_cmeans(&x, &cfg(3, 7)).unwrap();
        let fb = fuzzy_cmeans(&x, &cfg(3, 7)).unwrap();
        assert_eq!(fa.memberships.data(), fb.memberships.data());
    }

    #[test]
    fn equidistant_point_gets_half_memberships() {
        let x = points(&[[1.0, 0.0]]);
        let centroids = points(&[[0.0, 0.0], [2.0, 0.0]]);
        let u = fcm_memberships(&x, &centroids, 2.0);
        assert!((u.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((u.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coincident_point_gets_full_membership() {
        let x = points(&[[2.0, 0.0]]);
        let centroids = points(&[[0.0, 0.0], [2.0, 0.0]]);
        let u = fcm_memberships(&x, &centroids, 2.0);
        assert_eq!(u.get(0, 0), 0.0);
        assert_eq!(u.get(0, 1), 1.0);
    }

    #[test]
    fn large_fuzzifier_approaches_uniform_memberships() {
        let x = points(&[[1.0, 0.0]]);
        let centroids = points(&[[0.0, 0.0], [4.0, 0.0]]);
        let u = fcm_memberships(&x, &centroids, 10.0);
        assert!((u.get(0, 0) - 0.5).abs() < 0.07, "u00 = {}", u.get(0, 0));
        let sharp = fcm_memberships(&x, &centroids, 2.0);
        assert!(sharp.get(0, 0) > u.get(0, 0));
    }

    #[test]
    fn equal_memberships_put_every_centroid_at_the_global_mean() {
        let x = points(&[[0.0, 0.0], [2.0, 4.0], [4.0, 2.0]]);
        let u = Matrix::from_rows(&vec![vec![0.5, 0.5]; 3]).unwrap();
        let prev = Matrix::zeros(2, 2);
        let c = fcm_centroids(&x, &u, 2.0, &prev);
        for j in 0..2 {
            assert!((c.get(j, 0) - 2.0).abs() < 1e-12);
            assert!((c.get(j, 1) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centroid_update_matches_loop_oracle() {
        let mut r = seeded(11, 11);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let u_rows: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let a: f64 = r.random_range(0.01..0.99);
                vec![a, 1.0 - a]
            })
            .collect();
        let u = Matrix::from_rows(&u_rows).unwrap();
        let prev = Matrix::zeros(2, 3);
        let m = 2.0;
        let got = fcm_centroids(&x, &u, m, &prev);
        for j in 0..2 {
            for t in 0..3 {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..12 {
                    num += u.get(i, j).powf(m) * x.get(i, t);
                    den += u.get(i, j).powf(m);
                }
                assert!((got.get(j, t) - num / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn harden_takes_argmax_with_low_index_ties() {
        let u = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        ])
        .unwrap();
        assert_eq!(harden(&u), vec![0, 1, 0]);
    }

    #[test]
    fn kmeans_labels_equal_hardened_memberships() {
        let mut r = seeded(13, 13);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let res = kmeans(&x, &cfg(3, 5)).unwrap();
        assert_eq!(harden(&res.memberships), res.labels);
    }

    #[test]
    fn relabeling_leaves_the_objective_unchanged() {
        let x = points(&[[0.0, 0.0], [1.0, 1.0], [8.0, 8.0], [9.0, 9.0], [0.5, 0.5]]);
        let r = kmeans(&x, &cfg(2, 2)).unwrap();
        let j = hard_objective(&x, &r.centroids, &r.labels);
        let swapped_centroids = Matrix::from_rows(&[
            r.centroids.row(1).to_vec(),
            r.centroids.row(0).to_vec(),
        ])
        .unwrap();
        let swapped_labels: Vec<usize> = r.labels.iter().map(|&l| 1 - l).collect();
        let j_swapped = hard_objective(&x, &swapped_centroids, &swapped_labels);
        assert!((j - j_swapped).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fuzzy_membership_rows_sum_to_one(
            seed in 0u64..500,
            n in 4usize..20,
            c in 2usize..4,
        ) {
            let mut r = seeded(seed, 77);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| r.random_range(-5.0..5.0)).collect())
                .collect();
            let x = Matrix::from_rows(&rows).unwrap();
            prop_assume!(n >= c);
            let res = fuzzy_cmeans(&x, &cfg(c, seed)).unwrap();
            for i in 0..n {
                let s: f64 = res.memberships.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
                prop_assert!(res.memberships.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn kmeans_objective_never_increases(seed in 0u64..500) {
            let mut r = seeded(seed, 78);
            let n = 25;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| r.random_range(-3.0..3.0)).collect())
                .collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let res = kmeans(&x, &cfg(4, seed)).unwrap();
            for pair in res.objective.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-9, "objective rose: {pair:?}");
            }
        }

        #[test]
        fn fuzzy_objective_never_increases(seed in 0u64..200) {
            let mut r = seeded(seed, 79);
            let n = 20;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| r.random_range(-3.0..3.0)).collect())
                .collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let res = fuzzy_cmeans(&x, &cfg(3, seed)).unwrap();
            for pair in res.objective.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-9, "objective rose: {pair:?}");
            }
        }
    }
}
