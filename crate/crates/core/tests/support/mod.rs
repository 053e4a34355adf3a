//! Nested-loop oracles for the numeric kernels, written from the
//! definitions without reference to the library internals. Each runner
//! checks `instances` random cases and returns the largest deviation it
//! saw; structural mismatches (shapes, argmax positions) panic outright.

use prefacies_core::baselines::{pca_fit, pca_transform};
use prefacies_core::cae::mse_loss;
use prefacies_core::clustering::{fcm_centroids, fcm_memberships, kmeans, ClusterConfig};
use prefacies_core::matrix::{sq_dist, Matrix};
use prefacies_core::rng::seeded;
use prefacies_core::tensor::{
    conv2d_full, conv2d_valid, maxpool2x2, unpool_with_indices, PoolIndices, Tensor,
};
use rand::Rng;

fn random_tensor<R: Rng>(shape: &[usize], r: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, r: &mut R) -> Matrix {
    Matrix::from_rows(
        &(0..rows)
            .map(|_| (0..cols).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect::<Vec<Vec<f64>>>(),
    )
    .unwrap()
}

pub fn conv_valid_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 1);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let c = r.random_range(1..=3usize);
        let n = [1, 3, 5][r.random_range(0..3usize)];
        let k = r.random_range(1..=3usize);
        let h = n + r.random_range(0..=5usize);
        let w = n + r.random_range(0..=5usize);
        let x = random_tensor(&[c, h, w], &mut r);
        let kernel = random_tensor(&[c, n, n, k], &mut r);
        let got = conv2d_valid(&x, &kernel).unwrap();
        assert_eq!(got.shape(), &[k, h - n + 1, w - n + 1]);
        for kf in 0..k {
            for i in 0..h - n + 1 {
                for j in 0..w - n + 1 {
                    let mut acc = 0.0;
                    for cc in 0..c {
                        for p in 0..n {
                            for q in 0..n {
                                acc += x.get3(cc, i + p, j + q) * kernel.get4(cc, p, q, kf);
                            }
                        }
                    }
                    worst = worst.max((got.get3(kf, i, j) - acc).abs());
                }
            }
        }
    }
    worst
}

pub fn conv_full_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 2);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let c = r.random_range(1..=3usize);
        let n = [1, 3, 5][r.random_range(0..3usize)];
        let k = r.random_range(1..=3usize);
        let h = r.random_range(1..=6usize);
        let w = r.random_range(1..=6usize);
        let x = random_tensor(&[c, h, w], &mut r);
        let kernel = random_tensor(&[c, n, n, k], &mut r);
        let got = conv2d_full(&x, &kernel).unwrap();
        assert_eq!(got.shape(), &[k, h + n - 1, w + n - 1]);
        for kf in 0..k {
            for i in 0..h + n - 1 {
                for j in 0..w + n - 1 {
                    // cross-correlation over an input zero-padded by n-1
                    let mut acc = 0.0;
                    for cc in 0..c {
                        for p in 0..n {
                            for q in 0..n {
                                let si = i as isize + p as isize - (n as isize - 1);
                                let sj = j as isize + q as isize - (n as isize - 1);
                                if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                                    acc += x.get3(cc, si as usize, sj as usize)
                                        * kernel.get4(cc, p, q, kf);
                                }
                            }
                        }
                    }
                    worst = worst.max((got.get3(kf, i, j) - acc).abs());
                }
            }
        }
    }
    worst
}

pub fn pooling_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 3);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let maps = r.random_range(1..=3usize);
        let h = 2 * r.random_range(1..=4usize);
        let w = 2 * r.random_range(1..=4usize);
        let x = random_tensor(&[maps, h, w], &mut r);
        let (pooled, idx) = maxpool2x2(&x).unwrap();
        for m in 0..maps {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let block = [
                        x.get3(m, 2 * i, 2 * j),
                        x.get3(m, 2 * i, 2 * j + 1),
                        x.get3(m, 2 * i + 1, 2 * j),
                        x.get3(m, 2 * i + 1, 2 * j + 1),
                    ];
                    let mut best = 0;
                    for (o, v) in block.iter().enumerate().skip(1) {
                        if *v > block[best] {
                            best = o;
                        }
                    }
                    worst = worst.max((pooled.get3(m, i, j) - block[best]).abs());
                    assert_eq!(idx.offset_at(m, i, j) as usize, best);
                }
            }
        }
    }
    worst
}

pub fn unpooling_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 4);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let maps = r.random_range(1..=3usize);
        let h = r.random_range(1..=4usize);
        let w = r.random_range(1..=4usize);
        let pooled = random_tensor(&[maps, h, w], &mut r);
        let idx = PoolIndices::sample(&[maps, h, w], &mut r);
        let got = unpool_with_indices(&pooled, &idx).unwrap();
        assert_eq!(got.shape(), &[maps, 2 * h, 2 * w]);
        for m in 0..maps {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    let off = idx.offset_at(m, i / 2, j / 2) as usize;
                    let want = if (i % 2, j % 2) == (off / 2, off % 2) {
                        pooled.get3(m, i / 2, j / 2)
                    } else {
                        0.0
                    };
                    worst = worst.max((got.get3(m, i, j) - want).abs());
                }
            }
        }
    }
    worst
}

pub fn mse_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 5);
    let mut worst = 0.0f64;
    for t in 0..instances {
        let shape: Vec<usize> = if t % 2 == 0 {
            vec![
                r.random_range(1..=3usize),
                r.random_range(1..=5usize),
                r.random_range(1..=5usize),
            ]
        } else {
            vec![
                r.random_range(1..=4usize),
                r.random_range(1..=2usize),
                r.random_range(1..=5usize),
                r.random_range(1..=5usize),
            ]
        };
        let x = random_tensor(&shape, &mut r);
        let z = random_tensor(&shape, &mut r);
        let n = if shape.len() == 4 { shape[0] } else { 1 } as f64;
        let mut sum = 0.0;
        for (a, b) in x.data().iter().zip(z.data()) {
            sum += (a - b) * (a - b);
        }
        worst = worst.max((mse_loss(&x, &z).unwrap() - sum / (2.0 * n)).abs());
    }
    worst
}

pub fn centroid_update_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 6);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = r.random_range(3..=12usize);
        let c = r.random_range(2..=4usize);
        let d = r.random_range(1..=4usize);
        let m = [1.5, 2.0, 3.0][r.random_range(0..3usize)];
        let x = random_matrix(n, d, &mut r);
        // random memberships, rows normalized to 1
        let u = Matrix::from_rows(
            &(0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..c).map(|_| r.random_range(0.05..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let prev = Matrix::zeros(c, d);
        let got = fcm_centroids(&x, &u, m, &prev);
        for j in 0..c {
            for t in 0..d {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..n {
                    num += u.get(i, j).powf(m) * x.get(i, t);
                    den += u.get(i, j).powf(m);
                }
                worst = worst.max((got.get(j, t) - num / den).abs());
            }
        }
    }
    worst
}

pub fn membership_update_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 7);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = r.random_range(3..=10usize);
        let c = r.random_range(2..=4usize);
        let d = r.random_range(1..=3usize);
        let m = [1.5, 2.0, 3.0][r.random_range(0..3usize)];
        let x = random_matrix(n, d, &mut r);
        let centroids = random_matrix(c, d, &mut r);
        let got = fcm_memberships(&x, &centroids, m);
        for i in 0..n {
            let dist: Vec<f64> = (0..c)
                .map(|j| sq_dist(x.row(i), centroids.row(j)).sqrt())
                .collect();
            if dist.iter().any(|&v| v == 0.0) {
                continue; // coincident case covered by unit tests
            }
            for j in 0..c {
                let denom: f64 = dist
                    .iter()
                    .map(|dl| (dist[j] / dl).powf(2.0 / (m - 1.0)))
                    .sum();
                worst = worst.max((got.get(i, j) - 1.0 / denom).abs());
            }
        }
    }
    worst
}

pub fn kmeans_member_means_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 8);
    let mut worst = 0.0f64;
    for trial in 0..instances {
        let n = r.random_range(6..=20usize);
        let c = r.random_range(2..=3usize);
        let x = random_matrix(n, 2, &mut r);
        let res = kmeans(
            &x,
            &ClusterConfig {
                clusters: c,
                seed: trial as u64,
                ..ClusterConfig::default()
            },
        )
        .unwrap();
        for j in 0..c {
            let members: Vec<usize> = (0..n).filter(|&i| res.labels[i] == j).collect();
            assert!(!members.is_empty());
            for t in 0..2 {
                let mean: f64 =
                    members.iter().map(|&i| x.get(i, t)).sum::<f64>() / members.len() as f64;
                worst = worst.max((res.centroids.get(j, t) - mean).abs());
            }
        }
    }
    worst
}

pub fn pca_projection_max_err(instances: usize) -> f64 {
    let mut r = seeded(100, 9);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = r.random_range(5..=20usize);
        let d = r.random_range(2..=6usize);
        let x = random_matrix(n, d, &mut r);
        let model = match pca_fit(&x, 0.9) {
            Ok(m) => m,
            // coincident rows can make the covariance singular to machine
            // precision; skip only genuinely degenerate draws
            Err(_) => continue,
        };
        let proj = pca_transform(&model, &x).unwrap();
        for i in 0..n {
            for j in 0..model.retained {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += (x.get(i, t) - model.mean[t]) * model.components.get(t, j);
                }
                worst = worst.max((proj.get(i, j) - acc).abs());
            }
        }
    }
    worst
}
