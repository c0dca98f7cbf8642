use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{squared_euclidean, DenseMatrix};

/// Centroids plus the index of each point's cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub centroids: DenseMatrix,
    /// `membership[p]` is the cluster of row `p` of the clustered points.
    pub membership: Vec<usize>,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.centroids.rows()
    }

    /// Row indices of the points in cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.membership.len()).filter(|&p| self.membership[p] == c).collect()
    }

    /// Sum of squared distances from each point to its centroid.
    pub fn distortion(&self, points: &DenseMatrix) -> f64 {
        self.membership
            .iter()
            .enumerate()
            .map(|(p, &c)| squared_euclidean(points.row(p), self.centroids.row(c)))
            .sum()
    }
}

/// Index of the nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = squared_euclidean(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &DenseMatrix, centroids: &DenseMatrix) -> Vec<usize> {
    points.iter_rows().map(|p| nearest(p, centroids).0).collect()
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &DenseMatrix, k: usize, rng: &mut R) -> DenseMatrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = points.iter_rows().map(|p| squared_euclidean(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (p, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(p);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // Remaining points coincide with chosen seeds.
            (0..n).find(|p| !chosen.contains(p)).expect("k <= n")
        };
        chosen.push(next);
        for (p, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(points.row(p), points.row(next)));
        }
    }
    DenseMatrix::from_rows(&chosen.iter().map(|&p| points.row(p)).collect::<Vec<_>>())
        .expect("seed rows share a width")
}

/// k-means++ seeding followed by up to `iters` Lloyd rounds.
///
/// A cluster that loses all its points is moved onto the point farthest from
/// its current centroid. The returned membership always matches the returned
/// centroids.
pub fn kmeans(points: &DenseMatrix, k: usize, iters: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientCandidates { needed: k, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut membership = assign(points, &centroids);

    for _ in 0..iters {
        let dim = points.cols();
        let mut sums = DenseMatrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (p, &c) in membership.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(points.row(p)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
                continue;
            }
            let far = (0..n)
                .filter(|&p| !taken[p])
                .map(|p| (p, squared_euclidean(points.row(p), centroids.row(membership[p]))))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            taken[far] = true;
            sums.row_mut(c).copy_from_slice(points.row(far));
        }
        centroids = sums;
        let next = assign(points, &centroids);
        let done = next == membership;
        membership = next;
        if done {
            break;
        }
    }
    Ok(ClusterAssignment { centroids, membership })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> DenseMatrix {
        DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]).unwrap()
    }

    #[test]
    fn one_cluster_per_point() {
        let pts = blobs();
        let a = kmeans(&pts, 4, 100, 3).unwrap();
        assert_eq!(a.distortion(&pts), 0.0);
        let mut m = a.membership.clone();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_blobs_match_exhaustive_optimum() {
        let pts = blobs();
        // Enumerate every 2-partition into non-empty groups and keep the best.
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..15 {
            let cost: f64 = [true, false]
                .iter()
                .map(|&side| {
                    let idx: Vec<usize> = (0..4).filter(|&p| ((mask >> p) & 1 == 1) == side).collect();
                    let mean: Vec<f64> = (0..2)
                        .map(|c| idx.iter().map(|&p| pts.get(p, c)).sum::<f64>() / idx.len() as f64)
                        .collect();
                    idx.iter().map(|&p| squared_euclidean(pts.row(p), &mean)).sum::<f64>()
                })
                .sum();
            if cost < best.0 {
                best = (cost, mask);
            }
        }
        assert_eq!(best.0, 1.0);
        for seed in 0..10 {
            let a = kmeans(&pts, 2, 100, seed).unwrap();
            assert!((a.distortion(&pts) - best.0).abs() < 1e-12);
            assert_eq!(a.membership[0], a.membership[1]);
            assert_eq!(a.membership[2], a.membership[3]);
            assert_ne!(a.membership[0], a.membership[2]);
        }
    }

    #[test]
    fn zero_iterations_assign_to_nearest_seed() {
        let pts = blobs();
        let a = kmeans(&pts, 2, 0, 7).unwrap();
        for p in 0..4 {
            assert_eq!(a.membership[p], nearest(pts.row(p), &a.centroids).0);
        }
        // Seeds are data points.
        for c in a.centroids.iter_rows() {
            assert!(pts.iter_rows().any(|p| p == c));
        }
    }

    #[test]
    fn duplicate_points_and_errors() {
        let pts = DenseMatrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let a = kmeans(&pts, 3, 10, 0).unwrap();
        assert_eq!(a.distortion(&pts), 0.0);
        assert!(kmeans(&pts, 4, 10, 0).is_err());
        assert!(kmeans(&pts, 0, 10, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed_and_consistent() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [((i * 37) % 11) as f64, ((i * 13) % 7) as f64]).collect();
        let pts = DenseMatrix::from_rows(&rows).unwrap();
        let a = kmeans(&pts, 5, 100, 9).unwrap();
        assert_eq!(a, kmeans(&pts, 5, 100, 9).unwrap());
        for p in 0..40 {
            assert_eq!(a.membership[p], nearest(pts.row(p), &a.centroids).0);
        }
    }
}
