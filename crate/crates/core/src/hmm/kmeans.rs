use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<S> {
    pub centroids: Vec<Vec<S>>,
    pub assignments: Vec<usize>,
}

impl<S: Scalar> Clustering<S> {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[inline]
pub(crate) fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Nearest centroid; ties go to the lowest index.
fn nearest<S: Scalar>(x: &[S], centroids: &[Vec<S>]) -> (usize, S) {
    let mut best = (0, S::infinity());
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding.
///
/// `k` is clamped to the number of points. Empty clusters are reseeded from
/// the point farthest from its current centroid.
pub fn kmeans<S: Scalar>(points: &[&[S]], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Clustering<S> {
    assert!(!points.is_empty(), "k-means needs at least one point");
    let k = k.clamp(1, points.len());
    let mut centroids: Vec<Vec<S>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].to_vec());
    let mut d2: Vec<S> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().map(|d| d.to_f64_lossy()).sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                r -= d.to_f64_lossy();
                if r < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].to_vec());
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            let nd = sq_dist(p, centroids.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }

    let dim = points[0].len();
    let mut assignments = vec![0usize; points.len()];
    for iter in 0..max_iters.max(1) {
        let mut changed = false;
        let mut dists = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let (a, d) = nearest(p, &centroids);
            if a != assignments[i] || iter == 0 {
                changed |= a != assignments[i];
                assignments[i] = a;
            }
            dists.push(d);
        }
        let mut sums = vec![vec![S::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
                *s = *s + x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from a cluster that can spare it; lowest index on ties
                let mut far = usize::MAX;
                let mut far_d = S::neg_infinity();
                for (i, &d) in dists.iter().enumerate() {
                    if counts[assignments[i]] > 1 && d > far_d {
                        far = i;
                        far_d = d;
                    }
                }
                let old = assignments[far];
                counts[old] -= 1;
                for (s, &x) in sums[old].iter_mut().zip(points[far].iter()) {
                    *s = *s - x;
                }
                assignments[far] = c;
                counts[c] = 1;
                sums[c] = points[far].to_vec();
                dists[far] = S::zero();
                changed = true;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = S::from_usize_lossy(counts[c]);
                centroids[c] = sums[c].iter().map(|&s| s / n).collect();
            }
        }
        if !changed && iter > 0 {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignments[i] = nearest(p, &centroids).0;
    }
    Clustering { centroids, assignments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn separates_two_blobs() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { 0.0 } else { 10.0 } + (i % 5) as f64 * 0.1]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let c = kmeans(&refs, 2, 50, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(c.sizes(), vec![10, 10]);
        assert!(c.assignments[..10].iter().all(|&a| a == c.assignments[0]));
        assert!(c.assignments[10..].iter().all(|&a| a != c.assignments[0]));
    }

    #[test]
    fn clamps_k_and_fills_clusters() {
        let pts = [vec![1.0f64, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let c = kmeans(&refs, 10, 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(c.centroids.len(), 3);
        assert!(c.centroids.iter().all(|m| m == &vec![1.0, 1.0]));
    }

    #[test]
    fn deterministic_under_seed() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![((i * 7919) % 101) as f64, ((i * 31) % 17) as f64]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let a = kmeans(&refs, 4, 30, &mut ChaCha8Rng::seed_from_u64(11));
        let b = kmeans(&refs, 4, 30, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }
}
